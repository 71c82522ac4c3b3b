"""Clustered multipath MIMO-OFDM channel generator.

A single-antenna UE is served by a BS with a half-wavelength ULA.  The
channel on subcarrier ``l`` is a sum over clusters and rays of a complex
gain times the ULA response times a delay phase ramp; stacking all
subcarriers gives the ``n_tx x n_sub`` CSI matrix.

Ray tracing is replaced by a parametric model: cluster 0 is the
geometric line-of-sight cluster, later clusters add exponential excess
delay and uniformly random bearings, rays inside a cluster share its delay
and scatter in angle following a Laplacian.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
CLUSTER_POWER_DECAY = 0.5


class DomainError(ValueError):
    """An input lies outside the valid domain of an operation."""


class ConfigError(ValueError):
    """A configuration field is missing, unknown or invalid."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


_INT_FIELDS = ("n_tx", "n_sub", "n_clusters", "paths_per_cluster", "seed")
_FLOAT_FIELDS = ("carrier_freq_hz", "antenna_spacing_wavelengths", "angle_spread_deg",
                 "delay_spread_samples", "bandwidth_hz")


@dataclass(frozen=True)
class ScenarioConfig:
    n_tx: int = 32
    n_sub: int = 32
    carrier_freq_hz: float = 3.5e9
    antenna_spacing_wavelengths: float = 0.5
    n_clusters: int = 3
    paths_per_cluster: int = 25
    # (x_min, y_min, x_max, y_max) in meters
    area: tuple[float, float, float, float] = (0.0, 0.0, 200.0, 200.0)
    bs_position: tuple[float, float] = (100.0, 0.0)
    angle_spread_deg: float = 5.0
    delay_spread_samples: float = 2.0
    bandwidth_hz: float = 20e6
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "area", tuple(float(v) for v in self.area))
        object.__setattr__(self, "bs_position", tuple(float(v) for v in self.bs_position))
        self.validate()

    def validate(self) -> None:
        for name in ("n_tx", "n_sub"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 2:
                raise ConfigError(name, "must be an integer >= 2")
        for name in ("n_clusters", "paths_per_cluster"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ConfigError(name, "must be an integer >= 1")
        if len(self.area) != 4:
            raise ConfigError("area", "expected [x_min, y_min, x_max, y_max]")
        if not (self.area[2] > self.area[0] and self.area[3] > self.area[1]):
            raise ConfigError("area", "width and height must be strictly positive")
        if len(self.bs_position) != 2:
            raise ConfigError("bs_position", "expected [x, y]")
        for name in ("carrier_freq_hz", "antenna_spacing_wavelengths", "bandwidth_hz"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be positive")
        for name in ("angle_spread_deg", "delay_spread_samples"):
            if not getattr(self, name) >= 0:
                raise ConfigError(name, "must be non-negative")

    @property
    def meters_per_sample(self) -> float:
        return SPEED_OF_LIGHT / self.bandwidth_hz

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["area"] = list(self.area)
        d["bs_position"] = list(self.bs_position)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> ScenarioConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown scenario field")
        kwargs = dict(data)
        for name, value in data.items():
            if name in _INT_FIELDS:
                if isinstance(value, bool) or not isinstance(value, (int, float)) \
                        or not float(value).is_integer():
                    raise ConfigError(name, f"expected an integer, got {value!r}")
                kwargs[name] = int(value)
            elif name in _FLOAT_FIELDS:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(name, f"expected a number, got {value!r}")
                kwargs[name] = float(value)
            elif name in ("area", "bs_position"):
                if not isinstance(value, (list, tuple)) or not all(
                        isinstance(v, (int, float)) for v in value):
                    raise ConfigError(name, f"expected a list of numbers, got {value!r}")
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> ScenarioConfig:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("<file>", f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError("<file>", f"{path}: expected a JSON object")
        return cls.from_dict(data)

    @classmethod
    def preset(cls, name: str, **overrides) -> ScenarioConfig:
        """Square scenario by name: default, outdoor, indoor or viwi."""
        presets = {
            "outdoor": dict(n_tx=64, n_sub=64, carrier_freq_hz=3.5e9,
                            area=(0.0, 0.0, 400.0, 400.0), bs_position=(200.0, 0.0)),
            "indoor": dict(n_tx=32, n_sub=32, carrier_freq_hz=60e9, bandwidth_hz=400e6,
                           area=(0.0, 0.0, 20.0, 20.0), bs_position=(10.0, 0.0)),
            "viwi": dict(n_tx=60, n_sub=60, carrier_freq_hz=3.5e9,
                         area=(0.0, 0.0, 200.0, 200.0), bs_position=(100.0, 0.0)),
            "default": {},
        }
        if name not in presets:
            raise ConfigError("preset", f"unknown preset {name!r}; choose from {sorted(presets)}")
        return cls(**{**presets[name], **overrides})


@dataclass(frozen=True)
class PathParams:
    gain: complex
    aoa_rad: float
    delay_samples: float


@dataclass
class ChannelSample:
    h: np.ndarray
    position: tuple[float, float]
    scenario_id: str = ""


def steering_vector(aoa_rad: float, n_tx: int, spacing_ratio: float = 0.5) -> np.ndarray:
    """ULA response; element ``t`` carries phase ``-2*pi*t*d*cos(theta)/lambda``."""
    if n_tx < 1:
        raise DomainError(f"n_tx must be >= 1, got {n_tx}")
    t = np.arange(n_tx)
    out = np.exp(-2j * np.pi * t * spacing_ratio * math.cos(aoa_rad))
    out[0] = 1.0 + 0.0j
    return out


def _inside(area: Sequence[float], pos: Sequence[float]) -> bool:
    return area[0] <= pos[0] <= area[2] and area[1] <= pos[1] <= area[3]


def sample_paths(
    config: ScenarioConfig, ue_pos: Sequence[float], rng: np.random.Generator
) -> list[PathParams]:
    """Draw ``n_clusters * paths_per_cluster`` rays for a UE at ``ue_pos``."""
    if not _inside(config.area, ue_pos):
        raise DomainError(f"UE position {tuple(ue_pos)} lies outside area {config.area}")
    dx = ue_pos[0] - config.bs_position[0]
    dy = ue_pos[1] - config.bs_position[1]
    los_delay = math.hypot(dx, dy) / config.meters_per_sample
    if los_delay >= config.n_sub:
        raise DomainError(
            f"line-of-sight delay {los_delay:.2f} samples exceeds n_sub={config.n_sub}; "
            "increase bandwidth_hz or shrink the area"
        )
    bearing = math.atan2(dy, dx)

    powers = CLUSTER_POWER_DECAY ** np.arange(config.n_clusters)
    powers = powers / powers.sum()
    spread = math.radians(config.angle_spread_deg)
    R = config.paths_per_cluster

    paths: list[PathParams] = []
    for k in range(config.n_clusters):
        if k == 0:
            delay, center = los_delay, bearing
        else:
            delay = los_delay
            if config.delay_spread_samples > 0:
                # rejection keeps every ray inside one OFDM symbol
                while True:
                    delay = los_delay + rng.exponential(config.delay_spread_samples)
                    if delay < config.n_sub:
                        break
            center = rng.uniform(0.0, math.pi)
        aoas = rng.laplace(center, spread, size=R) if spread > 0 else np.full(R, center)
        sigma = math.sqrt(powers[k] / R / 2.0)
        gains = rng.normal(0.0, sigma, size=R) + 1j * rng.normal(0.0, sigma, size=R)
        paths.extend(
            PathParams(complex(g), float(a), float(delay)) for g, a in zip(gains, aoas)
        )
    return paths


def subcarrier_response(
    paths: Sequence[PathParams], l: int, n_sub: int, n_tx: int, spacing: float = 0.5
) -> np.ndarray:
    """Channel vector ``h[l]`` (1-based subcarrier index) across the array."""
    if not 1 <= l <= n_sub:
        raise DomainError(f"subcarrier index {l} outside 1..{n_sub}")
    h = np.zeros(n_tx, dtype=np.complex128)
    for p in paths:
        h += p.gain * steering_vector(p.aoa_rad, n_tx, spacing) * np.exp(
            -2j * np.pi * l * p.delay_samples / n_sub
        )
    return h


def channel_matrix(
    paths: Sequence[PathParams], n_tx: int, n_sub: int, spacing: float = 0.5
) -> np.ndarray:
    """All subcarrier responses at once, column ``l-1`` holding ``h[l]``."""
    if not paths:
        return np.zeros((n_tx, n_sub), dtype=np.complex128)
    gains = np.array([p.gain for p in paths])
    cos = np.cos([p.aoa_rad for p in paths])
    delays = np.array([p.delay_samples for p in paths])
    steer = np.exp(-2j * np.pi * np.outer(np.arange(n_tx), spacing * cos))  # (n_tx, P)
    steer[0, :] = 1.0
    ramp = np.exp(-2j * np.pi * np.outer(delays, np.arange(1, n_sub + 1)) / n_sub)  # (P, n_sub)
    return (steer * gains) @ ramp


def generate_channel(
    config: ScenarioConfig, ue_pos: Sequence[float], rng: np.random.Generator,
    scenario_id: str = "",
) -> ChannelSample:
    paths = sample_paths(config, ue_pos, rng)
    h = channel_matrix(paths, config.n_tx, config.n_sub, config.antenna_spacing_wavelengths)
    return ChannelSample(h=h, position=(float(ue_pos[0]), float(ue_pos[1])),
                         scenario_id=scenario_id)


def generate_dataset(
    config: ScenarioConfig, n_samples: int, seed: int | None = None,
    scenario_id: str = "synthetic",
) -> list[ChannelSample]:
    """UEs uniformly over the area; sample ``i`` uses its own stream ``seed + i``."""
    if n_samples < 1:
        raise DomainError(f"n_samples must be >= 1, got {n_samples}")
    seed = config.seed if seed is None else seed
    x0, y0, x1, y1 = config.area
    out = []
    for i in range(n_samples):
        rng = np.random.default_rng(seed + i)
        pos = (rng.uniform(x0, x1), rng.uniform(y0, y1))
        out.append(generate_channel(config, pos, rng, scenario_id))
    return out
