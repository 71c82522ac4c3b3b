"""Angle-delay profile (ADP) of a CSI matrix.

``A = |V^H H F|`` where ``V`` is a half-shifted spatial DFT over the array
and ``F`` a plain DFT over subcarriers.  Under the transform as written a
ray at broadside lands in row ``n_tx/2`` and a ray with integer delay ``n``
lands in column ``(-n) mod n_sub``; :func:`expected_bin` gives the
continuous prediction for any ray.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

NORM_NONE = "none"
NORM_MAX = "max"
NORM_ZERO = "max-skipped-zero"


@dataclass(frozen=True)
class AdpMatrix:
    values: np.ndarray
    norm_mode: str = NORM_NONE

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@lru_cache(maxsize=None)
def _dft_v(n_tx: int) -> np.ndarray:
    z = np.arange(n_tx)
    m = np.exp(-2j * np.pi * np.outer(z, z - n_tx / 2) / n_tx) / math.sqrt(n_tx)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def _dft_f(n_sub: int) -> np.ndarray:
    z = np.arange(n_sub)
    m = np.exp(-2j * np.pi * np.outer(z, z) / n_sub) / math.sqrt(n_sub)
    m.setflags(write=False)
    return m


def dft_v(n_tx: int) -> np.ndarray:
    """Spatial DFT, entry ``(z, q) = exp(-2j*pi*z*(q - n_tx/2)/n_tx) / sqrt(n_tx)``.

    The returned array is cached and read-only.
    """
    if n_tx < 1:
        raise ValueError(f"n_tx must be >= 1, got {n_tx}")
    return _dft_v(int(n_tx))


def dft_f(n_sub: int) -> np.ndarray:
    """Frequency DFT, entry ``(z, q) = exp(-2j*pi*z*q/n_sub) / sqrt(n_sub)`` (cached, read-only)."""
    if n_sub < 1:
        raise ValueError(f"n_sub must be >= 1, got {n_sub}")
    return _dft_f(int(n_sub))


def beamspace(h: np.ndarray) -> np.ndarray:
    """Complex ``V^H H F``; accepts one matrix or a stack ``(..., n_tx, n_sub)``."""
    h = np.asarray(h, dtype=np.complex128)
    n_tx, n_sub = h.shape[-2:]
    return dft_v(n_tx).conj().T @ h @ dft_f(n_sub)


def compute_adp(h: np.ndarray) -> AdpMatrix:
    return AdpMatrix(np.abs(beamspace(h)), NORM_NONE)


def compute_adp_batch(h_stack: np.ndarray, normalize: bool = True) -> np.ndarray:
    """ADPs of a ``(S, n_tx, n_sub)`` stack as a real ``(S, n_tx, n_sub)`` array."""
    a = np.abs(beamspace(h_stack))
    if normalize:
        peak = a.reshape(a.shape[0], -1).max(axis=1)
        peak[peak == 0] = 1.0
        a = a / peak[:, None, None]
    return a


def normalize_adp(a: AdpMatrix) -> AdpMatrix:
    """Scale so the peak entry is 1; an all-zero profile is returned unchanged."""
    peak = float(a.values.max()) if a.values.size else 0.0
    if peak == 0.0:
        return AdpMatrix(a.values.copy(), NORM_ZERO)
    return AdpMatrix(a.values / peak, NORM_MAX)


def expected_bin(aoa_rad: float, delay_samples: float, n_tx: int, n_sub: int,
                 spacing: float = 0.5) -> tuple[float, float]:
    """Continuous (row, column) where a single ray's energy peaks, modulo the grid."""
    row = (n_tx / 2 + n_tx * spacing * math.cos(aoa_rad)) % n_tx
    col = (-delay_samples) % n_sub
    return row, col
