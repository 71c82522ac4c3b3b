"""Splits, loss, AdamW and the epoch loop."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import tensor as T
from .channel import ConfigError, DomainError
from .tensor import ContractError, GradTape, Tensor

log = logging.getLogger(__name__)

DEFAULT_SPLIT = (0.64, 0.16, 0.20)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 64
    seed: int = 0
    split: tuple[float, float, float] = DEFAULT_SPLIT
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    warmup_steps: int = 100

    def __post_init__(self):
        object.__setattr__(self, "split", tuple(float(v) for v in self.split))
        if len(self.split) != 3 or any(v < 0 for v in self.split):
            raise ConfigError("split", "expected three non-negative fractions")
        if not math.isclose(sum(self.split), 1.0, rel_tol=0, abs_tol=1e-12):
            raise ConfigError("split", f"fractions sum to {sum(self.split)!r}, not 1")
        if self.epochs < 1:
            raise ConfigError("epochs", "must be >= 1")
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate", "must be >= 0")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay", "must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size", "must be >= 1")
        if self.warmup_steps < 0:
            raise ConfigError("warmup_steps", "must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split"] = list(self.split)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> TrainConfig:
        known = {f for f in cls.__dataclass_fields__}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown training field")
        kwargs = dict(data)
        for name in ("epochs", "batch_size", "seed", "warmup_steps"):
            if name in kwargs:
                v = kwargs[name]
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not float(v).is_integer():
                    raise ConfigError(name, f"expected an integer, got {v!r}")
                kwargs[name] = int(v)
        for name in ("learning_rate", "weight_decay", "beta1", "beta2", "adam_eps"):
            if name in kwargs and (isinstance(kwargs[name], bool)
                                   or not isinstance(kwargs[name], (int, float))):
                raise ConfigError(name, f"expected a number, got {kwargs[name]!r}")
        return cls(**kwargs)


class LabelScaler:
    """Per-axis min-max scaling of positions to [0, 1]."""

    def __init__(self, lo: Sequence[float], hi: Sequence[float]):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        span = self.hi - self.lo
        self.span = np.where(span > 0, span, 1.0)

    @classmethod
    def fit(cls, positions: np.ndarray) -> LabelScaler:
        positions = np.asarray(positions, dtype=np.float64)
        return cls(positions.min(axis=0), positions.max(axis=0))

    def transform(self, positions: np.ndarray) -> np.ndarray:
        return (np.asarray(positions, dtype=np.float64) - self.lo) / self.span

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        return np.asarray(scaled, dtype=np.float64) * self.span + self.lo

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> LabelScaler:
        return cls(d["lo"], d["hi"])


def split_sizes(n: int, split: Sequence[float] = DEFAULT_SPLIT) -> tuple[int, int, int]:
    """Floor each share; the remainder goes to the training part."""
    if n < 5:
        raise DomainError(f"need at least 5 samples to split, got {n}")
    n_val = math.floor(n * split[1] + 1e-9)
    n_test = math.floor(n * split[2] + 1e-9)
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise DomainError(f"{n} samples leave an empty partition under split {tuple(split)}")
    return n_train, n_val, n_test


def split_indices(n: int, split: Sequence[float] = DEFAULT_SPLIT, seed: int = 0
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_train, n_val, _ = split_sizes(n, split)
    order = np.random.default_rng(seed).permutation(n)
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def split_dataset(samples: Sequence, split: Sequence[float] = DEFAULT_SPLIT, seed: int = 0):
    """Shuffle deterministically and cut into (train, val, test) lists."""
    tr, va, te = split_indices(len(samples), split, seed)
    return [samples[i] for i in tr], [samples[i] for i in va], [samples[i] for i in te]


def mse_loss(pred: Tensor, target: np.ndarray | Tensor) -> Tensor:
    """Mean over batch and both coordinates of the squared error."""
    target = target if isinstance(target, Tensor) else Tensor(target)
    if pred.shape != target.shape:
        raise ContractError(f"mse_loss: prediction {pred.shape} vs target {target.shape}")
    diff = T.sub(pred, target)
    return T.mean(T.mul(diff, diff))


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient for parameter {name!r}; step aborted")
        self.parameter = name


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def optimizer_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    t: int,
    config: TrainConfig,
    decays=lambda name: True,
    lr: float | None = None,
) -> tuple[dict[str, Tensor], AdamState]:
    """One AdamW update at (1-based) step ``t``; returns fresh parameter tensors.

    Decoupled decay ``p -= lr * wd * p`` is applied to names accepted by
    ``decays``, separately from the adaptive step.  ``lr`` overrides the
    configured rate for this step only.
    """
    for name, g in grads.items():
        if name not in params or g.shape != params[name].shape:
            raise ContractError(f"gradient for {name!r} does not match its parameter")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)
    lr = config.learning_rate if lr is None else lr
    wd = config.weight_decay
    b1, b2, eps = config.beta1, config.beta2, config.adam_eps
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_params: dict[str, Tensor] = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            new_params[name] = p
            continue
        m = b1 * state.m.get(name, 0.0) + (1.0 - b1) * g
        v = b2 * state.v.get(name, 0.0) + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        value = p.data
        if lr:
            value = value - lr * (m / c1) / (np.sqrt(v / c2) + eps)
            if wd and decays(name):
                value = value - lr * wd * p.data
        new_params[name] = Tensor(value, requires_grad=True, name=name)
    state.step = t
    return new_params, state


class Regressor(Protocol):
    params: dict[str, Tensor]

    def prepare(self, adps: np.ndarray) -> np.ndarray: ...

    def forward_batch(self, inputs: np.ndarray) -> Tensor: ...

    def decays(self, name: str) -> bool: ...


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_rmse_m: float


@dataclass
class TrainResult:
    params: dict[str, Tensor]
    history: list[EpochRecord]
    best_epoch: int
    scaler: LabelScaler


class TrainingDiverged(FloatingPointError):
    def __init__(self, message: str, last_good: dict[str, Tensor], history: list[EpochRecord]):
        super().__init__(message)
        self.last_good = last_good
        self.history = history


def warmup_lr(config: TrainConfig, step: int) -> float:
    """Linear ramp to the configured rate over the first ``warmup_steps`` steps."""
    if step >= config.warmup_steps:
        return config.learning_rate
    return config.learning_rate * step / config.warmup_steps


def predict(model: Regressor, inputs: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Forward pass without recording, in normalised label space."""
    outs = [model.forward_batch(inputs[i:i + batch_size]).data
            for i in range(0, len(inputs), batch_size)]
    return np.concatenate(outs, axis=0) if outs else np.zeros((0, 2))


def _rmse_m(pred_m: np.ndarray, true_m: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.sum((pred_m - true_m) ** 2, axis=1))))


def train(
    model: Regressor,
    train_adps: np.ndarray,
    train_pos: np.ndarray,
    val_adps: np.ndarray,
    val_pos: np.ndarray,
    config: TrainConfig,
    scaler: LabelScaler | None = None,
) -> TrainResult:
    """Train ``model`` and return the parameters of the best validation epoch.

    ADPs are ``(S, H, W)`` arrays, positions ``(S, 2)`` in meters.  Labels are
    scaled with ``scaler`` (fit on the training positions when omitted).
    """
    if train_adps.shape[1:] != val_adps.shape[1:]:
        raise ContractError(
            f"train ADPs {train_adps.shape[1:]} and validation ADPs {val_adps.shape[1:]} differ")
    scaler = scaler or LabelScaler.fit(train_pos)
    x_train = model.prepare(train_adps)
    x_val = model.prepare(val_adps)
    y_train = scaler.transform(train_pos)

    rng = np.random.default_rng(config.seed)
    state = AdamState()
    history: list[EpochRecord] = []
    best = (math.inf, 0, dict(model.params))
    step = 0
    n = len(x_train)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            with GradTape() as tape:
                loss = mse_loss(model.forward_batch(x_train[idx]), y_train[idx])
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(
                    f"loss became {value} at epoch {epoch}", best[2], history)
            named = backward_named(tape, loss, model.params)
            step += 1
            try:
                model.params, state = optimizer_step(
                    model.params, named, state, step, config, model.decays,
                    lr=warmup_lr(config, step))
            except NonFiniteGradient as exc:
                raise TrainingDiverged(str(exc), best[2], history) from exc
            loss_sum += value * len(idx)
        val_pred = scaler.inverse(predict(model, x_val))
        val_rmse = _rmse_m(val_pred, val_pos)
        record = EpochRecord(epoch, loss_sum / n, val_rmse)
        history.append(record)
        log.info("epoch %d train_mse %.6g val_rmse_m %.4f", epoch, record.train_mse, val_rmse)
        if not math.isfinite(val_rmse):
            raise TrainingDiverged(f"validation RMSE became {val_rmse} at epoch {epoch}",
                                   best[2], history)
        if val_rmse < best[0]:
            best = (val_rmse, epoch, dict(model.params))
    model.params = best[2]
    return TrainResult(best[2], history, best[1], scaler)


def backward_named(tape: GradTape, loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    grads = T.backward(tape, loss, wrt=params.values())
    return {name: grads[p] for name, p in params.items()}


def write_history_csv(history: Sequence[EpochRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,train_mse,val_rmse_m\n")
        for r in history:
            fh.write(f"{r.epoch},{r.train_mse!r},{r.val_rmse_m!r}\n")


def load_train_config(path: str | Path) -> tuple[TrainConfig, dict]:
    """Read a JSON training config; an optional ``model`` object overrides ViT fields."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError("<file>", f"{path}: expected a JSON object")
    model = data.pop("model", {}) or {}
    if not isinstance(model, dict):
        raise ConfigError("model", "expected a JSON object")
    return TrainConfig.from_dict(data), model
