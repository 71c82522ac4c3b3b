"""Reference predictors for comparison against the ViT."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .vit import glorot


def centroid_predict(train_pos: np.ndarray, n: int) -> np.ndarray:
    """Predict the training-split mean position for every sample."""
    return np.tile(np.asarray(train_pos, dtype=np.float64).mean(axis=0), (n, 1))


@dataclass
class MlpRegressor:
    """Flattened ADP -> hidden layers -> (x, y), GELU between layers."""

    input_dim: int
    hidden: tuple[int, ...] = (128, 64)
    params: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def create(cls, input_dim: int, hidden=(128, 64), seed: int = 0) -> MlpRegressor:
        rng = np.random.default_rng(seed)
        widths = (input_dim, *hidden, 2)
        params = {}
        for j, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            params[f"mlp.{j}.w"] = Tensor(glorot(rng, (a, b)), requires_grad=True)
            params[f"mlp.{j}.b"] = Tensor(np.zeros(b), requires_grad=True)
        return cls(input_dim, tuple(hidden), params)

    def prepare(self, adps: np.ndarray) -> np.ndarray:
        return np.asarray(adps, dtype=np.float64).reshape(len(adps), -1)

    def forward_batch(self, inputs: np.ndarray) -> Tensor:
        h = Tensor(inputs)
        n = len(self.hidden) + 1
        for j in range(n):
            h = T.add_bias(T.matmul(h, self.params[f"mlp.{j}.w"]), self.params[f"mlp.{j}.b"])
            if j < n - 1:
                h = T.gelu(h)
        return h

    def decays(self, name: str) -> bool:
        return name.endswith(".w")
