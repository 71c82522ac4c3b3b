"""Vision Transformer regressor from ADP images to (x, y).

Pipeline: zero-pad and cut the ADP into ``p x p`` patches, project each
patch and add a learned position embedding, run post-norm encoder blocks
(multi-head self-attention and a GELU feed-forward, each followed by
Add & LayerNorm), mean-pool the tokens and regress two outputs through an
MLP head.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .adp import AdpMatrix
from .tensor import ContractError, Tensor

Params = dict[str, Tensor]


@dataclass(frozen=True)
class VitConfig:
    input_hw: tuple[int, int] = (32, 32)
    patch_size: int = 6
    embed_dim: int = 64
    n_heads: int = 4
    n_layers: int = 8
    encoder_ffn_mult: int = 2
    mlp_head_sizes: tuple[int, ...] = (128, 64)
    ln_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "input_hw", tuple(int(v) for v in self.input_hw))
        object.__setattr__(self, "mlp_head_sizes", tuple(int(v) for v in self.mlp_head_sizes))
        if self.embed_dim % self.n_heads:
            raise ContractError(
                f"embed_dim {self.embed_dim} is not divisible by n_heads {self.n_heads}")
        if self.patch_size < 1:
            raise ContractError("patch_size must be >= 1")
        if self.n_layers < 0 or self.encoder_ffn_mult < 1:
            raise ContractError("n_layers must be >= 0 and encoder_ffn_mult >= 1")

    @property
    def grid(self) -> tuple[int, int]:
        p = self.patch_size
        return -(-self.input_hw[0] // p), -(-self.input_hw[1] // p)

    @property
    def n_patches(self) -> int:
        gh, gw = self.grid
        return gh * gw

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_hw"] = list(self.input_hw)
        d["mlp_head_sizes"] = list(self.mlp_head_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> VitConfig:
        return cls(**d)


LAYER_KEYS = ("wq", "bq", "wk", "wv", "bv", "wo", "bo", "ln1_g", "ln1_b",
              "w1", "b1", "w2", "b2", "ln2_g", "ln2_b")


def param_shapes(config: VitConfig) -> dict[str, tuple[int, ...]]:
    """Every parameter name and shape, in declaration order."""
    D, p2 = config.embed_dim, config.patch_size ** 2
    F = config.encoder_ffn_mult * D
    shapes: dict[str, tuple[int, ...]] = {
        "patch.w": (p2, D),
        "patch.b": (D,),
        "pos": (config.n_patches, D),
    }
    layer = {"wq": (D, D), "bq": (D,), "wk": (D, D), "wv": (D, D), "bv": (D,),
             "wo": (D, D), "bo": (D,), "ln1_g": (D,), "ln1_b": (D,),
             "w1": (D, F), "b1": (F,), "w2": (F, D), "b2": (D,),
             "ln2_g": (D,), "ln2_b": (D,)}
    for i in range(config.n_layers):
        for k in LAYER_KEYS:
            shapes[f"layers.{i}.{k}"] = layer[k]
    widths = (D, *config.mlp_head_sizes, 2)
    for j in range(len(widths) - 1):
        shapes[f"head.{j}.w"] = (widths[j], widths[j + 1])
        shapes[f"head.{j}.b"] = (widths[j + 1],)
    return shapes


def param_count(config: VitConfig) -> int:
    """Closed-form parameter count."""
    D, p2, N = config.embed_dim, config.patch_size ** 2, config.n_patches
    F = config.encoder_ffn_mult * D
    per_layer = 4 * D * D + 3 * D + 4 * D + 2 * D * F + F + D
    widths = (D, *config.mlp_head_sizes, 2)
    head = sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
    return p2 * D + D + N * D + config.n_layers * per_layer + head


def glorot(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    fan_in, fan_out = shape
    return rng.normal(0.0, math.sqrt(2.0 / (fan_in + fan_out)), size=shape)


def init_params(config: VitConfig, rng: np.random.Generator) -> Params:
    """Gaussian Glorot weights; zero biases and position embeddings; unit LayerNorm gains."""
    params: Params = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.endswith("_g"):
            value = np.ones(shape)
        elif len(shape) == 2 and name != "pos":
            value = glorot(rng, shape)
        else:
            value = np.zeros(shape)
        params[name] = Tensor(value, requires_grad=True, name=name)
    return params


def layer_params(params: Params, i: int) -> dict[str, Tensor]:
    prefix = f"layers.{i}."
    return {k: params[prefix + k] for k in LAYER_KEYS}


def decays(name: str) -> bool:
    """Weight decay applies to weight matrices only."""
    return name != "pos" and name.rsplit(".", 1)[-1].startswith("w")


# --- patching ---------------------------------------------------------------

def _pad(x: np.ndarray, p: int) -> np.ndarray:
    h, w = x.shape[-2:]
    ph, pw = (-h) % p, (-w) % p
    if ph or pw:
        pad = [(0, 0)] * (x.ndim - 2) + [(0, ph), (0, pw)]
        x = np.pad(x, pad)
    return x


def patchify_batch(images: np.ndarray, patch_size: int) -> np.ndarray:
    """``(S, H, W)`` images to ``(S, N, p*p)`` tokens, row-major patch order."""
    x = _pad(np.asarray(images, dtype=np.float64), patch_size)
    S, H, W = x.shape
    p = patch_size
    x = x.reshape(S, H // p, p, W // p, p).transpose(0, 1, 3, 2, 4)
    return x.reshape(S, (H // p) * (W // p), p * p)


def patchify(a: AdpMatrix | np.ndarray, patch_size: int) -> np.ndarray:
    """One ADP to an ``N x p*p`` token matrix (zero-padded bottom/right)."""
    values = a.values if isinstance(a, AdpMatrix) else np.asarray(a)
    return patchify_batch(values[None], patch_size)[0]


def unpatchify(tokens: np.ndarray, hw: tuple[int, int], patch_size: int) -> np.ndarray:
    p = patch_size
    gh, gw = -(-hw[0] // p), -(-hw[1] // p)
    x = tokens.reshape(gh, gw, p, p).transpose(0, 2, 1, 3).reshape(gh * p, gw * p)
    return x[: hw[0], : hw[1]]


# --- model pieces -----------------------------------------------------------

def embed(tokens: np.ndarray | Tensor, params: Params) -> Tensor:
    """Linear patch projection plus one learned position vector per slot."""
    tok = tokens if isinstance(tokens, Tensor) else Tensor(tokens)
    pos = params["pos"]
    if tok.shape[-2] != pos.shape[0]:
        raise ContractError(
            f"{tok.shape[-2]} patches but {pos.shape[0]} position embeddings")
    x = T.add_bias(T.matmul(tok, params["patch.w"]), params["patch.b"])
    return T.add_bias(x, pos)


def attention(x: Tensor, layer: dict[str, Tensor], n_heads: int,
              probe: list | None = None) -> Tensor:
    """Multi-head self-attention over ``(N, D)`` or ``(B, N, D)`` tokens.

    When ``probe`` is a list, the attention matrices ``(B, heads, N, N)`` are
    appended to it.
    """
    single = x.ndim == 2
    if single:
        x = T.reshape(x, (1, *x.shape))
    B, N, D = x.shape
    if D % n_heads:
        raise ContractError(f"embed_dim {D} is not divisible by n_heads {n_heads}")
    dh = D // n_heads

    def heads(t: Tensor) -> Tensor:
        return T.transpose(T.reshape(t, (B, N, n_heads, dh)), (0, 2, 1, 3))

    q = heads(T.add_bias(T.matmul(x, layer["wq"]), layer["bq"]))
    k = heads(T.matmul(x, layer["wk"]))
    v = heads(T.add_bias(T.matmul(x, layer["wv"]), layer["bv"]))
    scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    weights = T.softmax_rows(scores)
    if probe is not None:
        probe.append(weights.data)
    mixed = T.reshape(T.transpose(T.matmul(weights, v), (0, 2, 1, 3)), (B, N, D))
    out = T.add_bias(T.matmul(mixed, layer["wo"]), layer["bo"])
    return T.reshape(out, (N, D)) if single else out


def feed_forward(x: Tensor, layer: dict[str, Tensor]) -> Tensor:
    h = T.gelu(T.add_bias(T.matmul(x, layer["w1"]), layer["b1"]))
    return T.add_bias(T.matmul(h, layer["w2"]), layer["b2"])


def encoder_block(x: Tensor, layer: dict[str, Tensor], n_heads: int,
                  eps: float = 1e-5, probe: list | None = None) -> Tensor:
    y = T.layer_norm(T.add(x, attention(x, layer, n_heads, probe)),
                     layer["ln1_g"], layer["ln1_b"], eps)
    return T.layer_norm(T.add(y, feed_forward(y, layer)), layer["ln2_g"], layer["ln2_b"], eps)


def encode(tokens: np.ndarray | Tensor, params: Params, config: VitConfig,
           probe: list | None = None) -> Tensor:
    """Tokens ``(B, N, p*p)`` to the mean-pooled representation ``(B, D)``."""
    x = embed(tokens, params)
    for i in range(config.n_layers):
        x = encoder_block(x, layer_params(params, i), config.n_heads, config.ln_eps, probe)
    return T.mean(x, axis=-2)


def head(pooled: Tensor, params: Params, config: VitConfig) -> Tensor:
    n = len(config.mlp_head_sizes) + 1
    h = pooled
    for j in range(n):
        h = T.add_bias(T.matmul(h, params[f"head.{j}.w"]), params[f"head.{j}.b"])
        if j < n - 1:
            h = T.gelu(h)
    return h


def forward_tokens(tokens: np.ndarray | Tensor, params: Params, config: VitConfig,
                   probe: list | None = None) -> Tensor:
    """Batched forward pass ``(B, N, p*p) -> (B, 2)``."""
    return head(encode(tokens, params, config, probe), params, config)


def forward(a: AdpMatrix | np.ndarray, params: Params, config: VitConfig) -> tuple[float, float]:
    """Predict ``(x, y)`` in normalised label space for one ADP."""
    values = a.values if isinstance(a, AdpMatrix) else np.asarray(a)
    if values.shape != config.input_hw:
        raise ContractError(f"ADP shape {values.shape} does not match input_hw {config.input_hw}")
    out = forward_tokens(patchify(values, config.patch_size)[None], params, config)
    return float(out.data[0, 0]), float(out.data[0, 1])


@dataclass
class VitRegressor:
    """Bundles a config with its parameters for the training loop."""

    config: VitConfig
    params: Params = field(default_factory=dict)

    @classmethod
    def create(cls, config: VitConfig, seed: int = 0) -> VitRegressor:
        return cls(config, init_params(config, np.random.default_rng(seed)))

    def prepare(self, adps: np.ndarray) -> np.ndarray:
        if adps.shape[1:] != self.config.input_hw:
            raise ContractError(
                f"ADP shape {adps.shape[1:]} does not match input_hw {self.config.input_hw}")
        return patchify_batch(adps, self.config.patch_size)

    def forward_batch(self, inputs: np.ndarray) -> Tensor:
        return forward_tokens(inputs, self.params, self.config)

    def decays(self, name: str) -> bool:
        return decays(name)
