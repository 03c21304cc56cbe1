"""Transformer workload description: shapes, per-layer profiles and footprints.

Every transformer block is modeled as four dense linear layers. Per block, with
``b`` batch, ``s`` sequence length and ``h`` hidden size:

    layer           output act   fwd FLOPs   params   swap units
    Linear_qkv      (b, s, 3h)   6 b s h^2   3 h^2    3
    Linear_htoh     (b, s, h)    2 b s h^2   1 h^2    1
    Linear_hto4h    (b, s, 4h)   8 b s h^2   4 h^2    4
    Linear_4htoh    (b, s, h)    8 b s h^2   4 h^2    1

so a block holds 12 h^2 parameters and the whole model ``p = 12 l h^2``.
Embeddings and layer norms are not modeled.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass


class LayerKind(str, enum.Enum):
    QKV = "Linear_qkv"
    HTOH = "Linear_htoh"
    HTO4H = "Linear_hto4h"
    FOURHTOH = "Linear_4htoh"


BLOCK_LAYOUT = (LayerKind.QKV, LayerKind.HTOH, LayerKind.HTO4H, LayerKind.FOURHTOH)

# (output width / h, FLOP coefficient of b*s*h^2, parameter count / h^2, input width / h)
_KIND_SHAPE = {
    LayerKind.QKV: (3, 6, 3, 1),
    LayerKind.HTOH: (1, 2, 1, 1),
    LayerKind.HTO4H: (4, 8, 4, 1),
    LayerKind.FOURHTOH: (1, 8, 4, 4),
}

# Swap time in multiples of the Linear_htoh swap time, proportional to output width.
SWAP_TIME_UNITS = {kind: shape[0] for kind, shape in _KIND_SHAPE.items()}


@dataclass(frozen=True)
class ModelConfig:
    name: str
    num_layers: int
    num_heads: int
    hidden_dim: int
    batch_size: int = 1
    seq_len: int = 1024
    param_elem_bytes: int = 2
    optimizer_state_multiplier: float = 6.0
    activation_elem_bytes: int = 1
    # Non-swappable per-block FLOPs (e.g. attention scores); always recomputed.
    extra_block_flops: float = 0.0

    def __post_init__(self):
        for field in ("num_layers", "num_heads", "hidden_dim", "batch_size", "seq_len",
                      "param_elem_bytes", "activation_elem_bytes"):
            value = getattr(self, field)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{field} must be an integer >= 1, got {value!r}")
        if self.hidden_dim % self.num_heads:
            raise ValueError(
                f"hidden_dim ({self.hidden_dim}) must be divisible by num_heads ({self.num_heads})"
            )
        if self.optimizer_state_multiplier <= 0:
            raise ValueError("optimizer_state_multiplier must be > 0")
        if self.extra_block_flops < 0:
            raise ValueError("extra_block_flops must be >= 0")

    @property
    def tokens(self) -> int:
        return self.batch_size * self.seq_len

    def with_batch(self, batch_size: int) -> "ModelConfig":
        return dataclasses.replace(self, batch_size=batch_size)


@dataclass(frozen=True)
class LayerProfile:
    block_index: int
    kind: LayerKind
    act_bytes: int
    param_bytes: int
    flops_fwd: float
    swap_time_units: int
    input_bytes: int
    tokens: int
    hidden_dim: int

    @property
    def position(self) -> int:
        """Index of this layer inside its block (0..3)."""
        return BLOCK_LAYOUT.index(self.kind)

    @property
    def label(self) -> str:
        return f"block{self.block_index}.{self.kind.value}"


@dataclass(frozen=True)
class FootprintReport:
    total_params: int
    fp16_param_bytes: int
    fp16_grad_bytes: int
    optimizer_state_bytes: float
    checkpoint_bytes_per_block: int
    total_checkpoint_bytes: int

    @property
    def model_state_bytes(self) -> float:
        """Bytes of params + grads + optimizer states (16p with defaults)."""
        return self.fp16_param_bytes + self.fp16_grad_bytes + self.optimizer_state_bytes


def total_param_count(cfg: ModelConfig) -> int:
    return 12 * cfg.num_layers * cfg.hidden_dim ** 2


def block_param_count(cfg: ModelConfig) -> int:
    return 12 * cfg.hidden_dim ** 2


def _profile(cfg: ModelConfig, block: int, kind: LayerKind) -> LayerProfile:
    out_w, flop_coef, param_coef, in_w = _KIND_SHAPE[kind]
    h = cfg.hidden_dim
    tokens = cfg.tokens
    unit = tokens * h * cfg.activation_elem_bytes
    return LayerProfile(
        block_index=block,
        kind=kind,
        act_bytes=out_w * unit,
        param_bytes=param_coef * h * h * cfg.param_elem_bytes,
        flops_fwd=float(flop_coef * tokens * h * h),
        swap_time_units=SWAP_TIME_UNITS[kind],
        input_bytes=in_w * unit,
        tokens=tokens,
        hidden_dim=h,
    )


def block_profiles(cfg: ModelConfig, block: int = 0) -> list[LayerProfile]:
    return [_profile(cfg, block, kind) for kind in BLOCK_LAYOUT]


def build_layer_profiles(cfg: ModelConfig) -> list[LayerProfile]:
    """Four profiles per block, in forward execution order."""
    return [_profile(cfg, blk, kind) for blk in range(cfg.num_layers) for kind in BLOCK_LAYOUT]


def forward_flops(cfg: ModelConfig) -> float:
    """Total forward FLOPs of one iteration (24 b s h^2 per block plus extras)."""
    per_block = 24.0 * cfg.tokens * cfg.hidden_dim ** 2 + cfg.extra_block_flops
    return per_block * cfg.num_layers


def checkpoint_bytes_per_block(cfg: ModelConfig) -> int:
    return cfg.tokens * cfg.hidden_dim * cfg.activation_elem_bytes


def intra_block_activation_bytes(cfg: ModelConfig) -> int:
    """Sum of all four layer outputs over every block (9 b s h per block)."""
    return 9 * checkpoint_bytes_per_block(cfg) * cfg.num_layers


def footprint(cfg: ModelConfig) -> FootprintReport:
    p = total_param_count(cfg)
    param_bytes = p * cfg.param_elem_bytes
    per_block = checkpoint_bytes_per_block(cfg)
    return FootprintReport(
        total_params=p,
        fp16_param_bytes=param_bytes,
        fp16_grad_bytes=param_bytes,
        optimizer_state_bytes=param_bytes * cfg.optimizer_state_multiplier,
        checkpoint_bytes_per_block=per_block,
        total_checkpoint_bytes=per_block * cfg.num_layers,
    )


# name -> (layers, heads, hidden); sequence length 1024 throughout.
_LADDER = {
    "gpt3-13b": (40, 40, 5120),
    "gpt3-33b": (60, 52, 6656),
    "gpt3-65b": (80, 64, 8192),
    "gpt3-135b": (88, 88, 11264),
    "gpt3-175b": (96, 96, 12288),
    "gpt3-276b": (112, 112, 14336),
    "gpt3-412b": (128, 128, 16384),
    "gpt3-805b": (160, 160, 20480),
}

MODEL_PRESETS = tuple(_LADDER)


def model_preset(name: str, batch_size: int = 1, seq_len: int = 1024, **overrides) -> ModelConfig:
    key = name.lower()
    if key not in _LADDER:
        raise KeyError(f"unknown model preset {name!r}; known: {', '.join(_LADDER)}")
    layers, heads, hidden = _LADDER[key]
    params = dict(
        name=key,
        num_layers=layers,
        num_heads=heads,
        hidden_dim=hidden,
        batch_size=batch_size,
        seq_len=seq_len,
    )
    params.update(overrides)
    return ModelConfig(**params)


def model_ladder(batch_size: int = 1, seq_len: int = 1024) -> list[ModelConfig]:
    """All presets, ascending by parameter count."""
    return [model_preset(name, batch_size, seq_len) for name in _LADDER]
