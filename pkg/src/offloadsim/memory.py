"""GPU memory budget shared by the planner and the schedule builder.

GPU memory is split into a static reserve and a prefetch FIFO:

* reserve = working set of the largest layer (input + output + params)
  plus the intra-block activations rebuilt during backward recompute;
* FIFO = everything left, split between an inbound queue (prefetched params
  and activations) and an outbound queue (activations and gradients waiting
  for the GPU->CPU link).

A backward block cannot start until all of its inbound units have arrived,
so the inbound queue must hold one block's worth of params and activations.
"""

from __future__ import annotations

from collections.abc import Collection
from dataclasses import dataclass

from .errors import InfeasibleError
from .hardware import HardwareConfig
from .workload import (
    LayerKind,
    LayerProfile,
    ModelConfig,
    block_profiles,
    checkpoint_bytes_per_block,
)

INBOUND_SHARE = 0.5
GRANULARITIES = ("layer", "block")


@dataclass(frozen=True)
class FifoBudget:
    reserved: int
    fifo: float
    inbound: float
    outbound: float


def working_set_bytes(cfg: ModelConfig) -> int:
    return max(p.input_bytes + p.act_bytes + p.param_bytes for p in block_profiles(cfg))


def recompute_buffer_bytes(cfg: ModelConfig) -> int:
    return 9 * checkpoint_bytes_per_block(cfg)


def gpu_reserved_bytes(cfg: ModelConfig) -> int:
    return working_set_bytes(cfg) + recompute_buffer_bytes(cfg)


def _swapped_keys(swapped: Collection[LayerProfile]) -> set[tuple[int, LayerKind]]:
    return {(layer.block_index, layer.kind) for layer in swapped}


def inbound_demand(cfg: ModelConfig, swapped: Collection[LayerProfile], granularity: str = "layer"):
    """Largest inbound set the GPU must hold at once, and which block/layer needs it."""
    keys = _swapped_keys(swapped)
    profiles = block_profiles(cfg)
    block_params = sum(p.param_bytes for p in profiles)
    fwd = block_params if granularity == "block" else max(p.param_bytes for p in profiles)
    worst, where = fwd, "forward parameter prefetch"
    ckpt = checkpoint_bytes_per_block(cfg)
    for blk in range(cfg.num_layers):
        acts = sum(p.act_bytes for p in profiles if (blk, p.kind) in keys)
        need = block_params + ckpt + acts
        if need > worst:
            worst, where = need, f"block {blk} backward prefetch"
    return worst, where


def outbound_demand(cfg: ModelConfig, swapped: Collection[LayerProfile], granularity: str = "layer"):
    """Largest set of bytes one GPU task emits onto the outbound queue."""
    keys = _swapped_keys(swapped)
    profiles = block_profiles(cfg)
    ckpt = checkpoint_bytes_per_block(cfg)
    if granularity == "block":
        grads = sum(p.param_bytes for p in profiles)
        worst, where = grads, "block gradients"
        for blk in range(cfg.num_layers):
            out = ckpt + sum(p.act_bytes for p in profiles if (blk, p.kind) in keys)
            if out > worst:
                worst, where = out, f"block {blk} forward outputs"
        return worst, where
    worst, where = max((p.param_bytes, f"{p.kind.value} gradients") for p in profiles)
    for blk in range(cfg.num_layers):
        for p in profiles:
            out = p.act_bytes if (blk, p.kind) in keys else 0
            if p.kind is LayerKind.QKV:
                out += ckpt
            if out > worst:
                worst, where = out, f"block{blk}.{p.kind.value} forward outputs"
    return worst, where


def check_gpu_fit(
    cfg: ModelConfig,
    hw: HardwareConfig,
    swapped: Collection[LayerProfile] = (),
    granularity: str = "layer",
    inbound_share: float = INBOUND_SHARE,
) -> FifoBudget:
    """Size the FIFO queues; raise InfeasibleError naming the unit that does not fit."""
    if granularity not in GRANULARITIES:
        raise ValueError(f"granularity must be one of {GRANULARITIES}")
    if not 0 < inbound_share < 1:
        raise ValueError("inbound_share must be in (0, 1)")
    reserved = gpu_reserved_bytes(cfg)
    fifo = hw.gpu_mem - reserved
    if fifo <= 0:
        raise InfeasibleError(
            f"GPU working set {reserved:.3e} B (largest layer + recompute buffer) "
            f"exceeds gpu_mem {hw.gpu_mem:.3e} B"
        )
    inbound = fifo * inbound_share
    outbound = fifo - inbound
    need_in, where_in = inbound_demand(cfg, swapped, granularity)
    if need_in > inbound:
        raise InfeasibleError(
            f"{where_in} needs {need_in:.3e} B but the inbound FIFO holds {inbound:.3e} B"
        )
    need_out, where_out = outbound_demand(cfg, swapped, granularity)
    if need_out > outbound:
        raise InfeasibleError(
            f"{where_out} need {need_out:.3e} B but the outbound FIFO holds {outbound:.3e} B"
        )
    return FifoBudget(reserved=reserved, fifo=fifo, inbound=inbound, outbound=outbound)
