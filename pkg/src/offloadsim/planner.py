"""Choose which layer outputs to swap out instead of recomputing them.

Every block already keeps one checkpoint (its input) off-GPU; that volume is
``d_start``. On top of it, layers are swapped in a fixed priority order:
every ``Linear_4htoh`` first (it saves four times the recompute per swapped
byte), then the remaining layers in block order. The planner walks the
prefixes of that order, updating the cost terms incrementally, and keeps the
cheapest prefix whose volume stays inside the swap budget.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from itertools import accumulate

from .cost_model import CostBreakdown, WorkloadTotals, evaluate, swap_budget
from .hardware import Direction, HardwareConfig, aggregate_ssd_bw
from .errors import InfeasibleError
from .memory import INBOUND_SHARE, check_gpu_fit
from .workload import (
    LayerKind,
    LayerProfile,
    ModelConfig,
    build_layer_profiles,
    checkpoint_bytes_per_block,
    intra_block_activation_bytes,
)


@dataclass(frozen=True)
class SwapPlan:
    d_start: float
    d_f: float
    swapped_layers: tuple[LayerProfile, ...] = ()
    predicted: CostBreakdown | None = field(default=None, compare=False)
    d_max: float | None = None
    intra_block_bytes: float = 0.0
    mode: str = "auto"

    @property
    def swapped_flops(self) -> float:
        return sum(layer.flops_fwd for layer in self.swapped_layers)

    @property
    def swap_coefficient(self) -> float:
        if self.intra_block_bytes <= 0:
            return 0.0
        return (self.d_f - self.d_start) / self.intra_block_bytes

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "d_start": self.d_start,
            "d_f": self.d_f,
            "d_max": self.d_max,
            "swap_coefficient": self.swap_coefficient,
            "num_swapped_layers": len(self.swapped_layers),
            "swapped_layers": [layer.label for layer in self.swapped_layers],
            "predicted": self.predicted.to_dict() if self.predicted else None,
        }


def swap_benefit_factor(layer: LayerProfile) -> float:
    """Recompute FLOPs saved per unit of swap time, normalized so Linear_htoh == 1."""
    htoh_flops = 2.0 * layer.tokens * layer.hidden_dim ** 2
    return (layer.flops_fwd / layer.swap_time_units) / htoh_flops


def build_priority_queues(profiles):
    high = [p for p in profiles if p.kind is LayerKind.FOURHTOH]
    low = [p for p in profiles if p.kind is not LayerKind.FOURHTOH]
    high.sort(key=lambda p: p.block_index)
    low.sort(key=lambda p: (p.block_index, p.position))
    return high, low


def priority_order(profiles) -> list[LayerProfile]:
    high, low = build_priority_queues(profiles)
    return high + low


def start_volume(model: ModelConfig) -> int:
    """One checkpoint per transformer block."""
    return checkpoint_bytes_per_block(model) * model.num_layers


def _make_plan(model, hw, order, i, mode, d_max=None) -> SwapPlan:
    swapped = tuple(order[:i])
    d_start = start_volume(model)
    d_f = d_start + sum(p.act_bytes for p in swapped)
    predicted = evaluate(model, hw, d_f, sum(p.flops_fwd for p in swapped))
    return SwapPlan(
        d_start=d_start,
        d_f=d_f,
        swapped_layers=swapped,
        predicted=predicted,
        d_max=d_max,
        intra_block_bytes=intra_block_activation_bytes(model),
        mode=mode,
    )


def prefix_costs(model: ModelConfig, hw: HardwareConfig):
    """Predicted ``t_iter`` for every prefix size 0..L using incremental updates.

    Returns ``(order, costs, volumes, d_max)``.
    """
    order = priority_order(build_layer_profiles(model))
    w = WorkloadTotals.from_model(model)
    d = float(start_volume(model))
    start = evaluate(w, hw, d, 0.0)
    _, d_max = swap_budget(w, hw, SwapPlan(d_start=d, d_f=d))

    read_bw = aggregate_ssd_bw(hw, Direction.S2C)
    write_bw = aggregate_ssd_bw(hw, Direction.C2S)
    t_f_comp, t_o = start.t_f_comp, start.t_o_comp
    t_b, t_gpu, t_ssd = start.t_b_comp, start.t_bo_gpu, start.t_bo_ssd
    param_bytes = w.param_bytes

    costs, volumes = [start.t_iter], [d]
    for layer in order:
        d += layer.act_bytes
        t_b -= layer.flops_fwd / hw.gpu_tput
        t_gpu += layer.act_bytes / hw.bw_gpu
        t_ssd += layer.act_bytes / read_bw
        # swapping more also loads the forward links
        t_f = max(t_f_comp, max(param_bytes, d) / hw.bw_gpu, param_bytes / read_bw + d / write_bw)
        costs.append(t_f + max(t_b, t_o, t_gpu, t_ssd))
        volumes.append(d)
    return order, costs, volumes, d_max


def _memory_limit(model, hw, order, granularity, inbound_share) -> int:
    """Longest prefix whose swapped activations still fit the GPU queues."""
    lo, hi = 0, len(order)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        try:
            check_gpu_fit(model, hw, order[:mid], granularity, inbound_share)
        except InfeasibleError:
            hi = mid - 1
        else:
            lo = mid
    return lo


def plan_swaps(model: ModelConfig, hw: HardwareConfig, granularity: str = "layer",
               inbound_share: float = INBOUND_SHARE) -> SwapPlan:
    """Cheapest feasible prefix of the priority order (ties go to fewer swaps).

    A prefix is feasible when its volume stays within the swap budget and
    its swapped activations fit the GPU prefetch queues. Raises
    InfeasibleError when the per-block checkpoints alone do not fit.
    """
    check_gpu_fit(model, hw, (), granularity, inbound_share)
    order, costs, volumes, d_max = prefix_costs(model, hw)
    limit = _memory_limit(model, hw, order, granularity, inbound_share)
    best = 0
    for i in range(1, limit + 1):
        if volumes[i] > d_max:
            break  # volumes only grow
        if costs[i] < costs[best]:
            best = i
    return _make_plan(model, hw, order, best, "auto", d_max)


def plan_for_prefix(model: ModelConfig, hw: HardwareConfig, count: int, mode: str = "fixed") -> SwapPlan:
    order = priority_order(build_layer_profiles(model))
    if not 0 <= count <= len(order):
        raise ValueError(f"prefix size must be within 0..{len(order)}")
    return _make_plan(model, hw, order, count, mode)


def _nearest_prefix(order, extra_bytes: float) -> int:
    cumulative = [0, *accumulate(p.act_bytes for p in order)]
    i = bisect.bisect_left(cumulative, extra_bytes)
    if i >= len(cumulative):
        return len(cumulative) - 1
    if i > 0 and extra_bytes - cumulative[i - 1] <= cumulative[i] - extra_bytes:
        return i - 1
    return i


def plan_for_coefficient(model: ModelConfig, hw: HardwareConfig, coefficient: float) -> SwapPlan:
    """Prefix whose swapped volume is closest to ``coefficient`` of all intra-block bytes."""
    if not 0 <= coefficient <= 1:
        raise ValueError("swap coefficient must be within [0, 1]")
    order = priority_order(build_layer_profiles(model))
    target = coefficient * intra_block_activation_bytes(model)
    return _make_plan(model, hw, order, _nearest_prefix(order, target), "fixed_coefficient")


def plan_for_bytes(model: ModelConfig, hw: HardwareConfig, d_f: float) -> SwapPlan:
    """Prefix whose total swap volume is closest to ``d_f`` (never below ``d_start``)."""
    order = priority_order(build_layer_profiles(model))
    extra = max(d_f - start_volume(model), 0.0)
    return _make_plan(model, hw, order, _nearest_prefix(order, extra), "fixed_d_f")
