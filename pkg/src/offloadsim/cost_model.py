"""Closed-form iteration time for one fine-tuning step.

The step is a forward stage followed by an overlapped backward+optimizer
stage. Each stage lasts as long as its slowest resource:

    T_iter = T_f + T_bo
    T_f    = max(F / Tput,  max(2p, D) / BW_gpu,  2p / R + D / W)
    T_bo   = max(2F / Tput + RC,  p / CPU,  max(2p, 2p + D) / BW_gpu,
                 (14p + D) / R + 14p / W)

with ``F`` forward FLOPs, ``D`` the checkpoint bytes swapped out during the
forward pass (read back during backward), ``R``/``W`` the aggregate SSD read
and write bandwidths, and ``RC`` the recompute time of layers whose outputs
were not swapped. Byte counts assume fp16 params and grads (2p each) and
fp32 optimizer states (12p), scaled by the model's element sizes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Protocol, Union

from .hardware import Direction, HardwareConfig, aggregate_ssd_bw
from .workload import ModelConfig, forward_flops, total_param_count


@dataclass(frozen=True)
class WorkloadTotals:
    """Aggregate quantities the cost model needs; lets callers bypass ModelConfig."""

    params: float
    forward_flops: float
    param_elem_bytes: float = 2
    optimizer_state_multiplier: float = 6.0

    @property
    def param_bytes(self) -> float:
        return self.params * self.param_elem_bytes

    @property
    def optimizer_bytes(self) -> float:
        return self.param_bytes * self.optimizer_state_multiplier

    @classmethod
    def from_model(cls, cfg: ModelConfig) -> "WorkloadTotals":
        return cls(
            params=float(total_param_count(cfg)),
            forward_flops=forward_flops(cfg),
            param_elem_bytes=cfg.param_elem_bytes,
            optimizer_state_multiplier=cfg.optimizer_state_multiplier,
        )


Workload = Union[ModelConfig, WorkloadTotals]


class PlanLike(Protocol):
    d_f: float
    swapped_flops: float


def _totals(model: Workload) -> WorkloadTotals:
    return model if isinstance(model, WorkloadTotals) else WorkloadTotals.from_model(model)


FORWARD_TAGS = ("gpu_compute", "gpu_link", "ssd")
BACKWARD_TAGS = ("gpu_compute", "cpu_optimizer", "gpu_link", "ssd")


def _argmax(values, tags) -> str:
    # first maximal term wins ties
    best = max(values)
    return tags[values.index(best)]


@dataclass(frozen=True)
class CostBreakdown:
    t_f_comp: float
    t_f_gpu: float
    t_f_ssd: float
    t_f: float
    t_b_comp: float
    t_o_comp: float
    t_bo_gpu: float
    t_bo_ssd: float
    t_bo: float
    t_iter: float
    bottleneck_f: str
    bottleneck_bo: str
    # per-direction link terms behind t_f_gpu / t_bo_gpu
    t_f_c2g: float = 0.0
    t_f_g2c: float = 0.0
    t_bo_c2g: float = 0.0
    t_bo_g2c: float = 0.0
    d_f: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def forward_time(model: Workload, hw: HardwareConfig, d_f: float):
    """Returns ``(t_f, t_f_comp, t_f_gpu, t_f_ssd)``."""
    if d_f < 0:
        raise ValueError("d_f must be >= 0")
    w = _totals(model)
    t_comp = w.forward_flops / hw.gpu_tput
    t_gpu = max(w.param_bytes / hw.bw_gpu, d_f / hw.bw_gpu)
    t_ssd = (w.param_bytes / aggregate_ssd_bw(hw, Direction.S2C)
             + d_f / aggregate_ssd_bw(hw, Direction.C2S))
    return max(t_comp, t_gpu, t_ssd), t_comp, t_gpu, t_ssd


def recompute_time(model: Workload, hw: HardwareConfig, swapped_flops: float) -> float:
    w = _totals(model)
    return max(w.forward_flops - swapped_flops, 0.0) / hw.gpu_tput


def _backward(w: WorkloadTotals, hw: HardwareConfig, d_f: float, swapped_flops: float):
    t_f_comp = w.forward_flops / hw.gpu_tput
    t_b_comp = 2 * t_f_comp + max(w.forward_flops - swapped_flops, 0.0) / hw.gpu_tput
    t_o_comp = w.params / hw.cpu_opt_tput
    state_bytes = w.optimizer_bytes + w.param_bytes  # 12p + 2p
    t_bo_gpu = max(w.param_bytes, w.param_bytes + d_f) / hw.bw_gpu
    t_bo_ssd = ((state_bytes + d_f) / aggregate_ssd_bw(hw, Direction.S2C)
                + state_bytes / aggregate_ssd_bw(hw, Direction.C2S))
    t_bo = max(t_b_comp, t_o_comp, t_bo_gpu, t_bo_ssd)
    return t_bo, t_b_comp, t_o_comp, t_bo_gpu, t_bo_ssd


def backward_optimizer_time(model: Workload, hw: HardwareConfig, plan: PlanLike):
    """Returns ``(t_bo, t_b_comp, t_o_comp, t_bo_gpu, t_bo_ssd)``."""
    return _backward(_totals(model), hw, plan.d_f, plan.swapped_flops)


def evaluate(model: Workload, hw: HardwareConfig, d_f: float, swapped_flops: float = 0.0) -> CostBreakdown:
    """Full breakdown for ``d_f`` swapped bytes whose layers account for ``swapped_flops``."""
    w = _totals(model)
    t_f, t_f_comp, t_f_gpu, t_f_ssd = forward_time(w, hw, d_f)
    t_bo, t_b_comp, t_o_comp, t_bo_gpu, t_bo_ssd = _backward(w, hw, d_f, swapped_flops)
    return CostBreakdown(
        t_f_comp=t_f_comp,
        t_f_gpu=t_f_gpu,
        t_f_ssd=t_f_ssd,
        t_f=t_f,
        t_b_comp=t_b_comp,
        t_o_comp=t_o_comp,
        t_bo_gpu=t_bo_gpu,
        t_bo_ssd=t_bo_ssd,
        t_bo=t_bo,
        t_iter=t_f + t_bo,
        bottleneck_f=_argmax([t_f_comp, t_f_gpu, t_f_ssd], FORWARD_TAGS),
        bottleneck_bo=_argmax([t_b_comp, t_o_comp, t_bo_gpu, t_bo_ssd], BACKWARD_TAGS),
        t_f_c2g=w.param_bytes / hw.bw_gpu,
        t_f_g2c=d_f / hw.bw_gpu,
        t_bo_c2g=(w.param_bytes + d_f) / hw.bw_gpu,
        t_bo_g2c=w.param_bytes / hw.bw_gpu,
        d_f=float(d_f),
    )


def iteration_time(model: Workload, hw: HardwareConfig, plan: PlanLike) -> CostBreakdown:
    return evaluate(model, hw, plan.d_f, plan.swapped_flops)


def swap_budget(model: Workload, hw: HardwareConfig, plan_at_start: PlanLike):
    """Returns ``(t_max, d_max)``: the recompute time left to hide and the byte cap it buys.

    The cap is the starting volume plus what the slowest swap link moves in ``t_max``.
    """
    _, t_b_comp, _, t_bo_gpu, t_bo_ssd = backward_optimizer_time(model, hw, plan_at_start)
    t_max = t_b_comp - max(t_bo_gpu, t_bo_ssd)
    if t_max <= 0:
        return t_max, float(plan_at_start.d_f)
    bw = min(hw.bw_gpu, aggregate_ssd_bw(hw, Direction.C2S), aggregate_ssd_bw(hw, Direction.S2C))
    return t_max, plan_at_start.d_f + t_max * bw
