"""Largest trainable model and throughput-per-dollar under placement policies.

Two policies decide where each class of bytes lives:

ZERO_INFINITY_LIKE keeps model states on SSD and checkpoints in CPU memory.
It also needs a large pinned CPU region that grows with model size.

FUYOU_LIKE keeps model states and checkpoints on SSD. It needs only a small
CPU-side staging area.

The per-parameter constants are calibration values, not measurements. They
reproduce the published ladder points at batch size 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .cost_model import CostBreakdown
from .hardware import HardwareConfig
from .workload import ModelConfig, block_param_count, footprint, intra_block_activation_bytes


class PolicyId(str, enum.Enum):
    ZERO_INFINITY_LIKE = "ZERO_INFINITY_LIKE"
    FUYOU_LIKE = "FUYOU_LIKE"


class Bottleneck(str, enum.Enum):
    SSD = "SSD"
    CPU_MEM = "CPU_MEM"
    GPU_MEM = "GPU_MEM"


@dataclass(frozen=True)
class PlacementPolicy:
    id: PolicyId
    checkpoint_location: str  # "cpu" or "ssd"
    cpu_base_bytes: float
    cpu_bytes_per_param: float
    # GPU: runtime context plus a few blocks of fp16 params in flight, plus one
    # block's intra-layer activations (never offloaded)
    gpu_context_bytes: float = 1e9
    gpu_param_blocks: int = 4

    def locations(self) -> dict:
        """Where every byte class lives."""
        return {
            "fp16_params": "ssd",
            "fp16_grads": "ssd",
            "optimizer_states": "ssd",
            "checkpoints": self.checkpoint_location,
            "staging_buffers": "cpu",
            "working_set": "gpu",
        }


ZERO_INFINITY_LIKE = PlacementPolicy(
    id=PolicyId.ZERO_INFINITY_LIKE,
    checkpoint_location="cpu",
    cpu_base_bytes=80e9,
    cpu_bytes_per_param=5.0,
)
FUYOU_LIKE = PlacementPolicy(
    id=PolicyId.FUYOU_LIKE,
    checkpoint_location="ssd",
    cpu_base_bytes=20e9,
    cpu_bytes_per_param=0.85,
)
POLICIES = {p.id: p for p in (ZERO_INFINITY_LIKE, FUYOU_LIKE)}


def get_policy(policy) -> PlacementPolicy:
    if isinstance(policy, PlacementPolicy):
        return policy
    return POLICIES[PolicyId(policy)]


@dataclass(frozen=True)
class Requirement:
    resource: Bottleneck
    need: float
    have: float

    @property
    def ok(self) -> bool:
        return self.need <= self.have


@dataclass(frozen=True)
class Feasibility:
    ok: bool
    bottleneck: Bottleneck | None
    requirements: tuple[Requirement, ...]

    def __bool__(self):
        return self.ok


def requirements(policy, model: ModelConfig, hw: HardwareConfig) -> tuple[Requirement, ...]:
    """Byte need per location, checked in the order SSD, CPU memory, GPU memory."""
    policy = get_policy(policy)
    fp = footprint(model)
    ckpt = fp.total_checkpoint_bytes
    ssd = fp.model_state_bytes + (ckpt if policy.checkpoint_location == "ssd" else 0)
    cpu = policy.cpu_base_bytes + policy.cpu_bytes_per_param * fp.total_params
    if policy.checkpoint_location == "cpu":
        cpu += ckpt
    block_params = block_param_count(model) * model.param_elem_bytes
    block_acts = intra_block_activation_bytes(model) / model.num_layers
    gpu = policy.gpu_context_bytes + policy.gpu_param_blocks * block_params + block_acts
    return (
        Requirement(Bottleneck.SSD, ssd, hw.ssd_capacity),
        Requirement(Bottleneck.CPU_MEM, cpu, hw.cpu_mem),
        Requirement(Bottleneck.GPU_MEM, gpu, hw.gpu_mem),
    )


def feasible(policy, model: ModelConfig, hw: HardwareConfig) -> Feasibility:
    reqs = requirements(policy, model, hw)
    for r in reqs:
        if not r.ok:
            return Feasibility(False, r.resource, reqs)
    return Feasibility(True, None, reqs)


@dataclass(frozen=True)
class MaxTrainable:
    model: ModelConfig | None
    # why the next larger candidate fails; None when the largest fits
    bottleneck: Bottleneck | None

    @property
    def name(self) -> str:
        return self.model.name if self.model else "none"


def max_trainable(policy, hw: HardwareConfig, candidates) -> MaxTrainable:
    """Largest candidate that fits; ``candidates`` must be ascending by size."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidate ladder is empty")
    blocking = None
    for cfg in reversed(candidates):
        verdict = feasible(policy, cfg, hw)
        if verdict.ok:
            return MaxTrainable(cfg, blocking)
        blocking = verdict.bottleneck
    return MaxTrainable(None, blocking)


def capacity_sweep(hw: HardwareConfig, cpu_mems, candidates, policies=tuple(PolicyId)) -> list[dict]:
    """One row per (cpu_mem, policy): largest model and what stops the next one."""
    import dataclasses

    rows = []
    for mem in cpu_mems:
        machine = dataclasses.replace(hw, cpu_mem=float(mem))
        for pol in policies:
            pol = get_policy(pol)
            res = max_trainable(pol, machine, candidates)
            rows.append({
                "cpu_mem": float(mem),
                "policy": pol.id.value,
                "max_model": res.name,
                "params": footprint(res.model).total_params if res.model else 0,
                "bottleneck": res.bottleneck.value if res.bottleneck else "",
            })
    return rows


# Dollar prices of whole servers and components.
DEFAULT_PRICES = {
    "dgx2_server": 200_000.0,
    "server": 14_098.0,
    "a100": 14_177.0,
    "4090": 1_600.0,
    "ssd": 308.0,
}

SCOPES = ("gpu_ssd", "whole_server")


@dataclass(frozen=True)
class PriceTable:
    prices: dict = field(default_factory=lambda: dict(DEFAULT_PRICES))

    def __post_init__(self):
        for name, value in self.prices.items():
            if value is None or not value > 0:
                raise ValueError(f"price for {name!r} must be > 0 (got {value!r})")

    def get(self, component: str) -> float:
        try:
            return self.prices[component]
        except KeyError:
            raise ValueError(f"no price for component {component!r}") from None

    def scaled(self, factor: float) -> "PriceTable":
        return PriceTable({k: v * factor for k, v in self.prices.items()})


def gpu_component(hw: HardwareConfig) -> str:
    name = hw.name.lower()
    for key in ("a100", "4090"):
        if key in name:
            return key
    raise ValueError(f"cannot tell which GPU {hw.name!r} uses; pass gpu= explicitly")


def machine_price(hw: HardwareConfig, prices: PriceTable, scope: str = "gpu_ssd", gpu: str | None = None) -> float:
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}")
    total = prices.get(gpu or gpu_component(hw)) + hw.n_ssd * prices.get("ssd")
    if scope == "whole_server":
        total += prices.get("server")
    return total


def iteration_seconds(result) -> float:
    if isinstance(result, CostBreakdown):
        return result.t_iter
    if hasattr(result, "makespan"):
        return result.makespan
    return float(result)


def tokens_per_second(result, model: ModelConfig) -> float:
    t = iteration_seconds(result)
    if not t > 0:
        raise ValueError("iteration time must be > 0")
    return model.batch_size * model.seq_len / t


def cost_effectiveness(result, model: ModelConfig, prices: PriceTable, scope: str,
                       hw: HardwareConfig, gpu: str | None = None) -> float:
    """Tokens per second per dollar; ``result`` is a trace, a breakdown or seconds."""
    return tokens_per_second(result, model) / machine_price(hw, prices, scope, gpu)
