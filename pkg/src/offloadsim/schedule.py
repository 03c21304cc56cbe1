"""Task graphs for one training iteration under three schedule variants.

SERIAL chains every task, one after another, so nothing overlaps.
PIPELINED lets transfers run ahead of GPU compute. Gradients still travel
GPU -> CPU -> SSD, and a separate optimizer stage runs after backward.
OVERLAPPED sends gradients only as far as CPU memory and updates each
parameter group on the CPU while the GPU is still in backward.

How far transfers may run ahead is bounded by queues sized from GPU memory.
A transfer cannot start until enough earlier queue entries have been
consumed. That rule is encoded as plain graph edges, so the engine never
has to block on memory.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field

from .errors import InfeasibleError, ScheduleError
from .hardware import Direction, HardwareConfig, aggregate_ssd_bw
from .memory import GRANULARITIES, INBOUND_SHARE, check_gpu_fit
from .workload import LayerKind, ModelConfig, block_profiles


class ScheduleVariant(str, enum.Enum):
    SERIAL = "SERIAL"
    PIPELINED = "PIPELINED"
    OVERLAPPED = "OVERLAPPED"


class ResourceId(str, enum.Enum):
    GPU_COMPUTE = "GPU_COMPUTE"
    CPU_COMPUTE = "CPU_COMPUTE"
    LINK_C2G = "LINK_C2G"
    LINK_G2C = "LINK_G2C"
    LINK_SSD = "LINK_SSD"
    MEM_GPU = "MEM_GPU"
    MEM_CPU = "MEM_CPU"


SERIAL_RESOURCES = (
    ResourceId.GPU_COMPUTE,
    ResourceId.CPU_COMPUTE,
    ResourceId.LINK_C2G,
    ResourceId.LINK_G2C,
    ResourceId.LINK_SSD,
)
MEMORIES = (ResourceId.MEM_GPU, ResourceId.MEM_CPU)


class TaskKind(str, enum.Enum):
    COMPUTE = "compute"
    TRANSFER = "transfer"
    OPTIMIZER_UPDATE = "optimizer_update"


@dataclass(frozen=True)
class MemEffect:
    resource: ResourceId
    delta: float
    when: str  # "start" or "end"


@dataclass(frozen=True)
class Task:
    id: int
    name: str
    kind: TaskKind
    resource: ResourceId
    work: float  # bytes for transfers, FLOPs for GPU compute, params for CPU updates
    deps: tuple[int, ...] = ()
    mem_effects: tuple[MemEffect, ...] = ()
    category: str = ""
    phase: str = ""
    direction: Direction | None = None  # SSD transfers only


@dataclass
class TaskGraph:
    tasks: list[Task]
    mem_capacity: dict
    mem_base: dict
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.tasks)


def task_rate(task: Task, hw: HardwareConfig) -> float:
    """Work units per second for ``task`` on its resource."""
    r = task.resource
    if r is ResourceId.GPU_COMPUTE:
        return hw.gpu_tput
    if r is ResourceId.CPU_COMPUTE:
        return hw.cpu_opt_tput
    if r in (ResourceId.LINK_C2G, ResourceId.LINK_G2C):
        return hw.bw_gpu
    if r is ResourceId.LINK_SSD:
        return aggregate_ssd_bw(hw, task.direction or Direction.S2C)
    raise ValueError(f"{r} is not a serial resource")


TICKS_PER_SECOND = 10 ** 12


def to_ticks(seconds: float) -> int:
    return int(round(seconds * TICKS_PER_SECOND))


def task_seconds(task: Task, hw: HardwareConfig) -> float:
    return task.work / task_rate(task, hw)


def serial_duration_sum(graph: TaskGraph, hw: HardwareConfig) -> float:
    """Sum of every task's duration: the makespan if nothing overlapped."""
    return sum(task_seconds(t, hw) for t in graph.tasks)


def roofline_bound(graph: TaskGraph, hw: HardwareConfig) -> float:
    """Busy time of the most loaded resource; no schedule can finish sooner.

    Durations are rounded to whole ticks exactly as the engine rounds them,
    so the bound holds without a float tolerance.
    """
    load = defaultdict(int)
    for t in graph.tasks:
        load[t.resource] += to_ticks(task_seconds(t, hw))
    return max(load.values(), default=0) / TICKS_PER_SECOND


@dataclass
class _Unit:
    """One entry of a FIFO queue."""

    size: float
    transfer: int = -1  # task that puts the entry on the queue's far side
    release: int = -1  # task whose completion frees the entry
    group: int = -1  # entries sharing a group are consumed together


class _Builder:
    def __init__(self, serial: bool):
        self.serial = serial
        self.specs: list[dict] = []
        self.last = -1

    def add(self, name, kind, resource, work, deps=(), category="", phase="", direction=None):
        tid = len(self.specs)
        deps = [d for d in deps if d >= 0]
        if self.serial and self.last >= 0:
            deps.append(self.last)
        self.specs.append(dict(
            id=tid, name=name, kind=kind, resource=resource, work=float(work),
            deps=deps, effects=[], category=category, phase=phase, direction=direction,
        ))
        self.last = tid
        return tid

    def dep(self, task: int, on: int):
        if task >= 0 and on >= 0 and on != task and on not in self.specs[task]["deps"]:
            self.specs[task]["deps"].append(on)

    def effect(self, task: int, resource: ResourceId, delta: float, when: str):
        self.specs[task]["effects"].append(MemEffect(resource, float(delta), when))

    def freeze(self) -> list[Task]:
        tasks = []
        for s in self.specs:
            tasks.append(Task(
                id=s["id"], name=s["name"], kind=s["kind"], resource=s["resource"],
                work=s["work"], deps=tuple(sorted(set(s["deps"]))),
                mem_effects=tuple(s["effects"]), category=s["category"],
                phase=s["phase"], direction=s["direction"],
            ))
        return tasks


def _window_starts(sizes: list[float], cap: float) -> list[int]:
    """For each entry j, the first index i with sum(sizes[i..j]) <= cap."""
    starts, lo, total = [], 0, 0.0
    for j, s in enumerate(sizes):
        total += s
        while total > cap and lo < j:
            total -= sizes[lo]
            lo += 1
        starts.append(lo)
    return starts


def _gate_window(b: _Builder, units: list[_Unit], cap: float, gated_task, what: str):
    """Make ``gated_task(j)`` wait until entries before j's window are released."""
    sizes = [u.size for u in units]
    for j, i in enumerate(_window_starts(sizes, cap)):
        if i == 0:
            continue
        prev = units[i - 1]
        if units[j].group >= 0 and prev.group == units[j].group:
            raise ScheduleError(
                f"{what} FIFO of {cap:.3e} B cannot hold {b.specs[units[j].transfer]['name']}"
            )
        b.dep(gated_task(j), prev.release)


def _topo_check(tasks: list[Task]):
    indeg = [len(t.deps) for t in tasks]
    users = defaultdict(list)
    for t in tasks:
        for d in t.deps:
            users[d].append(t.id)
    stack = [t.id for t in tasks if not t.deps]
    seen = 0
    while stack:
        k = stack.pop()
        seen += 1
        for u in users[k]:
            indeg[u] -= 1
            if indeg[u] == 0:
                stack.append(u)
    if seen != len(tasks):
        raise ScheduleError("task graph has a dependency cycle")


PLACEMENTS = ("auto", "cpu", "ssd")


def placement_reserve(model: ModelConfig, budget, hw: HardwareConfig, group_blocks: int, buffers: int):
    """CPU bytes kept for staging queues and optimizer buffers; returns (reserve, cpu_in, cpu_out)."""
    read_bw = aggregate_ssd_bw(hw, Direction.S2C)
    write_bw = aggregate_ssd_bw(hw, Direction.C2S)
    blk = block_profiles(model)
    block_param_bytes = sum(p.param_bytes for p in blk)
    biggest = block_param_bytes + 9 * blk[0].input_bytes
    cpu_in = max(budget.inbound * hw.bw_gpu / read_bw, biggest)
    cpu_out = max(budget.outbound * hw.bw_gpu / write_bw, biggest)
    group_states = block_param_bytes * group_blocks * (2 + model.optimizer_state_multiplier)
    return cpu_in + cpu_out + (buffers + 1) * group_states, cpu_in, cpu_out


def build_schedule(
    model: ModelConfig,
    hw: HardwareConfig,
    plan,
    variant: ScheduleVariant | str,
    granularity: str = "layer",
    optimizer_group_blocks: int = 1,
    optimizer_buffers: int = 2,
    inbound_share: float = INBOUND_SHARE,
    checkpoint_placement: str = "auto",
) -> TaskGraph:
    """Task graph for one iteration of ``model`` under ``plan`` and ``variant``.

    ``checkpoint_placement`` is "auto" (CPU memory when the swapped bytes fit
    beside the staging buffers, SSD otherwise), "cpu" or "ssd".
    Raises ScheduleError if a prefetch unit does not fit its queue.
    """
    variant = ScheduleVariant(variant)
    if granularity not in GRANULARITIES:
        raise ValueError(f"granularity must be one of {GRANULARITIES}")
    if optimizer_group_blocks < 1 or optimizer_buffers < 1:
        raise ValueError("optimizer_group_blocks and optimizer_buffers must be >= 1")
    try:
        budget = check_gpu_fit(model, hw, plan.swapped_layers, granularity, inbound_share)
    except InfeasibleError as exc:
        raise ScheduleError(str(exc)) from exc

    reserve, cpu_in_cap, cpu_out_cap = placement_reserve(
        model, budget, hw, optimizer_group_blocks, optimizer_buffers)
    if reserve > hw.cpu_mem:
        raise ScheduleError(
            f"CPU staging buffers need {reserve:.3e} B but cpu_mem is {hw.cpu_mem:.3e} B")
    fits_cpu = hw.cpu_mem - reserve >= plan.d_f
    if checkpoint_placement == "auto":
        ckpt_on_cpu = fits_cpu
    elif checkpoint_placement == "cpu":
        if not fits_cpu:
            raise ScheduleError(
                f"{plan.d_f:.3e} B of swapped activations do not fit in CPU memory beside "
                f"{reserve:.3e} B of staging buffers")
        ckpt_on_cpu = True
    elif checkpoint_placement == "ssd":
        ckpt_on_cpu = False
    else:
        raise ValueError(f"checkpoint_placement must be one of {PLACEMENTS}")

    G, C = ResourceId.MEM_GPU, ResourceId.MEM_CPU
    serial = variant is ScheduleVariant.SERIAL
    b = _Builder(serial)
    swapped = {(p.block_index, p.kind) for p in plan.swapped_layers}
    profiles = block_profiles(model)
    grad_elem = model.param_elem_bytes
    state_ratio = model.optimizer_state_multiplier
    layer_mode = granularity == "layer"
    L = model.num_layers

    gpu_in: list[_Unit] = []
    gpu_out: list[_Unit] = []
    cpu_in: list[_Unit] = []  # SSD reads headed for the GPU
    cpu_out: list[_Unit] = []  # GPU outputs headed for the SSD
    prev_compute = -1
    prev_c2g = -1
    prev_g2c = -1
    prev_write = -1

    def compute(name, flops, phase, category="compute"):
        nonlocal prev_compute
        tid = b.add(name, TaskKind.COMPUTE, ResourceId.GPU_COMPUTE, flops,
                    [prev_compute], category, phase)
        prev_compute = tid
        return tid

    def inbound(name, size, category, phase, group, from_ssd, release_later=True):
        """SSD -> CPU (optional) -> GPU; returns the GPU-side unit."""
        nonlocal prev_c2g
        read = -1
        if from_ssd:
            read = b.add(f"{name}.read", TaskKind.TRANSFER, ResourceId.LINK_SSD, size,
                         [], category, phase, Direction.S2C)
            b.effect(read, C, size, "start")
        c2g = b.add(f"{name}.c2g", TaskKind.TRANSFER, ResourceId.LINK_C2G, size,
                    [read, prev_c2g], category, phase)
        prev_c2g = c2g
        b.effect(c2g, G, size, "start")
        b.effect(c2g, C, -size, "end")
        unit = _Unit(size, transfer=c2g, group=group)
        gpu_in.append(unit)
        if from_ssd:
            cpu_in.append(_Unit(size, transfer=read, release=c2g, group=-1))
        return unit

    def outbound(name, size, category, phase, producer, to_ssd):
        """GPU -> CPU, then CPU -> SSD when ``to_ssd``."""
        nonlocal prev_g2c, prev_write
        b.effect(producer, G, size, "end")
        g2c = b.add(f"{name}.g2c", TaskKind.TRANSFER, ResourceId.LINK_G2C, size,
                    [producer, prev_g2c], category, phase)
        prev_g2c = g2c
        b.effect(g2c, G, -size, "end")
        b.effect(g2c, C, size, "start")
        gpu_out.append(_Unit(size, transfer=g2c, release=g2c, group=producer))
        write = -1
        if to_ssd:
            write = b.add(f"{name}.write", TaskKind.TRANSFER, ResourceId.LINK_SSD, size,
                          [g2c, prev_write], category, phase, Direction.C2S)
            prev_write = write
            b.effect(write, C, -size, "end")
            cpu_out.append(_Unit(size, transfer=g2c, release=write))
        return g2c, write

    # ---- forward
    for blk in range(L):
        units = profiles if layer_mode else [None]
        for prof in units:
            if prof is None:
                tag = f"fwd.block{blk}"
                params = sum(p.param_bytes for p in profiles)
                flops = sum(p.flops_fwd for p in profiles) + model.extra_block_flops
            else:
                tag = f"fwd.block{blk}.{prof.kind.value}"
                params = prof.param_bytes
                flops = prof.flops_fwd + (model.extra_block_flops if prof.kind is LayerKind.QKV else 0)
            unit = inbound(f"{tag}.param", params, "param", "forward", group=-1, from_ssd=True)
            task = compute(tag, flops, "forward")
            b.dep(task, unit.transfer)
            unit.release = task
            b.effect(task, G, -params, "end")
            emitted = []
            if prof is None or prof.kind is LayerKind.QKV:
                emitted.append((f"block{blk}.ckpt", profiles[0].input_bytes, "ckpt"))
            for p in (profiles if prof is None else [prof]):
                if (blk, p.kind) in swapped:
                    emitted.append((f"block{blk}.{p.kind.value}.act", p.act_bytes, "act"))
            for name, size, cat in emitted:
                outbound(f"fwd.{name}", size, cat, "forward", task, to_ssd=not ckpt_on_cpu)
    last_forward = prev_compute

    # ---- backward, last block first
    group_of_block = {}
    order = list(range(L - 1, -1, -1))
    for i, blk in enumerate(order):
        group_of_block[blk] = i // optimizer_group_blocks
    n_groups = (L + optimizer_group_blocks - 1) // optimizer_group_blocks
    grad_g2c = defaultdict(list)
    grad_bytes = defaultdict(float)
    grad_writes = []

    for blk in order:
        block_units = []
        if layer_mode:
            for p in profiles:
                block_units.append(inbound(f"bwd.block{blk}.{p.kind.value}.param", p.param_bytes,
                                           "param", "backward", blk, from_ssd=True))
        else:
            block_units.append(inbound(f"bwd.block{blk}.param", sum(p.param_bytes for p in profiles),
                                       "param", "backward", blk, from_ssd=True))
        block_units.append(inbound(f"bwd.block{blk}.ckpt", profiles[0].input_bytes, "ckpt",
                                   "backward", blk, from_ssd=not ckpt_on_cpu))
        for p in profiles:
            if (blk, p.kind) in swapped:
                block_units.append(inbound(f"bwd.block{blk}.{p.kind.value}.act", p.act_bytes, "act",
                                           "backward", blk, from_ssd=not ckpt_on_cpu))
        recompute_flops = model.extra_block_flops + sum(
            p.flops_fwd for p in profiles if (blk, p.kind) not in swapped)
        rc = compute(f"bwd.block{blk}.recompute", recompute_flops, "backward", "recompute")
        for u in block_units:
            b.dep(rc, u.transfer)

        pieces = list(reversed(profiles)) if layer_mode else [None]
        g = group_of_block[blk]
        for prof in pieces:
            if prof is None:
                tag = f"bwd.block{blk}"
                flops = 2 * (sum(p.flops_fwd for p in profiles) + model.extra_block_flops)
                grads = sum(p.param_bytes for p in profiles) * grad_elem / model.param_elem_bytes
            else:
                tag = f"bwd.block{blk}.{prof.kind.value}"
                extra = model.extra_block_flops if prof.kind is LayerKind.QKV else 0
                flops = 2 * (prof.flops_fwd + extra)
                grads = prof.param_bytes
            task = compute(tag, flops, "backward")
            g2c, write = outbound(f"{tag}.grad", grads, "grad", "backward", task,
                                  to_ssd=variant is not ScheduleVariant.OVERLAPPED)
            grad_g2c[g].append(g2c)
            grad_bytes[g] += grads
            if write >= 0:
                grad_writes.append(write)
        # the whole block's inbound data is released after its last backward task
        for u in block_units:
            u.release = prev_compute
            b.effect(prev_compute, G, -u.size, "end")

    # ---- optimizer
    updates, writebacks = [], []
    prev_update = -1
    prev_opt_write = -1
    if variant is ScheduleVariant.OVERLAPPED:
        gate = last_forward  # state reads start once backward begins
    else:
        gate = grad_writes[-1] if grad_writes else prev_compute
    for g in range(n_groups):
        states = grad_bytes[g] * state_ratio
        window = writebacks[g - optimizer_buffers] if g >= optimizer_buffers else -1
        read = b.add(f"opt.group{g}.states.read", TaskKind.TRANSFER, ResourceId.LINK_SSD, states,
                     [gate, window], "opt_state", "optimizer", Direction.S2C)
        b.effect(read, C, states, "start")
        reads = [read]
        if variant is not ScheduleVariant.OVERLAPPED:
            gread = b.add(f"opt.group{g}.grad.read", TaskKind.TRANSFER, ResourceId.LINK_SSD,
                          grad_bytes[g], [gate, window], "grad", "optimizer", Direction.S2C)
            b.effect(gread, C, grad_bytes[g], "start")
            reads.append(gread)
        elif window >= 0:
            b.dep(grad_g2c[g][0], window)
        params = grad_bytes[g] / model.param_elem_bytes
        upd = b.add(f"opt.group{g}.update", TaskKind.OPTIMIZER_UPDATE, ResourceId.CPU_COMPUTE, params,
                    [*reads, *grad_g2c[g], prev_update], "update", "optimizer")
        prev_update = upd
        out = states + grad_bytes[g]
        wb = b.add(f"opt.group{g}.write", TaskKind.TRANSFER, ResourceId.LINK_SSD, out,
                   [upd, prev_opt_write], "opt_state", "optimizer", Direction.C2S)
        prev_opt_write = wb
        b.effect(wb, C, -out, "end")
        updates.append(upd)
        writebacks.append(wb)

    if not serial:
        _gate_window(b, gpu_in, budget.inbound, lambda j: gpu_in[j].transfer, "GPU inbound")
        _gate_window(b, gpu_out, budget.outbound, lambda j: gpu_out[j].group, "GPU outbound")
        _gate_window(b, cpu_in, cpu_in_cap, lambda j: cpu_in[j].transfer, "CPU inbound")
        _gate_window(b, cpu_out, cpu_out_cap, lambda j: cpu_out[j].transfer, "CPU outbound")

    tasks = b.freeze()
    _topo_check(tasks)
    meta = {
        "model": model.name,
        "hardware": hw.name,
        "variant": variant.value,
        "granularity": granularity,
        "checkpoint_placement": "cpu" if ckpt_on_cpu else "ssd",
        "d_f": float(plan.d_f),
        "optimizer_group_blocks": optimizer_group_blocks,
        "optimizer_buffers": optimizer_buffers,
        "gpu_reserved": float(budget.reserved),
        "gpu_inbound_fifo": float(budget.inbound),
        "gpu_outbound_fifo": float(budget.outbound),
        "cpu_inbound_queue": float(cpu_in_cap),
        "cpu_outbound_queue": float(cpu_out_cap),
        "num_tasks": len(tasks),
    }
    return TaskGraph(
        tasks=tasks,
        mem_capacity={G: float(hw.gpu_mem), C: float(hw.cpu_mem)},
        mem_base={G: float(budget.reserved), C: 0.0},
        meta=meta,
    )
