"""Scenario-level entry points shared by the CLI and the tests."""

from __future__ import annotations

import csv
import dataclasses
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .capacity import PolicyId, capacity_sweep
from .cost_model import iteration_time
from .engine import SimTrace, simulate
from .errors import ConfigError, OffloadSimError
from .invariants import InvariantReport, check_trace_invariants
from .planner import SwapPlan, plan_for_bytes, plan_for_coefficient, plan_swaps
from .scenario import PlannerSpec, Scenario
from .schedule import ScheduleVariant, build_schedule, roofline_bound

CSV_VERSION = 1
SWEEP_AXES = ("batch_size", "n_ssd", "swap_coefficient", "cpu_mem")
VARIANT_ORDER = (ScheduleVariant.SERIAL, ScheduleVariant.PIPELINED, ScheduleVariant.OVERLAPPED)


def resolve_plan(sc: Scenario) -> SwapPlan:
    mode, value = sc.planner.mode, sc.planner.value
    if mode == "auto":
        return plan_swaps(sc.model, sc.hardware, sc.simulation.granularity, sc.simulation.inbound_share)
    if mode == "fixed_coefficient":
        return plan_for_coefficient(sc.model, sc.hardware, value)
    return plan_for_bytes(sc.model, sc.hardware, value)


def plan_report(sc: Scenario) -> dict:
    plan = resolve_plan(sc)
    return {
        "scenario": sc.name,
        "model": sc.model.name,
        "hardware": sc.hardware.name,
        "batch_size": sc.model.batch_size,
        "plan": plan.to_dict(),
    }


@dataclass
class SimulationResult:
    scenario: Scenario
    plan: SwapPlan
    trace: SimTrace
    invariants: InvariantReport
    roofline: float

    def report(self) -> dict:
        predicted = iteration_time(self.scenario.model, self.scenario.hardware, self.plan)
        makespan = self.trace.makespan
        meta = dict(self.trace.meta, seed=self.scenario.seed, scenario=self.scenario.name)
        summary = self.trace.summary()
        summary["meta"] = dict(sorted(meta.items()))
        return {
            "scenario": self.scenario.name,
            "variant": self.scenario.variant.value,
            "swap_coefficient": self.plan.swap_coefficient,
            "d_f": self.plan.d_f,
            "makespan_s": makespan,
            "predicted_t_iter_s": predicted.t_iter,
            "relative_gap": (predicted.t_iter - makespan) / makespan if makespan else 0.0,
            "roofline_bound_s": self.roofline,
            "bottleneck_f": predicted.bottleneck_f,
            "bottleneck_bo": predicted.bottleneck_bo,
            "trace": summary,
            "invariants": self.invariants.to_dict(),
            "invariants_ok": self.invariants.ok,
        }


def simulate_scenario(sc: Scenario, plan: SwapPlan | None = None) -> SimulationResult:
    plan = plan or resolve_plan(sc)
    opts = sc.simulation
    graph = build_schedule(
        sc.model, sc.hardware, plan, sc.variant,
        granularity=opts.granularity,
        optimizer_group_blocks=opts.optimizer_group_blocks,
        optimizer_buffers=opts.optimizer_buffers,
        inbound_share=opts.inbound_share,
        checkpoint_placement=opts.checkpoint_placement,
    )
    trace = simulate(graph, sc.hardware)
    return SimulationResult(sc, plan, trace, check_trace_invariants(trace), roofline_bound(graph, sc.hardware))


# ---- sweeps

@dataclass(frozen=True)
class SweepSpec:
    base: Scenario
    axis: str
    values: tuple
    variants: tuple = VARIANT_ORDER

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if not self.variants:
            raise ConfigError("sweep needs at least one variant")


def apply_axis(base: Scenario, axis: str, value) -> Scenario:
    if axis == "batch_size":
        if int(value) != value or value < 1:
            raise ConfigError(f"batch_size must be a positive integer, got {value!r}")
        return dataclasses.replace(base, model=base.model.with_batch(int(value)))
    if axis == "n_ssd":
        if int(value) != value or value < 1:
            raise ConfigError(f"n_ssd must be a positive integer, got {value!r}")
        hw = base.hardware
        per_drive = hw.ssd_capacity / hw.n_ssd
        return dataclasses.replace(base, hardware=dataclasses.replace(
            hw, n_ssd=int(value), ssd_capacity=per_drive * int(value)))
    if axis == "swap_coefficient":
        if not 0 <= value <= 1:
            raise ConfigError(f"swap coefficient must be within [0, 1], got {value!r}")
        return dataclasses.replace(base, planner=PlannerSpec("fixed_coefficient", float(value)))
    if axis == "cpu_mem":
        if not value > 0:
            raise ConfigError(f"cpu_mem must be > 0, got {value!r}")
        return dataclasses.replace(base, hardware=dataclasses.replace(base.hardware, cpu_mem=float(value)))
    raise ConfigError(f"unknown sweep axis {axis!r}")


SWEEP_COLUMNS = (
    "csv_version", "axis", "value", "variant", "status", "makespan_s", "speedup_vs_serial",
    "predicted_t_iter_s", "t_f", "t_bo", "t_f_comp", "t_f_gpu", "t_f_ssd", "t_b_comp",
    "t_o_comp", "t_bo_gpu", "t_bo_ssd", "bottleneck_f", "bottleneck_bo", "swap_coefficient",
    "checkpoint_placement", "error",
)


def _sweep_cell(spec: SweepSpec, value, variant) -> dict:
    row = {c: "" for c in SWEEP_COLUMNS}
    row.update(csv_version=CSV_VERSION, axis=spec.axis, value=value, variant=variant.value)
    try:
        sc = dataclasses.replace(apply_axis(spec.base, spec.axis, value), variant=variant)
        res = simulate_scenario(sc)
        pred = iteration_time(sc.model, sc.hardware, res.plan)
        row.update(
            status="ok" if res.invariants.ok else "invariant_failure",
            makespan_s=res.trace.makespan,
            predicted_t_iter_s=pred.t_iter,
            swap_coefficient=res.plan.swap_coefficient,
            checkpoint_placement=res.trace.meta.get("checkpoint_placement", ""),
            bottleneck_f=pred.bottleneck_f,
            bottleneck_bo=pred.bottleneck_bo,
        )
        for key in ("t_f", "t_bo", "t_f_comp", "t_f_gpu", "t_f_ssd", "t_b_comp",
                    "t_o_comp", "t_bo_gpu", "t_bo_ssd"):
            row[key] = getattr(pred, key)
        if not res.invariants.ok:
            row["error"] = "; ".join(f"{c.name}: {c.detail}" for c in res.invariants.failures())
    except (OffloadSimError, ValueError) as exc:
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return row


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[dict]:
    """One row per (value, variant); failing cells become error rows."""
    cells = [(i, v, k, var) for i, v in enumerate(spec.values) for k, var in enumerate(spec.variants)]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        done = list(pool.map(lambda c: (c[0], c[2], _sweep_cell(spec, c[1], c[3])), cells))
    done.sort(key=lambda t: (t[0], t[1]))
    rows = [r for _, _, r in done]
    serial = {r["value"]: r["makespan_s"] for r in rows
              if r["variant"] == ScheduleVariant.SERIAL.value and r["status"] == "ok"}
    for r in rows:
        base = serial.get(r["value"])
        if base and r["status"] == "ok" and r["makespan_s"]:
            r["speedup_vs_serial"] = base / r["makespan_s"]
    return rows


CAPACITY_COLUMNS = ("csv_version", "hardware", "cpu_mem", "policy", "max_model", "params", "bottleneck")


def run_capacity(hw, cpu_mems, candidates, policies=tuple(PolicyId), workers: int = 1) -> list[dict]:
    if not candidates:
        raise ConfigError("candidate ladder is empty")
    if not cpu_mems:
        raise ConfigError("need at least one cpu_mem value")
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        parts = list(pool.map(lambda m: capacity_sweep(hw, [m], candidates, policies), cpu_mems))
    rows = [dict(csv_version=CSV_VERSION, hardware=hw.name, **r) for part in parts for r in part]
    order = {p.value if hasattr(p, "value") else str(p): k for k, p in enumerate(policies)}
    rows.sort(key=lambda r: (r["cpu_mem"], order.get(r["policy"], 99)))
    return rows


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_csv(rows, columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()

