"""Post-hoc checks on a finished SimTrace."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .engine import SimTrace
from .schedule import MEMORIES, ResourceId, ScheduleVariant


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class InvariantReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {c.name: {"passed": c.passed, "detail": c.detail} for c in self.checks}


def _exclusive(trace: SimTrace) -> Check:
    by_res = defaultdict(list)
    for e in trace.events:
        by_res[e.resource].append(e)
    for res in sorted(by_res, key=lambda r: r.value):
        evs = sorted(by_res[res], key=lambda e: (e.start_tick, e.end_tick))
        for a, b in zip(evs, evs[1:]):
            if b.start_tick < a.end_tick:
                return Check("resource_exclusive", False,
                             f"{res.value}: {a.name} and {b.name} overlap")
    return Check("resource_exclusive", True)


def _deps(trace: SimTrace) -> Check:
    end = {e.task_id: e.end_tick for e in trace.events}
    for e in trace.events:
        for d in e.deps:
            if d not in end:
                return Check("dependencies_respected", False, f"{e.name} depends on unknown task {d}")
            if end[d] > e.start_tick:
                return Check("dependencies_respected", False, f"{e.name} starts before task {d} ends")
    return Check("dependencies_respected", True)


def _memory(trace: SimTrace) -> Check:
    for m in MEMORIES:
        cap = trace.mem_capacity.get(m, float("inf"))
        peak = max([u for _, u in trace.mem_timeline.get(m, [])] + [trace.peak_mem.get(m, 0.0)])
        if peak > cap * (1 + 1e-12):
            return Check("memory_within_capacity", False, f"{m.value} peaks at {peak:.4g} B > {cap:.4g} B")
    return Check("memory_within_capacity", True)


def _makespan(trace: SimTrace) -> Check:
    last = max((e.end_tick for e in trace.events), default=0)
    return Check("makespan_consistent", last == trace.makespan_tick,
                 "" if last == trace.makespan_tick else f"last event ends at {last}, makespan {trace.makespan_tick}")


def _no_overlap(trace: SimTrace) -> Check:
    evs = sorted((e for e in trace.events if e.end_tick > e.start_tick),
                 key=lambda e: (e.start_tick, e.end_tick))
    for a, b in zip(evs, evs[1:]):
        if b.start_tick < a.end_tick:
            return Check("serial_no_overlap", False, f"{a.name} overlaps {b.name}")
    return Check("serial_no_overlap", True)


def _ssd_bypass(trace: SimTrace) -> Check:
    grad = trace.bytes_on(ResourceId.LINK_SSD, "grad")
    return Check("no_gradient_bytes_on_ssd", grad == 0,
                 "" if grad == 0 else f"{grad:.4g} gradient bytes on LINK_SSD")


def check_trace_invariants(trace: SimTrace) -> InvariantReport:
    """Pass/fail for each trace invariant, plus the variant-specific ones."""
    report = InvariantReport([_exclusive(trace), _deps(trace), _memory(trace), _makespan(trace)])
    variant = trace.meta.get("variant")
    if variant == ScheduleVariant.SERIAL.value:
        report.checks.append(_no_overlap(trace))
    elif variant == ScheduleVariant.OVERLAPPED.value:
        report.checks.append(_ssd_bypass(trace))
    return report
