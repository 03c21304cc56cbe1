"""Deterministic discrete-event execution of a TaskGraph.

Time is kept in integer picoseconds. Each serial resource runs one task at a
time and picks the next ready task by (ready time, task id). Memory effects
are applied at task boundaries and checked against capacity. Memory never
delays a task: the schedule builder already encodes the queue limits as
dependencies, so exceeding a capacity here means the graph is wrong.
"""

from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass, field

from .errors import DeadlockError, MemoryCapacityError
from .hardware import HardwareConfig
from .schedule import MEMORIES, SERIAL_RESOURCES, TICKS_PER_SECOND, ResourceId, TaskGraph, task_rate, to_ticks


@dataclass(frozen=True)
class TraceEvent:
    task_id: int
    name: str
    resource: ResourceId
    start_tick: int
    end_tick: int
    kind: str
    category: str
    phase: str
    work: float
    direction: str | None = None
    deps: tuple[int, ...] = ()

    @property
    def start(self) -> float:
        return self.start_tick / TICKS_PER_SECOND

    @property
    def end(self) -> float:
        return self.end_tick / TICKS_PER_SECOND

    @property
    def duration(self) -> float:
        return (self.end_tick - self.start_tick) / TICKS_PER_SECOND


@dataclass
class SimTrace:
    events: list[TraceEvent]
    makespan_tick: int
    peak_mem: dict
    busy_tick: dict
    mem_capacity: dict
    mem_timeline: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def makespan(self) -> float:
        return self.makespan_tick / TICKS_PER_SECOND

    @property
    def busy(self) -> dict:
        return {r: t / TICKS_PER_SECOND for r, t in self.busy_tick.items()}

    def bytes_on(self, resource: ResourceId, category: str | None = None) -> float:
        return sum(e.work for e in self.events
                   if e.resource is resource and (category is None or e.category == category))

    def summary(self) -> dict:
        return {
            "makespan_s": self.makespan,
            "busy_s": {r.value: v for r, v in sorted(self.busy.items(), key=lambda kv: kv[0].value)},
            "utilization": {
                r.value: (v / self.makespan if self.makespan else 0.0)
                for r, v in sorted(self.busy.items(), key=lambda kv: kv[0].value)
            },
            "peak_mem_bytes": {r.value: v for r, v in sorted(self.peak_mem.items(), key=lambda kv: kv[0].value)},
            "gradient_bytes_on_ssd": self.bytes_on(ResourceId.LINK_SSD, "grad"),
            "num_events": len(self.events),
            "meta": dict(sorted(self.meta.items())),
        }


class _Memory:
    def __init__(self, base: dict, capacity: dict):
        self.usage = {m: float(base.get(m, 0.0)) for m in MEMORIES}
        self.capacity = {m: float(capacity.get(m, float("inf"))) for m in MEMORIES}
        self.peak = dict(self.usage)
        self.timeline = {m: [(0, self.usage[m])] for m in MEMORIES}

    def apply(self, tick: int, effects, task_id: int):
        # frees before allocations so same-tick hand-offs do not look like overflow
        for eff in sorted(effects, key=lambda e: e.delta):
            m = eff.resource
            self.usage[m] += eff.delta
            # tolerate float dust from summing many byte counts
            if self.usage[m] > self.capacity[m] * (1 + 1e-12):
                raise MemoryCapacityError(task_id, m.value, self.usage[m], self.capacity[m])
            if self.usage[m] > self.peak[m]:
                self.peak[m] = self.usage[m]
        for m in {e.resource for e in effects}:
            tl = self.timeline[m]
            if tl[-1][0] == tick:
                tl[-1] = (tick, self.usage[m])
            else:
                tl.append((tick, self.usage[m]))


def simulate(graph: TaskGraph, hw: HardwareConfig) -> SimTrace:
    """Run ``graph`` on ``hw`` and return the timed event log."""
    tasks = graph.tasks
    n = len(tasks)
    index = {t.id: k for k, t in enumerate(tasks)}
    if len(index) != n:
        raise ValueError("task ids must be unique")
    dur = [to_ticks(t.work / task_rate(t, hw)) for t in tasks]
    indeg = [len(t.deps) for t in tasks]
    users = defaultdict(list)
    for k, t in enumerate(tasks):
        for d in t.deps:
            users[index[d]].append(k)

    queues = {r: [] for r in SERIAL_RESOURCES}
    busy_until = {r: None for r in SERIAL_RESOURCES}
    busy_tick = {r: 0 for r in SERIAL_RESOURCES}
    start = [0] * n
    end = [0] * n
    running = []  # heap of (end tick, task index)
    mem = _Memory(graph.mem_base, graph.mem_capacity)
    done = 0

    for k, t in enumerate(tasks):
        if indeg[k] == 0:
            heapq.heappush(queues[t.resource], (0, t.id, k))

    def dispatch(now):
        for r in SERIAL_RESOURCES:
            if busy_until[r] is None and queues[r]:
                _, _, k = heapq.heappop(queues[r])
                start[k] = now
                end[k] = now + dur[k]
                busy_until[r] = k
                busy_tick[r] += dur[k]
                mem.apply(now, [e for e in tasks[k].mem_effects if e.when == "start"], tasks[k].id)
                heapq.heappush(running, (end[k], tasks[k].id, k))

    now = 0
    dispatch(now)
    while running:
        now = running[0][0]
        # zero-length tasks can finish in the tick they start, so drain until quiet
        while running and running[0][0] == now:
            finished = []
            while running and running[0][0] == now:
                finished.append(heapq.heappop(running)[2])
            effects = []
            for k in finished:
                busy_until[tasks[k].resource] = None
                effects.extend(e for e in tasks[k].mem_effects if e.when == "end")
                done += 1
            mem.apply(now, effects, tasks[finished[-1]].id)
            for k in finished:
                for u in users[k]:
                    indeg[u] -= 1
                    if indeg[u] == 0:
                        heapq.heappush(queues[tasks[u].resource], (now, tasks[u].id, u))
            dispatch(now)

    if done != n:
        blocked = sorted(tasks[k].name for k in range(n) if indeg[k] > 0)
        raise DeadlockError(blocked)

    events = [
        TraceEvent(
            task_id=t.id,
            name=t.name,
            resource=t.resource,
            start_tick=start[k],
            end_tick=end[k],
            kind=t.kind.value,
            category=t.category,
            phase=t.phase,
            work=t.work,
            direction=t.direction.value if t.direction else None,
            deps=t.deps,
        )
        for k, t in enumerate(tasks)
    ]
    events.sort(key=lambda e: (e.start_tick, e.resource.value, e.task_id))
    makespan = max((e.end_tick for e in events), default=0)
    return SimTrace(
        events=events,
        makespan_tick=makespan,
        peak_mem=dict(mem.peak),
        busy_tick=busy_tick,
        mem_capacity=dict(mem.capacity),
        mem_timeline=mem.timeline,
        meta=dict(graph.meta),
    )
