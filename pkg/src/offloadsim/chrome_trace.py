"""Export a SimTrace as Chrome Trace Event JSON (chrome://tracing, Perfetto)."""

from __future__ import annotations

import json

from .engine import SimTrace
from .schedule import SERIAL_RESOURCES

PID = 1


def trace_events(trace: SimTrace) -> list[dict]:
    """Complete ("X") events in microseconds, one thread per resource, sorted by start."""
    tid = {r: k + 1 for k, r in enumerate(SERIAL_RESOURCES)}
    meta = [
        {"ph": "M", "name": "process_name", "pid": PID, "tid": 0,
         "args": {"name": f"{trace.meta.get('variant', 'sim')} iteration"}}
    ]
    for r, t in tid.items():
        meta.append({"ph": "M", "name": "thread_name", "pid": PID, "tid": t, "args": {"name": r.value}})
    body = []
    for e in sorted(trace.events, key=lambda e: (e.start_tick, tid[e.resource], e.task_id)):
        args = {"task_id": e.task_id, "category": e.category, "phase": e.phase, "work": e.work}
        if e.direction:
            args["direction"] = e.direction
        body.append({
            "name": e.name,
            "cat": e.category or e.kind,
            "ph": "X",
            "pid": PID,
            "tid": tid[e.resource],
            "ts": e.start_tick / 1e6,
            "dur": (e.end_tick - e.start_tick) / 1e6,
            "args": args,
        })
    return meta + body


def to_chrome_trace(trace: SimTrace) -> dict:
    return {
        "traceEvents": trace_events(trace),
        "displayTimeUnit": "ms",
        "otherData": {k: trace.meta[k] for k in sorted(trace.meta)},
    }


def dumps(trace: SimTrace) -> str:
    return json.dumps(to_chrome_trace(trace), sort_keys=True, separators=(",", ":"))


def write_chrome_trace(trace: SimTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(trace))
        fh.write("\n")
