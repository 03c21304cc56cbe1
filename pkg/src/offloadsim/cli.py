"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 infeasible scenario,
4 simulation invariant failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import chrome_trace
from .capacity import PolicyId
from .errors import ConfigError, InfeasibleError, SimulationError
from .hardware import hardware_preset, validate
from .memory import check_gpu_fit
from .runner import (
    CAPACITY_COLUMNS,
    SWEEP_AXES,
    SWEEP_COLUMNS,
    VARIANT_ORDER,
    SweepSpec,
    plan_report,
    resolve_plan,
    run_capacity,
    run_sweep,
    simulate_scenario,
    to_csv,
)
from .scenario import SCENARIO_PRESETS, load_scenario_file, scenario_preset
from .schedule import ScheduleVariant
from .workload import MODEL_PRESETS, model_ladder, model_preset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_INVARIANT = 4

DEFAULT_CPU_MEM_GB = (128, 256, 384, 512, 640, 768)


def _scenario(args):
    if args.scenario and args.preset:
        raise ConfigError("give either --scenario or --preset, not both")
    if args.scenario:
        sc = load_scenario_file(args.scenario)
    elif args.preset:
        sc = scenario_preset(args.preset)
    else:
        raise ConfigError("a scenario is required: use --scenario FILE or --preset NAME")
    if getattr(args, "variant", None):
        import dataclasses

        sc = dataclasses.replace(sc, variant=ScheduleVariant(args.variant.upper()))
    return sc


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _stage_lines(pred) -> list[str]:
    return [
        f"  forward   t_f  = {pred['t_f']:.4f} s  bottleneck {pred['bottleneck_f']}"
        f"  (comp {pred['t_f_comp']:.4f}, gpu link {pred['t_f_gpu']:.4f}, ssd {pred['t_f_ssd']:.4f})",
        f"  back+opt  t_bo = {pred['t_bo']:.4f} s  bottleneck {pred['bottleneck_bo']}"
        f"  (gpu {pred['t_b_comp']:.4f}, cpu opt {pred['t_o_comp']:.4f},"
        f" gpu link {pred['t_bo_gpu']:.4f}, ssd {pred['t_bo_ssd']:.4f})",
        f"  t_iter = {pred['t_iter']:.4f} s",
    ]


def cmd_plan(args) -> int:
    sc = _scenario(args)
    report = plan_report(sc)
    plan = report["plan"]
    lines = [
        f"scenario {sc.name or '-'}: {sc.model.name} on {sc.hardware.name}, batch {sc.model.batch_size}",
        f"  planner {plan['mode']}: swap coefficient {plan['swap_coefficient']:.4f}"
        f" ({plan['num_swapped_layers']} layers swapped), d_f {plan['d_f']:.4e} B"
        + (f", d_max {plan['d_max']:.4e} B" if plan["d_max"] is not None else ""),
        *_stage_lines(plan["predicted"]),
    ]
    print("\n".join(lines))
    if args.out:
        _emit(_json(report), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    result = simulate_scenario(sc)
    report = result.report()
    if args.trace:
        chrome_trace.write_chrome_trace(result.trace, args.trace)
    inv = result.invariants
    lines = [
        f"scenario {sc.name or '-'}: {sc.model.name} on {sc.hardware.name}, batch {sc.model.batch_size},"
        f" variant {sc.variant.value}",
        f"  makespan {report['makespan_s']:.4f} s, cost model {report['predicted_t_iter_s']:.4f} s"
        f" ({100 * report['relative_gap']:+.2f}%), roofline {report['roofline_bound_s']:.4f} s",
        f"  bottleneck forward {report['bottleneck_f']}, backward+optimizer {report['bottleneck_bo']}",
        f"  checkpoints in {result.trace.meta['checkpoint_placement']},"
        f" swap coefficient {report['swap_coefficient']:.4f}",
    ]
    for c in inv.checks:
        lines.append(f"  [{'pass' if c.passed else 'FAIL'}] {c.name}" + (f": {c.detail}" if c.detail else ""))
    print("\n".join(lines))
    if args.out:
        _emit(_json(report), args.out)
    return EXIT_OK if inv.ok else EXIT_INVARIANT


def _parse_values(text: str, axis: str):
    parts = [p.strip() for p in (text or "").split(",") if p.strip()]
    if not parts:
        raise ConfigError("--values needs at least one value")
    out = []
    for p in parts:
        try:
            v = float(p)
        except ValueError:
            raise ConfigError(f"bad value {p!r} for axis {axis}") from None
        if axis in ("batch_size", "n_ssd"):
            if v != int(v):
                raise ConfigError(f"{axis} values must be integers, got {p!r}")
            v = int(v)
        elif axis == "cpu_mem":
            v = v * 1e9  # given in GB
        out.append(v)
    return tuple(out)


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    variants = VARIANT_ORDER
    if args.variants:
        try:
            variants = tuple(ScheduleVariant(v.strip().upper()) for v in args.variants.split(",") if v.strip())
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    spec = SweepSpec(sc, args.axis, _parse_values(args.values, args.axis), variants)
    rows = run_sweep(spec, workers=args.workers)
    _emit(to_csv(rows, SWEEP_COLUMNS), args.out)
    failed = [r for r in rows if r["status"] != "ok"]
    if failed:
        print(f"{len(failed)} of {len(rows)} cells failed", file=sys.stderr)
    return EXIT_OK


def _capacity_hardware(args):
    if args.scenario:
        return load_scenario_file(args.scenario).hardware
    name = args.preset or "a100-12ssd"
    try:
        return hardware_preset(name)
    except KeyError:
        return scenario_preset(name).hardware


def cmd_capacity(args) -> int:
    hw = _capacity_hardware(args)
    if args.models is None:
        ladder = model_ladder()
    else:
        names = [m.strip() for m in args.models.split(",") if m.strip()]
        if not names:
            raise ConfigError("candidate ladder is empty")
        try:
            ladder = sorted((model_preset(n) for n in names), key=lambda m: m.num_layers * m.hidden_dim ** 2)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
    mems = _parse_values(args.cpu_mem, "cpu_mem") if args.cpu_mem else tuple(g * 1e9 for g in DEFAULT_CPU_MEM_GB)
    try:
        policies = tuple(PolicyId(p.strip().upper()) for p in args.policies.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = run_capacity(hw, mems, ladder, policies, workers=args.workers)
    _emit(to_csv(rows, CAPACITY_COLUMNS), args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = _scenario(args)
    report = validate(sc.hardware, sc.model)
    for w in report.warnings:
        print(f"warning: {w}")
    if not report.ok:
        for e in report.errors:
            print(f"error: {e}")
        return EXIT_CONFIG
    check_gpu_fit(sc.model, sc.hardware, (), sc.simulation.granularity, sc.simulation.inbound_share)
    plan = resolve_plan(sc)
    check_gpu_fit(sc.model, sc.hardware, plan.swapped_layers, sc.simulation.granularity,
                  sc.simulation.inbound_share)
    print(f"ok: {sc.model.name} on {sc.hardware.name}, batch {sc.model.batch_size}, variant {sc.variant.value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="offloadsim",
        description="Plan and simulate single-GPU fine-tuning with CPU-memory and NVMe offloading.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p, variant=True):
        p.add_argument("--scenario", metavar="FILE", help="scenario document (YAML or JSON)")
        p.add_argument("--preset", metavar="NAME",
                       help="bundled scenario, e.g. 13b-a100-12ssd-b32 (known: "
                            + ", ".join(SCENARIO_PRESETS[:3]) + ", ...)")
        if variant:
            p.add_argument("--variant", choices=[v.value for v in ScheduleVariant], type=str.upper,
                           help="override the scenario's schedule variant")

    p = sub.add_parser("plan", help="choose the swap set and print the predicted breakdown")
    scenario_args(p)
    p.add_argument("--out", metavar="FILE", help="write the JSON report here")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="simulate one iteration and check trace invariants")
    scenario_args(p)
    p.add_argument("--trace", metavar="FILE", help="write a Chrome trace here")
    p.add_argument("--out", metavar="FILE", help="write the JSON report here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="simulate every variant across one axis; CSV output")
    scenario_args(p, variant=False)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="comma-separated values (cpu_mem in GB)")
    p.add_argument("--variants", help="comma-separated subset of SERIAL,PIPELINED,OVERLAPPED")
    p.add_argument("--out", metavar="FILE", help="CSV destination (default stdout)")
    p.add_argument("--workers", type=int, default=1, metavar="N")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("capacity", help="largest trainable model per CPU memory size and policy")
    p.add_argument("--scenario", metavar="FILE", help="take the hardware from this scenario")
    p.add_argument("--preset", metavar="NAME", help="hardware preset (e.g. 4090-12ssd) or scenario preset")
    p.add_argument("--cpu-mem", help="comma-separated CPU memory sizes in GB (default 128..768)")
    p.add_argument("--models", help="comma-separated model presets forming the candidate ladder "
                                    f"(default: {', '.join(MODEL_PRESETS)})")
    p.add_argument("--policies", default=",".join(pol.value for pol in PolicyId))
    p.add_argument("--out", metavar="FILE", help="CSV destination (default stdout)")
    p.add_argument("--workers", type=int, default=1, metavar="N")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("validate", help="check a scenario without simulating it")
    scenario_args(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
