import csv
import dataclasses
import io

import pytest

from offloadsim.errors import ConfigError
from offloadsim.runner import (
    CAPACITY_COLUMNS,
    SWEEP_COLUMNS,
    SweepSpec,
    apply_axis,
    resolve_plan,
    run_capacity,
    run_sweep,
    simulate_scenario,
    to_csv,
)
from offloadsim.hardware import hardware_preset
from offloadsim.scenario import scenario_preset
from offloadsim.schedule import ScheduleVariant
from offloadsim.workload import model_ladder

GRID = tuple(round(0.1 * k, 1) for k in range(11))


def ssd_placed(name):
    sc = scenario_preset(name)
    return dataclasses.replace(sc, simulation=dataclasses.replace(sc.simulation, checkpoint_placement="ssd"))


def test_swap_sweep_minimum_near_planner_star():
    base = ssd_placed("13b-a100-12ssd-b64")
    star = resolve_plan(base).swap_coefficient
    rows = run_sweep(SweepSpec(base, "swap_coefficient", GRID, (ScheduleVariant.OVERLAPPED,)), workers=4)
    assert all(r["status"] == "ok" for r in rows)
    makespans = [r["makespan_s"] for r in rows]
    best = GRID[makespans.index(min(makespans))]
    assert abs(best - star) <= 0.1 + 1e-9
    # the predicted curve has its minimum at the grid point nearest the star
    predicted = [r["predicted_t_iter_s"] for r in rows]
    assert abs(GRID[predicted.index(min(predicted))] - star) <= 0.05 + 1e-9


def test_sweep_rows_and_speedup():
    base = scenario_preset("13b-4090-12ssd-b8")
    rows = run_sweep(SweepSpec(base, "n_ssd", (2, 6)), workers=2)
    assert [(r["value"], r["variant"]) for r in rows] == [
        (2, "SERIAL"), (2, "PIPELINED"), (2, "OVERLAPPED"),
        (6, "SERIAL"), (6, "PIPELINED"), (6, "OVERLAPPED"),
    ]
    for r in rows:
        assert r["status"] == "ok"
        assert r["speedup_vs_serial"] == pytest.approx(
            next(x["makespan_s"] for x in rows if x["value"] == r["value"] and x["variant"] == "SERIAL")
            / r["makespan_s"])


def test_sweep_error_cells_do_not_stop_the_sweep():
    base = scenario_preset("175b-4090-12ssd-b8")
    rows = run_sweep(SweepSpec(base, "batch_size", (8, 4096), (ScheduleVariant.OVERLAPPED,)))
    assert rows[0]["status"] == "ok"
    assert rows[1]["status"] == "error" and rows[1]["error"]


def test_sweep_spec_validation():
    base = scenario_preset("13b-a100-12ssd-b8")
    with pytest.raises(ConfigError):
        SweepSpec(base, "batch_size", ())
    with pytest.raises(ConfigError):
        SweepSpec(base, "seq_len", (1,))
    with pytest.raises(ConfigError):
        SweepSpec(base, "n_ssd", (1,), ())
    for axis, value in (("batch_size", 0), ("n_ssd", 1.5), ("swap_coefficient", 1.2), ("cpu_mem", 0)):
        with pytest.raises(ConfigError):
            apply_axis(base, axis, value)


def test_apply_axis():
    base = scenario_preset("13b-a100-12ssd-b8")
    assert apply_axis(base, "batch_size", 32).model.batch_size == 32
    hw = apply_axis(base, "n_ssd", 3).hardware
    assert hw.n_ssd == 3 and hw.ssd_capacity == pytest.approx(3 * 3.84e12)
    assert apply_axis(base, "cpu_mem", 1e11).hardware.cpu_mem == 1e11
    assert apply_axis(base, "swap_coefficient", 0.5).planner.value == 0.5


def test_csv_output_schema():
    base = scenario_preset("13b-a100-12ssd-b8")
    rows = run_sweep(SweepSpec(base, "batch_size", (8,), (ScheduleVariant.SERIAL,)))
    text = to_csv(rows, SWEEP_COLUMNS)
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert tuple(parsed[0]) == SWEEP_COLUMNS
    assert parsed[0]["csv_version"] == "1"
    assert float(parsed[0]["makespan_s"]) == rows[0]["makespan_s"]


def test_capacity_rows():
    rows = run_capacity(hardware_preset("4090-12ssd"), (128e9, 768e9), model_ladder(), workers=2)
    assert [tuple(r) for r in rows][0] == CAPACITY_COLUMNS
    assert [(r["cpu_mem"], r["policy"]) for r in rows] == [
        (128e9, "ZERO_INFINITY_LIKE"), (128e9, "FUYOU_LIKE"),
        (768e9, "ZERO_INFINITY_LIKE"), (768e9, "FUYOU_LIKE")]
    with pytest.raises(ConfigError):
        run_capacity(hardware_preset("a100"), (128e9,), [])


def test_simulation_report():
    res = simulate_scenario(scenario_preset("13b-a100-12ssd-b32"))
    rep = res.report()
    assert rep["invariants_ok"]
    assert rep["makespan_s"] >= rep["roofline_bound_s"]
    assert rep["trace"]["meta"]["variant"] == "OVERLAPPED"
    assert rep["trace"]["gradient_bytes_on_ssd"] == 0
