import csv
import io
import json
import re

import pytest

from offloadsim import cli, runner
from offloadsim.invariants import Check, InvariantReport


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def coefficient(text):
    return float(re.search(r"swap coefficient ([0-9.]+)", text).group(1))


def test_plan_anchors(capsys):
    code, out, _ = run(capsys, "plan", "--preset", "13b-a100-12ssd-b32")
    assert code == 0 and coefficient(out) == 0
    assert "bottleneck" in out
    for b in (64, 80):
        code, out, _ = run(capsys, "plan", "--preset", f"13b-a100-12ssd-b{b}")
        assert code == 0 and coefficient(out) > 0


def test_plan_json_report(capsys, tmp_path):
    out_file = tmp_path / "plan.json"
    assert run(capsys, "plan", "--preset", "13b-a100-12ssd-b64", "--out", str(out_file))[0] == 0
    report = json.loads(out_file.read_text())
    assert report["plan"]["predicted"]["t_iter"] > 0
    assert report["plan"]["swap_coefficient"] > 0


def test_config_error_exit_code(capsys, tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("schema_version: 1\nmodel: gpt3-13b\nhardware: {preset: a100, n_ssd: 0}\n")
    code, _, err = run(capsys, "plan", "--scenario", str(path))
    assert code == cli.EXIT_CONFIG == 2
    assert "n_ssd" in err
    assert run(capsys, "plan")[0] == 2
    assert run(capsys, "plan", "--preset", "nonsense")[0] == 2
    assert run(capsys, "simulate", "--scenario", str(tmp_path / "missing.yaml"))[0] == 2


def test_infeasible_exit_code(capsys):
    code, _, err = run(capsys, "plan", "--preset", "805b-4090-12ssd-b64")
    assert code == cli.EXIT_INFEASIBLE == 3
    assert "infeasible" in err and "FIFO" in err


def test_invariant_failure_exit_code(capsys, monkeypatch):
    def broken(trace):
        return InvariantReport([Check("resource_exclusive", False, "GPU_COMPUTE: forced")])

    monkeypatch.setattr(runner, "check_trace_invariants", broken)
    code, out, _ = run(capsys, "simulate", "--preset", "13b-a100-12ssd-b8")
    assert code == cli.EXIT_INVARIANT == 4
    assert "[FAIL] resource_exclusive" in out


def test_simulate_serial_vs_overlapped(capsys, tmp_path):
    spans = {}
    for v in ("SERIAL", "OVERLAPPED"):
        out_file = tmp_path / f"{v}.json"
        code, out, _ = run(capsys, "simulate", "--preset", "13b-4090-12ssd-b16", "--variant", v,
                           "--out", str(out_file))
        assert code == 0 and "[pass]" in out
        spans[v] = json.loads(out_file.read_text())["makespan_s"]
    assert spans["OVERLAPPED"] < spans["SERIAL"]


def test_trace_file_sorted(capsys, tmp_path):
    path = tmp_path / "t.json"
    assert run(capsys, "simulate", "--preset", "13b-a100-12ssd-b8", "--trace", str(path))[0] == 0
    events = [e for e in json.loads(path.read_text())["traceEvents"] if e["ph"] == "X"]
    assert events and [e["ts"] for e in events] == sorted(e["ts"] for e in events)


def test_sweep_csv(capsys):
    code, out, _ = run(capsys, "sweep", "--preset", "13b-a100-12ssd-b8", "--axis", "batch_size",
                       "--values", "8,16", "--variants", "pipelined,overlapped", "--workers", "2")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [(r["value"], r["variant"]) for r in rows] == [
        ("8", "PIPELINED"), ("8", "OVERLAPPED"), ("16", "PIPELINED"), ("16", "OVERLAPPED")]


def test_sweep_usage_errors(capsys):
    assert run(capsys, "sweep", "--preset", "13b-a100-12ssd-b8", "--axis", "batch_size", "--values", "")[0] == 2
    assert run(capsys, "sweep", "--preset", "13b-a100-12ssd-b8", "--axis", "n_ssd", "--values", "1.5")[0] == 2
    assert run(capsys, "sweep", "--preset", "13b-a100-12ssd-b8", "--axis", "n_ssd", "--values", "2",
               "--variants", "fast")[0] == 2
    with pytest.raises(SystemExit) as err:
        cli.main(["sweep", "--preset", "13b-a100-12ssd-b8", "--axis", "seq_len", "--values", "1"])
    assert err.value.code == 2
    capsys.readouterr()


def test_capacity_csv(capsys):
    code, out, _ = run(capsys, "capacity", "--preset", "4090-12ssd", "--cpu-mem", "128,768")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    by = {(r["cpu_mem"], r["policy"]): r for r in rows}
    assert int(by[("128000000000.0", "FUYOU_LIKE")]["params"]) >= 64e9
    assert int(by[("768000000000.0", "FUYOU_LIKE")]["params"]) >= int(by[("768000000000.0", "ZERO_INFINITY_LIKE")]["params"])


def test_capacity_usage_errors(capsys):
    assert run(capsys, "capacity", "--models", ",")[0] == 2
    assert run(capsys, "capacity", "--models", "gpt3-1t")[0] == 2
    assert run(capsys, "capacity", "--policies", "MAGIC")[0] == 2


def test_validate(capsys, tmp_path):
    code, out, _ = run(capsys, "validate", "--preset", "175b-4090-12ssd-b8")
    assert code == 0 and out.startswith("ok:")
    path = tmp_path / "small.yaml"
    path.write_text("schema_version: 1\nmodel: gpt3-175b\nhardware: {preset: a100-1ssd, ssd_capacity: 1.0e12}\n")
    code, out, _ = run(capsys, "validate", "--scenario", str(path))
    assert code == 0 and "warning: ssd_capacity" in out
    assert run(capsys, "validate", "--preset", "805b-4090-12ssd-b64")[0] == 3


def test_workers_must_be_positive():
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--preset", "13b-a100-12ssd-b8", "--axis", "n_ssd", "--values", "2", "--workers", "0"])
