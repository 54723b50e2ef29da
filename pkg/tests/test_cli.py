import json
from pathlib import Path

import numpy as np
import pytest

from daps.cli import ExperimentPlan, main, read_trace, regenerate_report, run_experiment
from daps.data import load_matrix
from daps.records import read_iteration_log, read_json


def test_generate_and_convert(tmp_path):
    raw = tmp_path / "a.bin"
    assert main(["generate", "--n", "6", "--m", "10", "--xi", "1.5", "--seed", "1", "--out", str(raw)]) == 0
    a = load_matrix(raw, fmt="raw")
    assert a.shape == (6, 10)
    csv_path = tmp_path / "a.csv"
    assert main(["convert", str(raw), str(csv_path), "--from", "raw", "--to", "csv"]) == 0
    np.testing.assert_allclose(load_matrix(csv_path, fmt="csv"), a, rtol=1e-15)


def test_run_daps_writes_artifacts(tmp_path):
    out = tmp_path / "run"
    code = main([
        "run", "--algo", "daps", "--n", "24", "--m", "72", "--p", "2", "--d", "2",
        "--xi", "1.3", "--seed", "3", "--out", str(out),
    ])
    assert code == 0
    log = read_iteration_log(out / "log.csv")
    summary = read_json(out / "summary.json")
    assert summary["algorithm"] == "daps"
    assert log[-1]["k"] == summary["iterations"]
    assert summary["final"]["kkt_scaled"] < 1e-4
    assert summary["rel_error"] is not None


def test_run_with_config_overrides(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"max_iter": 4, "rel_tol": 1e-16}))
    out = tmp_path / "run"
    main([
        "run", "--algo", "daps", "--n", "16", "--m", "48", "--p", "2", "--d", "2",
        "--seed", "0", "--config", str(cfg), "--out", str(out),
    ])
    summary = read_json(out / "summary.json")
    assert summary["iterations"] == 4
    assert summary["terminated_by"] == "max_iter"


def test_run_determinism_byte_identical(tmp_path):
    args = [
        "run", "--algo", "daps", "--n", "20", "--m", "60", "--p", "2", "--d", "4",
        "--xi", "1.2", "--seed", "7",
    ]
    main(args + ["--out", str(tmp_path / "r1")])
    main(args + ["--out", str(tmp_path / "r2")])
    log1 = (tmp_path / "r1" / "log.csv").read_bytes()
    log2 = (tmp_path / "r2" / "log.csv").read_bytes()
    assert log1 == log2


def test_run_from_file_data(tmp_path):
    raw = tmp_path / "data.bin"
    main(["generate", "--n", "12", "--m", "36", "--xi", "1.4", "--seed", "2", "--out", str(raw)])
    out = tmp_path / "run"
    code = main([
        "run", "--algo", "ssi", "--data", str(raw), "--p", "2", "--d", "3",
        "--seed", "2", "--out", str(out),
        "--config", str(_write_cfg(tmp_path, {"max_iter": 30})),
    ])
    assert code == 0
    assert (out / "log.csv").exists()


def _write_cfg(tmp_path, payload):
    path = tmp_path / "overrides.json"
    path.write_text(json.dumps(payload))
    return path


def test_sweep_and_report_regeneration(tmp_path):
    out = tmp_path / "sweep"
    plan = ExperimentPlan(
        scenario="sweep",
        base={"n": 16, "m": 48, "p": 2, "d": 2},
        param="xi",
        values=[1.5, 1.2],
        seeds=[0],
        algorithms=["daps", "ssi"],
        out=str(out),
    )
    rows = run_experiment(plan, overrides={"max_iter": 50})
    assert len(rows) == 4
    assert all(r["status"] == "ok" for r in rows)
    table = (out / "summary.csv").read_bytes()
    regenerated = tmp_path / "report.csv"
    regenerate_report(out, regenerated)
    assert regenerated.read_bytes() == table


def test_sweep_marks_failed_cells(tmp_path):
    out = tmp_path / "sweep"
    plan = ExperimentPlan(
        scenario="sweep",
        base={"n": 16, "m": 48, "p": 2, "d": 2},
        param="p",
        values=[2, 40],  # p=40 > n fails validation
        seeds=[0],
        algorithms=["daps"],
        out=str(out),
    )
    rows = run_experiment(plan, overrides={"max_iter": 20})
    status = {r["value"]: r["status"] for r in rows}
    assert status[2] == "ok"
    assert status[40].startswith("failed")


def test_attack_subcommand_on_recorded_trace(tmp_path):
    raw = tmp_path / "data.bin"
    main(["generate", "--n", "8", "--m", "24", "--xi", "1.3", "--seed", "5", "--out", str(raw)])
    run_dir = tmp_path / "run"
    main([
        "run", "--algo", "slrpgn", "--data", str(raw), "--p", "2", "--d", "2",
        "--seed", "5", "--out", str(run_dir), "--record-trace",
        "--config", str(_write_cfg(tmp_path, {"max_iter": 6})),
    ])
    trace = read_trace(run_dir / "trace")
    assert trace.algorithm == "slrpgn"
    report_path = tmp_path / "attack.json"
    code = main([
        "attack", "--trace", str(run_dir / "trace"), "--target", "0",
        "--data", str(raw), "--d", "2", "--p", "2", "--out", str(report_path),
    ])
    assert code == 0
    report = read_json(report_path)
    assert report["identifiable"] is True
    assert report["relative_error"] <= 1e-6


def test_theory_check_subcommand(tmp_path):
    run_dir = tmp_path / "run"
    main([
        "run", "--algo", "daps", "--n", "20", "--m", "60", "--p", "2", "--d", "2",
        "--seed", "4", "--theory-mode", "--out", str(run_dir),
        "--config", str(_write_cfg(tmp_path, {"max_iter": 25, "rel_tol": 1e-16})),
    ])
    report_path = tmp_path / "theory.json"
    code = main(["theory-check", "--run", str(run_dir), "--out", str(report_path)])
    assert code == 0
    payload = read_json(report_path)
    assert payload["descent"]["enabled"] is True
    assert payload["descent"]["violations"] == []
    assert payload["distance_bound"]["violations"] == []
    assert payload["constants"]["rho"] == 1.0


def test_shipped_plan_templates_parse():
    for name in ("sweep_n", "sweep_m", "sweep_p", "sweep_xi"):
        payload = json.loads(Path(f"configs/{name}.json").read_text())
        plan = ExperimentPlan(**payload)
        assert plan.scenario == "sweep"
        assert len(plan.values) == 4
