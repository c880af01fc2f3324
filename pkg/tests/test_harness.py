import json
import math
import os

import numpy as np
import pandas as pd
import pytest

from config.run_config import build_run_config
from harness.checkpoint import DONE, FAILED, Checkpoint, SweepTask, checkpoint_url
from harness.checks import CheckReport, CoupledOrbits, check_counting_bounds, check_distance_recursion, run_checks
from harness.commands import params_from_config
from harness.main import main
from harness.manifest import MANIFEST_NAME, RunManifest
from harness.writers import file_digest, read_table, to_json_text, write_csv, write_json

FAST = [
    "grid.base_points=1024",
    "grid.refine_depth=2",
    "run.threads=1",
    "run.lyapunov_samples=2000",
    "run.burn_in=10",
    "run.check_orbits=200",
    "run.check_probes=10",
    "ladder.max_level=0",
    "ladder.c1_samples=50",
]


def _args(command, directory, *overrides):
    argv = [command]
    for assignment in FAST + [f"output.dir={directory}", *overrides]:
        argv += ["--set", assignment]
    return argv


def _manifest(directory):
    with open(os.path.join(directory, MANIFEST_NAME), encoding="utf-8") as f:
        return json.load(f)


def _stdout(capsys):
    return json.loads(capsys.readouterr().out)


# ── writers ──────────────────────────────────────────────────────────────────

def test_csv_round_trips_floats_exactly(tmp_path):
    values = np.array([1 / 3, math.pi * 1e-300, -2.0 ** -52, 1e17 + 1, 0.1])
    path = write_csv(pd.DataFrame({"x": values}), str(tmp_path / "x.csv"))
    assert read_table(path)["x"].to_numpy().tolist() == values.tolist()
    assert os.listdir(tmp_path) == ["x.csv"]


def test_json_is_sorted_and_nan_free(tmp_path):
    text = to_json_text({"b": float("nan"), "a": np.float64(1.5), "c": [np.int64(2), np.bool_(True)]})
    assert json.loads(text) == {"a": 1.5, "b": None, "c": [2, True]}
    assert text.index('"a"') < text.index('"b"')
    path = write_json({"k": 1}, str(tmp_path / "sub" / "k.json"))
    assert json.load(open(path)) == {"k": 1}


# ── checkpoint and manifest ──────────────────────────────────────────────────

def test_checkpoint_keeps_done_rows_of_its_own_config(tmp_path):
    url = checkpoint_url(str(tmp_path))
    checkpoint = Checkpoint(url, "hash-a")
    checkpoint.record(0, -1.0, DONE, {"E": -1.0, "delta": 0.1 + 0.2})
    checkpoint.record(1, -0.5, FAILED, None, "NoConvergence: stalled")
    assert checkpoint.completed() == {0: {"E": -1.0, "delta": 0.1 + 0.2}}
    checkpoint.close()

    other = Checkpoint(url, "hash-b")
    assert other.completed() == {}
    db = other.SessionLocal()
    assert db.query(SweepTask).count() == 0
    db.close()
    other.close()


def test_manifest_lists_digests(tmp_path):
    config = build_run_config({}, [f"output.dir={tmp_path}"])
    manifest = RunManifest.start("curve", config)
    path = write_json({"x": 1}, str(tmp_path / "out.json"))
    manifest.record_outputs([path])
    manifest.finish(0)
    payload = json.load(open(manifest.write(str(tmp_path))))
    assert payload["config_hash"] == config.config_hash()
    assert payload["outputs"] == {"out.json": file_digest(path)}
    assert payload["status"] == "ok" and payload["exit_code"] == 0


# ── property suite ───────────────────────────────────────────────────────────

def test_distance_recursion_on_clean_orbits(reference_params, rng):
    result = check_distance_recursion(CoupledOrbits(reference_params, rng, 100))
    assert result.passed
    assert result.max_error <= 1e-8


def test_corrupted_fibre_map_is_pinpointed(reference_params, rng):
    result = check_distance_recursion(CoupledOrbits(reference_params, rng, 100, fault_step=5))
    assert not result.passed
    assert result.counterexample["step"] == 5


def test_counting_bounds_hold(reference_params, rng):
    result = check_counting_bounds(reference_params, rng, count=10, horizon=2000)
    assert result.passed
    assert result.details["violations"] == 0


def test_check_suite_identities_pass():
    config = build_run_config({}, FAST)
    report = run_checks(config, params_from_config(config))
    names = {r.name for r in report.results}
    assert {"distance_recursion", "distance_distortion_relation", "distortion_monotone", "distortion_inequality",
            "derivative_reconstruction", "remainder_bound", "derivative_recursions",
            "visit_frequency_bounds", "mirror_identity", "region_transition"} <= names
    assert report.identities_passed, [r.name for r in report.results if r.kind == "identity" and not r.passed]
    transition = next(r for r in report.results if r.name == "region_transition")
    assert transition.passed, transition.counterexample


# ── command line ─────────────────────────────────────────────────────────────

def test_invalid_config_exits_with_validation_code(tmp_path, capsys):
    assert main(_args("curve", tmp_path, "cocycle.lambda_sq=-1")) == 2
    assert _stdout(capsys)["error"] == "ConfigError"
    assert main(_args("curve", tmp_path, "grid.base_points=1000")) == 2


def test_curve_needs_single_mode(tmp_path, capsys):
    assert main(_args("curve", tmp_path, "energy.mode=sweep")) == 2
    assert _manifest(tmp_path)["exit_code"] == 2


def test_curve_is_deterministic(tmp_path, capsys):
    assert main(_args("curve", tmp_path)) == 0
    summary = _stdout(capsys)["summary"]
    assert summary["ordered"] and summary["delta"] > 0
    first = _manifest(tmp_path)["outputs"]
    assert set(first) == {"curve.csv", "curve_summary.json"}
    assert main(_args("curve", tmp_path)) == 0
    assert _manifest(tmp_path)["outputs"] == first
    frame = read_table(str(tmp_path / "curve.csv"))
    assert (frame["psi_u"] > frame["psi_s"]).all()


def test_edge_with_convergent_bracket_exits_with_bracket_code(tmp_path, capsys):
    assert main(_args("edge", tmp_path, "energy.bracket_lo=-10", "energy.bracket_hi=-9")) == 4
    assert _stdout(capsys)["error"] == "BracketInvalid"
    assert _manifest(tmp_path)["error"]["error"] == "BracketInvalid"


def test_check_command_writes_report_and_schema(tmp_path, capsys):
    assert main(_args("check", tmp_path, "run.inject_fault=fibre")) == 0
    summary = _stdout(capsys)["summary"]
    assert "distance_recursion" in summary["failed"]
    assert not summary["identities_passed"]
    with open(tmp_path / "check.json", encoding="utf-8") as f:
        report = CheckReport.model_validate(json.load(f))
    failed = next(r for r in report.results if r.name == "distance_recursion")
    assert failed.counterexample["step"] == 5
    with open(tmp_path / "check.schema.json", encoding="utf-8") as f:
        schema = json.load(f)
    assert {"results", "passed", "identities_passed"} <= set(schema["properties"])


SWEEP = ["energy.values=-2.0,-1.5,-1.0", "energy.E0=0.0"]


def test_sweep_resume_reproduces_the_csv(tmp_path, capsys):
    full, resumed = tmp_path / "full", tmp_path / "resumed"
    assert main(_args("sweep", full, *SWEEP)) == 0
    summary = _stdout(capsys)["summary"]
    assert summary["done"] == 3 and "fit_error" in summary

    assert main(_args("sweep", resumed, *SWEEP)) == 0
    config = build_run_config({}, FAST + SWEEP + [f"output.dir={resumed}"])
    checkpoint = Checkpoint(checkpoint_url(str(resumed)), config.config_hash())
    db = checkpoint.SessionLocal()
    db.query(SweepTask).filter(SweepTask.index == 1).delete()
    db.commit()
    db.close()
    checkpoint.close()
    os.remove(resumed / "sweep.csv")

    assert main(_args("sweep", resumed, *SWEEP)) == 0
    assert file_digest(str(resumed / "sweep.csv")) == file_digest(str(full / "sweep.csv"))
    frame = read_table(str(full / "sweep.csv"))
    assert frame["E"].tolist() == [-2.0, -1.5, -1.0]
    assert (frame["status"] == DONE).all()
    assert frame["E0_minus_E"].tolist() == [2.0, 1.5, 1.0]


def test_sweep_records_failed_rows(tmp_path, capsys):
    assert main(_args("sweep", tmp_path, "energy.values=-2.0,1.0", "energy.E0=0.0", "horizon.T_max=4096")) == 0
    frame = read_table(str(tmp_path / "sweep.csv"))
    assert frame["status"].tolist() == [DONE, FAILED]
    assert math.isnan(frame["delta"].iloc[1])
    assert isinstance(frame["error"].iloc[1], str)
    tasks = _manifest(tmp_path)["tasks"]
    assert [t["status"] for t in tasks] == [DONE, FAILED]


@pytest.mark.slow
def test_sweep_is_independent_of_the_process_count(tmp_path, capsys):
    one, two = tmp_path / "one", tmp_path / "two"
    assert main(_args("sweep", one, *SWEEP)) == 0
    assert main(_args("sweep", two, *SWEEP, "run.threads=2")) == 0
    assert file_digest(str(one / "sweep.csv")) == file_digest(str(two / "sweep.csv"))


def test_fit_command_on_an_existing_sweep(tmp_path, capsys):
    distances = np.logspace(-6, -3, 12)
    frame = pd.DataFrame({
        "E": -distances, "E0_minus_E": distances, "delta": distances, "theta_c": 0.0, "quad_coeff": 30.0,
        "c1_norm_u": distances ** -0.5, "c1_norm_s": distances ** -0.5, "c2_norm_u": distances ** -1.5,
        "sigma_plus_max": 0, "sigma_minus_max": 0, "level_k": 0, "eta": 0.0, "lyapunov": 1.0,
        "residual_max": 1e-12, "status": DONE,
    })
    path = write_csv(frame, str(tmp_path / "input.csv"))
    assert main(["fit", "--input", path, "--set", f"output.dir={tmp_path}"]) == 0
    summary = _stdout(capsys)["summary"]
    assert summary["slope"] == pytest.approx(1.0, rel=1e-12)
    assert summary["slope_in_band"]
    assert summary["exponent_u"] == pytest.approx(-0.5, abs=1e-9)
    assert "fit.json" in _manifest(tmp_path)["outputs"]


def test_fit_without_a_sweep_file(tmp_path, capsys):
    assert main(["fit", "--set", f"output.dir={tmp_path}"]) == 2
