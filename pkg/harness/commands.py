"""The six lab commands.

Each cmd_* takes a validated RunConfig and the run's manifest, writes its
files into config.output.dir, records them in the manifest and returns a
small JSON-able summary for stdout.
"""
import json
import logging
import math
import os
from multiprocessing import Pool
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd

from asymptotics import (EXTRA_COLUMNS, SWEEP_COLUMNS, EdgeEstimate, build_report, energy_schedule, find_edge,
                         gap_profile, measure_energy)
from cocycle.main import CocycleParams
from cocycle.potential import PotentialSpec
from config.run_config import RunConfig
from curves import CurveSettings, compute_curves, curve_frame, curve_norms, is_ordered
from errors import LabError, ValidationError
from harness.checkpoint import DONE, FAILED, Checkpoint, checkpoint_url
from harness.checks import CheckReport, run_checks
from harness.manifest import RunManifest
from harness.writers import _clean, read_table, write_json, write_table
from ladder import (ScaleLadder, box_images, box_separation, box_touching_energy, build_ladder, check_condition_C1,
                    check_condition_C2)
from rotation.main import RotationNumber

logger = logging.getLogger(__name__)

STATUS_COLUMNS = ["status", "error"]
ROW_COLUMNS = SWEEP_COLUMNS + EXTRA_COLUMNS + STATUS_COLUMNS


def params_from_config(config: RunConfig, E: Optional[float] = None) -> CocycleParams:
    """The cocycle of a config; E defaults to the first configured energy."""
    omega = RotationNumber.from_text(config.cocycle.omega)
    potential = PotentialSpec.from_settings(config.potential)
    energy = config.energy.values[0] if E is None else E
    return CocycleParams(potential, config.cocycle.lambda_sq, energy, omega)


def _output_dir(config: RunConfig) -> str:
    directory = config.output.dir
    os.makedirs(directory, exist_ok=True)
    return directory


def _ladder_from_config(params: CocycleParams, config: RunConfig) -> ScaleLadder:
    return build_ladder(params, max_level=config.ladder.max_level, m_choice=config.ladder.m_choice,
                        n_max=config.cocycle.n_max, tau=config.cocycle.tau)


def _find_edge(params: CocycleParams, config: RunConfig, settings: CurveSettings) -> EdgeEstimate:
    return find_edge(params, (config.energy.bracket_lo, config.energy.bracket_hi), tol=config.tolerances.edge_tol,
                     settings=settings, gap_floor=config.resolved_gap_floor(), strict=config.run.strict)


# ── curve ────────────────────────────────────────────────────────────────────

def cmd_curve(config: RunConfig, manifest: RunManifest) -> Dict[str, Any]:
    """psi^u and psi^s at the first configured energy: curve.csv plus curve_summary.json."""
    if config.energy.mode != "single":
        raise ValidationError(f"curve needs energy.mode = single, got '{config.energy.mode}'")
    params = params_from_config(config)
    settings = CurveSettings.from_run_config(config)
    curve_u, curve_s = compute_curves(params, settings)
    profile = gap_profile(curve_u, curve_s, strict=config.run.strict)
    c1_u, c2_u = curve_norms(curve_u)
    c1_s, c2_s = curve_norms(curve_s)
    directory = _output_dir(config)
    summary = {
        "params": params.to_dict(),
        "points": len(curve_u),
        "horizon": {"unstable": curve_u.horizon, "stable": curve_s.horizon},
        "ordered": is_ordered(curve_u, curve_s),
        "gap": profile.to_dict(),
        "norms": {"c1_u": c1_u, "c2_u": c2_u, "c1_s": c1_s, "c2_s": c2_s},
        "residual_max": max(curve_u.residual_max, curve_s.residual_max),
    }
    paths = write_table(curve_frame(curve_u, curve_s), directory, "curve", config.output.formats)
    paths.append(write_json(summary, os.path.join(directory, "curve_summary.json")))
    manifest.record_outputs(paths)
    logger.info(f"Curves at E={params.E!r}: {len(curve_u)} points, delta={profile.delta:.6g}")
    return {"E": params.E, "points": len(curve_u), "delta": profile.delta, "ordered": summary["ordered"]}


# ── edge ─────────────────────────────────────────────────────────────────────

def cmd_edge(config: RunConfig, manifest: RunManifest) -> Dict[str, Any]:
    params = params_from_config(config)
    settings = CurveSettings.from_run_config(config)
    estimate = _find_edge(params, config, settings)
    manifest.bracket_history = estimate.history
    path = write_json(estimate.to_dict(), os.path.join(_output_dir(config), "edge.json"))
    manifest.record_outputs([path])
    return {"E0": estimate.E0, "bracket": list(estimate.bracket), "method": estimate.method,
            "disagreement": estimate.disagreement}


# ── sweep ────────────────────────────────────────────────────────────────────

# One worker process owns one copy of these; built once by _init_worker.
_worker: Dict[str, Any] = {}


def _init_worker(config: RunConfig, E0: Optional[float]) -> None:
    params = params_from_config(config)
    try:
        ladder = _ladder_from_config(params, config)
    except LabError as e:
        logger.warning(f"No ladder for the sweep: {e}")
        ladder = None
    _worker.update(config=config, params=params, settings=CurveSettings.from_run_config(config), ladder=ladder,
                   E0=E0)


def _normalized(row: Dict[str, Any]) -> Dict[str, Any]:
    """The row exactly as it reads back from a checkpoint."""
    return json.loads(json.dumps(_clean(row)))


def _failed_row(E: float, error: Exception) -> Dict[str, Any]:
    row = {column: math.nan for column in SWEEP_COLUMNS + EXTRA_COLUMNS}
    row["E"] = E
    row.update(status=FAILED, error=f"{type(error).__name__}: {error}")
    return row


def _measure_task(task: Tuple[int, float]) -> Tuple[int, float, Dict[str, Any]]:
    """Runs one sweep energy in a worker; failures become rows."""
    index, E = task
    config: RunConfig = _worker["config"]
    try:
        row = measure_energy(_worker["params"].with_energy(E), _worker["settings"], E0=_worker["E0"],
                             ladder=_worker["ladder"], quad_C=config.tolerances.quad_C,
                             lyapunov_samples=config.run.lyapunov_samples, burn_in=config.run.burn_in)
        row.update(status=DONE, error=None)
    except LabError as e:
        logger.warning(f"Sweep task {index} at E={E!r} failed: {e}")
        row = _failed_row(E, e)
    except Exception as e:
        logger.error(f"Unexpected error in sweep task {index} at E={E!r}: {e}", exc_info=True)
        row = _failed_row(E, e)
    return index, E, _normalized(row)


def _run_tasks(tasks: List[Tuple[int, float]], config: RunConfig, E0: Optional[float]):
    """Yields finished tasks in schedule order."""
    threads = min(config.resolved_threads(), max(len(tasks), 1))
    if threads == 1:
        _init_worker(config, E0)
        for task in tasks:
            yield _measure_task(task)
        return
    logger.info(f"Running {len(tasks)} sweep tasks on {threads} processes")
    with Pool(threads, initializer=_init_worker, initargs=(config, E0)) as pool:
        for result in pool.imap(_measure_task, tasks):
            yield result


def _sweep_energies(config: RunConfig, params: CocycleParams,
                    manifest: RunManifest) -> Tuple[List[float], Optional[EdgeEstimate], float]:
    """Energies to sweep (an explicit list in single mode, else the geometric schedule), the edge and E0."""
    edge = None
    E0 = config.energy.E0
    if E0 is None:
        edge = _find_edge(params, config, CurveSettings.from_run_config(config))
        manifest.bracket_history = edge.history
        E0 = edge.E0
    if config.energy.mode == "single" and len(config.energy.values) > 1:
        energies = sorted(config.energy.values)
    else:
        energies = energy_schedule(E0, config.resolved_schedule_start(), config.energy.schedule_ratio,
                                   config.energy.schedule_points).tolist()
    return energies, edge, E0


def cmd_sweep(config: RunConfig, manifest: RunManifest) -> Dict[str, Any]:
    """Measures every scheduled energy, resumable from the checkpoint; writes sweep.csv and fit.json."""
    params = params_from_config(config)
    directory = _output_dir(config)
    energies, edge, E0 = _sweep_energies(config, params, manifest)
    checkpoint = Checkpoint(checkpoint_url(directory), config.config_hash())
    try:
        rows = checkpoint.completed()
        if rows:
            logger.info(f"Resuming sweep: {len(rows)} of {len(energies)} tasks already done")
        tasks = [(i, E) for i, E in enumerate(energies) if i not in rows]
        for index, E, row in _run_tasks(tasks, config, E0):
            checkpoint.record(index, E, row["status"], row, row["error"])
            rows[index] = row
    finally:
        checkpoint.close()

    for index, E in enumerate(energies):
        manifest.record_task(index, E, rows[index]["status"], rows[index]["error"])
    frame = pd.DataFrame([rows[i] for i in range(len(energies))], columns=ROW_COLUMNS)
    paths = write_table(frame, directory, "sweep", config.output.formats)

    done = int((frame["status"] == DONE).sum())
    summary: Dict[str, Any] = {"E0": E0, "tasks": len(energies), "done": done, "failed": len(energies) - done}
    try:
        report = build_report(frame, config.cocycle.lambda_sq, edge=edge, E0=E0)
        paths.append(write_json(report.to_dict(), os.path.join(directory, "fit.json")))
        summary.update(slope=report.linear.slope, exponent_u=report.norm_u.exponent,
                       exponent_s=report.norm_s.exponent)
    except ValidationError as e:
        logger.warning(f"No fit report: {e}")
        summary["fit_error"] = e.message
    manifest.record_outputs(paths)
    return summary


# ── ladder ───────────────────────────────────────────────────────────────────

def cmd_ladder(config: RunConfig, manifest: RunManifest) -> Dict[str, Any]:
    """Builds the ladder and reports (C2)_n, sampled (C1)_0 and the level-0 boxes at ladder.c1_energy."""
    E = config.ladder.c1_energy
    params = params_from_config(config, E)
    ladder = _ladder_from_config(params, config)
    conditions: Dict[str, Any] = {}
    for level in ladder.levels:
        try:
            conditions[f"C2_{level.n}"] = check_condition_C2(ladder, level.n)
        except LabError as e:
            conditions[f"C2_{level.n}"] = e.to_dict()
    c1 = check_condition_C1(ladder, 0, E, samples=config.ladder.c1_samples, step_cap=config.ladder.step_cap)
    conditions["C1_0"] = c1.to_dict()
    separation = box_separation(*box_images(ladder, 0, E, points=config.ladder.box_points))
    conditions["boxes_0"] = {"E": E, "separation": separation, "disjoint": separation > 0}
    try:
        E_minus = box_touching_energy(ladder, 0, (E, config.energy.bracket_hi), points=config.ladder.box_points)
        ladder.attach_energy_bracket(0, E_minus, config.energy.bracket_hi)
    except LabError as e:
        logger.warning(f"No level-0 energy bracket: {e}")
    payload = dict(ladder.to_dict(), conditions=conditions)
    path = write_json(payload, os.path.join(_output_dir(config), "ladder.json"))
    manifest.record_outputs([path])
    return {"levels": len(ladder.levels), "degenerate": ladder.degenerate, "C1_0": c1.passed,
            "boxes_disjoint_0": separation > 0}


# ── check ────────────────────────────────────────────────────────────────────

def cmd_check(config: RunConfig, manifest: RunManifest) -> Dict[str, Any]:
    """Runs the property suite; failures are data, the command itself succeeds."""
    report = run_checks(config, params_from_config(config))
    directory = _output_dir(config)
    paths = [write_json(report.model_dump(mode="json"), os.path.join(directory, "check.json")),
             write_json(CheckReport.model_json_schema(), os.path.join(directory, "check.schema.json"))]
    manifest.record_outputs(paths)
    failed = [r.name for r in report.results if not r.passed]
    return {"passed": report.passed, "identities_passed": report.identities_passed, "failed": failed}


# ── fit ──────────────────────────────────────────────────────────────────────

def cmd_fit(config: RunConfig, manifest: RunManifest, input_path: Optional[str] = None) -> Dict[str, Any]:
    """Fits an existing sweep CSV (default: sweep.csv in the output dir) into fit.json."""
    directory = _output_dir(config)
    path = input_path or os.path.join(directory, "sweep.csv")
    if not os.path.exists(path):
        raise ValidationError(f"sweep file not found: {path}")
    report = build_report(read_table(path), config.cocycle.lambda_sq, E0=config.energy.E0)
    out = write_json(report.to_dict(), os.path.join(directory, "fit.json"))
    manifest.record_outputs([out])
    return {"E0": report.E0, "slope": report.linear.slope, "slope_in_band": report.linear.slope_in_band(
        config.cocycle.lambda_sq), "exponent_u": report.norm_u.exponent, "exponent_s": report.norm_s.exponent}


COMMANDS = {
    "curve": cmd_curve,
    "edge": cmd_edge,
    "sweep": cmd_sweep,
    "ladder": cmd_ladder,
    "check": cmd_check,
    "fit": cmd_fit,
}
