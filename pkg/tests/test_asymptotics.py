import json
import math

import numpy as np
import pandas as pd
import pytest

from asymptotics import (
    EXTRA_COLUMNS,
    SWEEP_COLUMNS,
    build_report,
    collision_window,
    dominant_term_profile,
    energy_schedule,
    epsilon_of_energy,
    epsilon_trace,
    find_edge,
    fit_window,
    fit_linear_gap,
    fit_norm_exponent,
    gap_profile,
    measure_energy,
    off_window_gap_floor,
    second_differences,
    toy_norm_growth,
    trends_to_zero,
)
from curves import CurveSettings, compute_curves
from errors import BracketInvalid, SpanTooNarrow, ValidationError
from ladder import build_ladder, sigma_statistics
from rotation import Arc


def _small(params):
    return CurveSettings.for_params(params, base_points=1024, refine_depth=2)


@pytest.fixture(scope="module")
def distances():
    return np.logspace(-6, -3, 12)


@pytest.fixture(scope="module")
def collision_stats(collision_curves):
    return sigma_statistics(*collision_curves)


def _synthetic_frame(distances, E0=0.0):
    deltas = distances
    return pd.DataFrame({
        "E": E0 - distances, "E0_minus_E": distances, "delta": deltas, "theta_c": 0.0, "quad_coeff": 30.0,
        "c1_norm_u": deltas ** -0.5, "c1_norm_s": 1.01 * deltas ** -0.5, "c2_norm_u": deltas ** -1.5,
        "sigma_plus_max": 0, "sigma_minus_max": 0, "level_k": 0, "eta": 0.0, "lyapunov": 1.0,
        "residual_max": 1e-12, "status": "done",
    })


# ── fits ─────────────────────────────────────────────────────────────────────

def test_linear_fit_on_exact_data(distances):
    fit = fit_linear_gap(distances, distances)
    assert fit.slope == pytest.approx(1.0, rel=1e-12)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    assert fit.slope_in_band(30.0)


def test_affine_fit_reports_the_intercept(distances):
    fit = fit_linear_gap(distances, 0.9 * distances + 1e-9)
    assert fit.slope_affine == pytest.approx(0.9, rel=1e-6)
    assert fit.intercept_affine == pytest.approx(1e-9, rel=1e-3)
    assert not fit.slope_in_band(1e4)


def test_fits_need_enough_samples_and_decades(distances):
    with pytest.raises(SpanTooNarrow):
        fit_linear_gap(distances[:5], distances[:5])
    narrow = np.linspace(1e-4, 2e-4, 12)
    with pytest.raises(SpanTooNarrow):
        fit_norm_exponent(narrow, narrow ** -0.5)
    with pytest.raises(ValidationError):
        fit_linear_gap(-distances, distances)


def test_norm_exponent_on_exact_data(distances):
    fit = fit_norm_exponent(distances, distances ** -0.5)
    assert fit.exponent == pytest.approx(-0.5, abs=1e-12)
    assert fit.eps_hat == 0.0
    lossy = fit_norm_exponent(distances, 3.0 * distances ** -0.45)
    assert lossy.eps_hat == pytest.approx(0.1, abs=1e-9)


def test_second_differences_of_a_quadratic():
    E = -np.array([1e-2, 5e-3, 2e-3, 1e-3, 4e-4])
    x = -E
    check = second_differences(E, x + 0.1 * x ** 2, 30.0)
    np.testing.assert_allclose(check.values, 0.2, rtol=1e-6)
    assert check.holds
    assert check.bound == pytest.approx(32.0 / 30.0)


def test_epsilon_formula():
    assert epsilon_of_energy(0.0, 5, 1e-6, 5.0) == 0.0
    assert epsilon_of_energy(0.5, 2, 1e-6, 10.0) == pytest.approx(2 * 1e4 * 0.5 * 2 / 6)
    trace = epsilon_trace([-1e-3, -1e-4], [1e-3, 1e-4], [0.0, 0.0], [1, 2], 5.0)
    assert trace == [(-1e-3, 0.0, 0.0), (-1e-4, 0.0, 0.0)]


def test_trend_toward_zero():
    assert trends_to_zero([0.4, 0.3, 0.3, 0.1, 0.0])
    assert not trends_to_zero([0.4, 0.5, 0.1, 0.0, 0.0])


# ── toy model ────────────────────────────────────────────────────────────────

def test_toy_sandwich():
    growth = toy_norm_growth(d=1e-6, r=30.0, delta=1e-2, a=0.05)
    assert growth.lower <= growth.max_derivative <= growth.upper
    assert growth.sandwich_holds
    assert growth.sigma.max() >= 1


def test_toy_sandwich_for_a_short_interval():
    growth = toy_norm_growth(d=1e-6, r=4.0, delta=1e-3, a=5e-4)
    assert growth.max_derivative <= growth.upper
    assert growth.sandwich_holds


def test_toy_model_validation():
    with pytest.raises(ValidationError):
        toy_norm_growth(d=1e-6, r=1.0, delta=1e-2, a=0.05)
    with pytest.raises(ValidationError):
        toy_norm_growth(d=1e-6, r=30.0, delta=1e-3, a=0.05)


# ── gap profile ──────────────────────────────────────────────────────────────

def test_gap_profile_near_collision(collision_curves):
    profile = gap_profile(*collision_curves)
    assert profile.delta > 0
    assert profile.residual < 0.05
    assert profile.window.contains(profile.theta_c)
    assert abs(profile.fit.vertex_shift) < profile.window.half_length


def test_quad_coeff_follows_the_potential_curvature(collision_curves):
    # normalised cosine: v''(0)/2 = 2 pi^2, so c ~ 2 pi^2 lambda^2 ~ 592 at lambda^2 = 30
    profile = gap_profile(*collision_curves)
    lambda_sq = profile.lambda_sq
    assert profile.quad_coeff == pytest.approx(2 * math.pi ** 2 * lambda_sq, rel=0.1)
    assert profile.quad_in_scaled_band(10.0)
    assert profile.quad_spec_band(10.0) == (lambda_sq / 10.0, 10.0 * lambda_sq)
    assert not profile.quad_in_spec_band(10.0)
    payload = profile.to_dict()
    assert payload["quad_spec_band"] == [3.0, 300.0]
    assert payload["quad_scaled_band"][0] < profile.quad_coeff < payload["quad_scaled_band"][1]


def test_window_fit_of_a_centred_parabola():
    local = np.linspace(-1e-3, 1e-3, 129)
    fit = fit_window(local, 1e-6 + 600.0 * local ** 2, 1e-6)
    assert fit.quad_coeff == pytest.approx(600.0, rel=1e-9)
    assert fit.quad_coeff_symmetric == pytest.approx(600.0, rel=1e-9)
    assert abs(fit.vertex_shift) < 1e-12
    assert fit.residual < 1e-6 and fit.residual_symmetric < 1e-6


def test_window_fit_exposes_a_misplaced_centre():
    local = np.linspace(-1e-3, 1e-3, 129)
    shift = 1e-4
    fit = fit_window(local, 1e-6 + 600.0 * (local - shift) ** 2, 1e-6)
    assert fit.quad_coeff == pytest.approx(600.0, rel=1e-9)
    assert fit.vertex_shift == pytest.approx(shift, rel=1e-6)
    assert fit.relative_shift == pytest.approx(0.1, rel=1e-6)
    assert fit.residual < 1e-6
    # the odd part 2 c shift x cannot be absorbed by delta + c x^2
    assert fit.residual_symmetric > 0.05


def test_gap_profile_takes_unstable_then_stable(collision_curves):
    curve_u, curve_s = collision_curves
    with pytest.raises(ValidationError):
        gap_profile(curve_s, curve_u)


def test_delta_decreases_toward_the_edge(reference_params):
    deltas = []
    for E in (-1.0, -0.5, -0.2):
        params = reference_params.with_energy(E)
        deltas.append(gap_profile(*compute_curves(params, _small(params))).delta)
    assert deltas[0] > deltas[1] > deltas[2] > 0


# ── edge ─────────────────────────────────────────────────────────────────────

def test_edge_bracket_with_both_ends_convergent(reference_params):
    with pytest.raises(BracketInvalid):
        find_edge(reference_params, (-10.0, -9.0), settings=_small(reference_params), extrapolate=False)


def test_edge_bracket_must_be_ordered(reference_params):
    with pytest.raises(BracketInvalid):
        find_edge(reference_params, (1.0, -1.0), extrapolate=False)


@pytest.mark.slow
def test_edge_bisection(reference_params, collision_curves):
    settings = CurveSettings.for_params(reference_params, base_points=1024, refine_depth=2, T_max=200_000)
    estimate = find_edge(reference_params, (-1.0, 1.0), tol=1e-10, settings=settings)
    assert estimate.width <= 1e-10
    assert estimate.method == "cross-validated"
    assert collision_curves[0].params.E < estimate.E0 < 1.0
    assert estimate.history[0]["ok"] and not estimate.history[1]["ok"]
    assert math.isfinite(estimate.disagreement)


# ── per-energy measurements ──────────────────────────────────────────────────

def test_energy_schedule():
    energies = energy_schedule(0.0, 1.0, 0.5, 12)
    assert energies[0] == -1.0
    assert energies[-1] == -(0.5 ** 11)
    assert np.all(np.diff(energies) > 0)
    with pytest.raises(ValidationError):
        energy_schedule(0.0, -1.0)
    with pytest.raises(ValidationError):
        energy_schedule(0.0, 1.0, 1.5)


def test_measurement_far_from_the_edge(reference_params):
    row = measure_energy(reference_params, _small(reference_params), E0=0.0, lyapunov_samples=2000, burn_in=10)
    assert list(row) == SWEEP_COLUMNS + EXTRA_COLUMNS
    assert row["E0_minus_E"] == 2.0
    assert row["sigma_plus_max"] == 0 and row["eta"] == 0.0
    assert row["level_k"] == -1
    assert math.isnan(row["interval_length_ratio"])
    assert row["lyapunov"] > 0
    assert row["c1_norm_u"] > 0 and row["delta"] > 0


def test_measurement_near_collision(collision_curves):
    params = collision_curves[0].params
    ladder = build_ladder(params, max_level=0)
    row = measure_energy(params, _small(params), ladder=ladder, lyapunov_samples=2000, burn_in=10)
    assert math.isnan(row["E0_minus_E"])
    assert row["sigma_plus_max"] <= 3 + 2 * math.log(1 / row["delta"]) / math.log(params.lam)
    assert row["level_k"] == 0
    assert row["interval_length_ratio"] > 0
    assert 0.0 <= row["eta"] <= 1.0
    assert math.isfinite(row["dominant_scaled"])


def test_dominant_term_reconstruction(collision_curves, collision_stats):
    delta = gap_profile(*collision_curves).delta
    profile = dominant_term_profile(*collision_curves, collision_stats, delta, max_probes=4)
    assert 1 <= len(profile.entries) <= 5
    for entry in profile.entries:
        assert entry["mismatch"] < 1e-6
    assert profile.scaled > 0


def test_collision_window_contains_the_interval(omega):
    interval = Arc(0.1, 1e-3)
    window = collision_window(interval, 2, 1, omega)
    assert window.contains(np.array([0.1, 0.1 + omega.offset(2), 0.1 - omega.offset(1)])).all()
    assert float(window.measure()) == pytest.approx(4 * 2e-3)


def test_off_window_gap_floor(collision_curves, collision_stats):
    delta = gap_profile(*collision_curves).delta
    floor = off_window_gap_floor(*collision_curves, Arc(0.0, 0.05), collision_stats, delta, probes=256)
    assert floor.probes > 0
    assert floor.min_gap > 0
    covered = off_window_gap_floor(*collision_curves, Arc(0.0, 0.5), collision_stats, delta, probes=256)
    assert covered.probes == 0 and covered.holds


# ── report ───────────────────────────────────────────────────────────────────

def test_report_on_exact_laws(distances):
    frame = _synthetic_frame(distances)
    failed = dict(frame.iloc[0].to_dict(), delta=float("nan"), status="failed")
    frame = pd.concat([frame, pd.DataFrame([failed])], ignore_index=True)
    report = build_report(frame, 30.0, E0=0.0)
    assert report.linear.slope == pytest.approx(1.0, rel=1e-12)
    assert report.norm_u.exponent == pytest.approx(-0.5, abs=1e-12)
    assert report.norms_match
    assert report.epsilon_trends_to_zero and report.epsilon_agrees
    assert report.second.holds
    payload = json.loads(json.dumps(report.to_dict(), sort_keys=True))
    assert {"linear", "norm_u", "norm_s", "edge"} <= set(payload)
    assert payload["edge"] == {"E0": 0.0, "bracket": None}
    assert payload["linear"]["in_band"]
    assert len(payload["epsilon_trace"]) == 12


def test_report_takes_the_edge_from_the_sweep(distances):
    report = build_report(_synthetic_frame(distances, E0=-0.25).drop(columns="status"), 30.0)
    assert report.E0 == pytest.approx(-0.25)
    frame = _synthetic_frame(distances)
    frame["E0_minus_E"] = np.nan
    with pytest.raises(ValidationError):
        build_report(frame, 30.0)
