import math

import numpy as np
import pytest

from cocycle import CocycleParams, PotentialSpec, compute_c0, fibre_step, initial_interval
from curves import (
    CURVE_COLUMNS,
    CurveSettings,
    compute_curves,
    curve_frame,
    curve_norms,
    derivative_bound_check,
    derivative_recursion_check,
    evaluate_stable,
    evaluate_unstable,
    gap_on_grid,
    is_ordered,
    mirror_identity_defect,
    pullback,
    pullback_mp,
)
from errors import NotUniformlyHyperbolic, StencilError, ValidationError


@pytest.fixture(scope="module")
def settings(reference_params):
    return CurveSettings.for_params(reference_params, base_points=1024, refine_depth=2)


@pytest.fixture(scope="module")
def curves(reference_params, settings):
    return compute_curves(reference_params, settings)


@pytest.fixture(scope="module")
def flat_well(omega):
    """Constant potential with a = -E = 3: fixed points (3 +- sqrt 5) / 2."""
    return CocycleParams(PotentialSpec.constant(0.0), 30.0, -3.0, omega)


# ── pointwise evaluation ─────────────────────────────────────────────────────

def test_constant_potential_fixed_points(flat_well):
    u = evaluate_unstable(0.3, flat_well)
    s = evaluate_stable(0.3, flat_well)
    assert u.psi == pytest.approx((3 + math.sqrt(5)) / 2, rel=1e-12)
    assert s.psi == pytest.approx((3 - math.sqrt(5)) / 2, rel=1e-12)
    assert u.d_theta == 0.0 and s.d_theta == 0.0
    # the fixed point r* moves with E as 1/(1/r*^2 - 1)
    r = u.psi
    assert u.d_E == pytest.approx(1 / (1 / r ** 2 - 1), rel=1e-9)


def test_auto_horizon_is_self_consistent(reference_params):
    for theta in (0.0, 0.1, 0.31, 0.77):
        point = evaluate_unstable(theta, reference_params)
        doubled = evaluate_unstable(theta, reference_params, horizon=2 * point.horizon)
        assert abs(point.psi - doubled.psi) < 1e-10
        back = evaluate_stable(theta, reference_params)
        assert abs(back.psi - evaluate_stable(theta, reference_params, horizon=2 * back.horizon).psi) < 1e-10


def test_stable_curve_is_invariant(reference_params, omega):
    for theta in (0.05, 0.4, 0.9):
        before = evaluate_stable(omega.shift(theta, -1), reference_params)
        after = evaluate_stable(theta, reference_params)
        assert fibre_step(before.theta, before.psi, reference_params) == pytest.approx(after.psi, abs=1e-9)


def test_band_seeds_reach_the_same_curve(reference_params, rng):
    thetas = rng.uniform(0, 1, 64)
    cone = pullback(thetas, 256, reference_params, "unstable", with_derivatives=False)
    band = pullback(thetas, 256, reference_params, "unstable", seed_policy="band", with_derivatives=False)
    assert np.allclose(cone.psi, band.psi, rtol=1e-12)


def test_band_confinement_flags_orbits_leaving_B(reference_params):
    # sup lambda^2 v = 60 > lambda^2, so the unstable orbit leaves B = [1/30, 30]
    result = pullback(np.linspace(0, 1, 64, endpoint=False), 64, reference_params, "unstable",
                      confinement="band", with_derivatives=False)
    assert not result.ok


def test_default_cone_confinement_survives_where_band_fails(reference_params):
    settings = CurveSettings()
    assert (settings.seed_policy, settings.confinement) == ("cone", "cone")
    thetas = np.linspace(0, 1, 64, endpoint=False)
    assert pullback(thetas, 64, reference_params, "unstable", with_derivatives=False).ok
    assert pullback(thetas, 64, reference_params, "stable", with_derivatives=False).ok


def test_extended_precision_pullback_agrees(reference_params):
    for direction in ("unstable", "stable"):
        fast = pullback(np.array([0.3]), 128, reference_params, direction, with_derivatives=False).psi[0]
        slow = pullback_mp(0.3, 128, reference_params, direction)
        assert float(slow) == pytest.approx(fast, rel=1e-13)


def test_above_the_edge_the_cone_is_not_invariant(reference_params):
    params = reference_params.with_energy(5.0)
    with pytest.raises(NotUniformlyHyperbolic) as info:
        compute_curves(params, CurveSettings.for_params(params, base_points=256, refine_depth=0))
    assert info.value.theta is not None


def test_unknown_direction_rejected(reference_params):
    with pytest.raises(ValidationError):
        pullback(0.1, 10, reference_params, "sideways")


# ── assembled curves ─────────────────────────────────────────────────────────

def test_curves_are_ordered_and_invariant(curves, settings):
    curve_u, curve_s = curves
    assert is_ordered(curve_u, curve_s)
    assert curve_u.converged and curve_s.converged
    assert curve_u.residual_max < settings.tol_psi
    assert len(curve_u) > settings.base_points


def test_curves_in_their_bands_off_the_critical_arcs(curves, reference_params, cosine):
    curve_u, curve_s = curves
    lam = reference_params.lam
    arc = initial_interval(compute_c0(cosine, lam), lam).shifted(reference_params.omega.omega)
    outside = ~arc.contains(curve_u.thetas)
    assert np.all(curve_u.psi[outside] >= lam)
    arc_s = initial_interval(compute_c0(cosine, lam), lam)
    assert np.all(curve_s.psi[~arc_s.contains(curve_s.thetas)] <= 1 / lam)


def test_curve_frame_columns(curves):
    frame = curve_frame(*curves)
    assert list(frame.columns) == CURVE_COLUMNS
    assert len(frame) == len(curves[0])
    assert np.all(np.diff(frame["theta"].to_numpy()) > 0)


def test_constant_potential_has_zero_c1_norm(flat_well):
    curve_u, curve_s = compute_curves(flat_well, CurveSettings.for_params(flat_well, base_points=64))
    assert curve_norms(curve_u) == (0.0, 0.0)
    assert np.allclose(gap_on_grid(curve_u, curve_s), math.sqrt(5))


def test_c1_norm_stable_under_grid_doubling(reference_params):
    params = reference_params.with_energy(-0.5)
    coarse, _ = compute_curves(params, CurveSettings.for_params(params, base_points=2048, refine_depth=3))
    fine, _ = compute_curves(params, CurveSettings.for_params(params, base_points=4096, refine_depth=3))
    assert curve_norms(fine)[0] == pytest.approx(curve_norms(coarse)[0], rel=1e-2)


def test_c1_norm_grows_toward_the_edge(reference_params):
    norms = []
    for E in (-1.0, -0.5, -0.2):
        params = reference_params.with_energy(E)
        curve_u, _ = compute_curves(params, CurveSettings.for_params(params, base_points=1024, refine_depth=3))
        norms.append(curve_u.global_c1_norm)
    assert norms[0] < norms[1] < norms[2]


def test_mirror_identity(curves, rng):
    curve_u, curve_s = curves
    assert mirror_identity_defect(curve_u, curve_s, rng.uniform(0, 1, 200)) < 1e-10


def test_mirror_identity_needs_even_potential(omega, rng):
    theta = np.arange(256) / 256
    odd = PotentialSpec.tabulated(theta, np.cos(2 * math.pi * theta) + 0.3 * np.sin(4 * math.pi * theta))
    params = CocycleParams(odd, 30.0, -2.0, omega)
    curves = compute_curves(params, CurveSettings.for_params(params, base_points=256, refine_depth=0))
    with pytest.raises(ValidationError):
        mirror_identity_defect(*curves, rng.uniform(0, 1, 5))


# ── derivative checks ────────────────────────────────────────────────────────

def test_energy_derivative_matches_finite_difference(reference_params):
    for theta in (0.0, 0.2, 0.55):
        point = evaluate_unstable(theta, reference_params)
        check = derivative_recursion_check(point, reference_params)
        assert check.mismatch["d_E"] < 1e-6, check.to_dict()


@pytest.mark.parametrize("direction", ["unstable", "stable"])
def test_recursions_match_finite_differences(reference_params, rng, direction):
    evaluate = evaluate_unstable if direction == "unstable" else evaluate_stable
    for _ in range(100):
        params = reference_params.with_energy(float(rng.uniform(-3.0, -0.5)))
        point = evaluate(float(rng.uniform(0, 1)), params)
        check = derivative_recursion_check(point, params)
        assert check.passed(1e-5), check.to_dict()


def test_stencil_outside_the_cone(reference_params):
    params = reference_params.with_energy(-0.5)
    point = evaluate_unstable(0.3, params)
    with pytest.raises(StencilError):
        # energy steps of 1 and 2 put the outer stencil points above the edge
        derivative_recursion_check(point, params, h2=1.0)


def test_energy_derivative_bound_where_stabilized(curves, rng):
    curve_u, _ = curves
    report = derivative_bound_check(curve_u, rng.uniform(0, 1, 500))
    assert report.checked > 100
    assert report.holds, report.to_dict()


def test_derivative_bound_needs_unstable_curve(curves):
    with pytest.raises(ValidationError):
        derivative_bound_check(curves[1], [0.1])
