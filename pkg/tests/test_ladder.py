import json
import math

import numpy as np
import pytest

from cocycle import CocycleParams, PotentialSpec
from curves import CurveSettings, compute_curves, gap_at, gap_on_grid
from errors import (BracketInvalid, CouplingTooSmall, LadderExhausted, NotInCollisionWindow,
                    ValidationError)
from ladder import (
    box_images,
    box_separation,
    box_touching_energy,
    boxes_disjoint,
    build_ladder,
    check_condition_C1,
    check_condition_C2,
    growth_check,
    region_membership,
    return_separation,
    select_critical_interval,
    sigma_statistics,
    stopping_times,
)
from rotation import Arc, ArcSet, brute_force_first_return, first_return_lower_bound, union_all


@pytest.fixture(scope="module")
def demo_params(omega):
    """lambda = 1e4 with a cosine of amplitude 1/4, so sup lambda^2 v stays inside B."""
    return CocycleParams(PotentialSpec.cosine(0.25), 1e8, -5.0, omega)


@pytest.fixture(scope="module")
def demo_ladder(demo_params):
    return build_ladder(demo_params, max_level=1)


@pytest.fixture(scope="module")
def small_params(omega):
    return CocycleParams(PotentialSpec.cosine(0.25), 1e4, -5.0, omega)


@pytest.fixture(scope="module")
def small_ladder(small_params):
    return build_ladder(small_params, max_level=0)


# ── scales ───────────────────────────────────────────────────────────────────

def test_demo_scales(demo_ladder):
    assert demo_ladder.level(0).M == 10
    assert demo_ladder.level(1).M == 10 ** 10
    assert demo_ladder.level(1).length == pytest.approx(demo_ladder.c0 * 1e-20, rel=1e-12)
    assert demo_ladder.level(0).length == pytest.approx(demo_ladder.c0 / 100, rel=1e-12)
    assert not demo_ladder.degenerate


def test_first_return_bound_is_respected(demo_ladder, omega):
    level = demo_ladder.level(0)
    assert level.N == first_return_lower_bound(demo_ladder.constants, level.length)
    assert brute_force_first_return(omega, level.length) > level.N


def test_reference_coupling_gives_degenerate_ladder(reference_params):
    ladder = build_ladder(reference_params, max_level=1)
    assert ladder.level(0).M == 1
    assert ladder.degenerate and ladder.warnings


def test_coupling_below_one_rejected(omega):
    params = CocycleParams(PotentialSpec.cosine(1.0), 0.5, -2.0, omega)
    with pytest.raises(CouplingTooSmall):
        build_ladder(params, max_level=0)


def test_level_two_is_log_only(demo_params):
    ladder = build_ladder(demo_params, max_level=2)
    top = ladder.level(2)
    assert top.M is None and top.half_length is None
    assert top.log_M == pytest.approx(1e10 * math.log(1e4) / 4, rel=1e-12)
    assert top.log_length == pytest.approx(math.log(ladder.c0) - 0.5 * 1e10 * math.log(1e4), rel=1e-12)
    rows = json.loads(ladder.to_json())
    assert [row["n"] for row in rows] == [0, 1, 2]
    assert set(rows[0]) >= {"n", "I_center", "I_halflength", "M", "N", "E_minus", "E_plus"}


def test_max_level_capped(demo_params):
    with pytest.raises(ValidationError):
        build_ladder(demo_params, max_level=3)


# ── regions and (C2) ─────────────────────────────────────────────────────────

def test_regions_partition_the_circle(demo_ladder, reference_params):
    regions = demo_ladder.region_set(0)
    assert regions.partition_holds()
    assert regions.exceptional_measure < 1
    assert not regions.covers_circle
    degenerate = build_ladder(reference_params, max_level=0).region_set(0)
    assert degenerate.partition_holds() and degenerate.covers_circle


def test_region_union_is_order_independent(demo_ladder):
    regions = demo_ladder.region_set(0)
    pieces = [ArcSet([p]) for p in regions.xi_u.pieces] + [ArcSet([p]) for p in regions.xi_s.pieces]
    assert union_all(pieces) == union_all(reversed(pieces))
    assert union_all(reversed(pieces)).complement() == regions.theta


def test_condition_C2_at_level_zero_is_trivial(demo_ladder):
    assert check_condition_C2(demo_ladder, 0)


def test_admissible_M_satisfies_C2(demo_params):
    ladder = build_ladder(demo_params, max_level=1, m_choice="admissible")
    M = ladder.level(1).M
    assert 10 ** 10 <= M <= 2 * 10 ** 10
    assert check_condition_C2(ladder, 1)


def test_condition_C2_fails_when_the_return_lands_in_I0(demo_ladder, omega):
    # q omega is within 1/q of an integer, so I_1 + q omega sits inside I_0
    q = next(c.denominator for c in omega.convergents() if c.denominator > 1000)
    assert not check_condition_C2(demo_ladder, 1, M=q)


def test_region_membership_off_the_exceptional_sets(demo_params, demo_ladder):
    curves = compute_curves(demo_params, CurveSettings.for_params(demo_params, base_points=1024, refine_depth=1))
    report = region_membership(*curves, demo_ladder.region_set(0))
    assert report.holds, report.to_dict()
    assert report.u_above == 0


# ── (C1) and boxes ───────────────────────────────────────────────────────────

def test_condition_C1_deep_below_the_spectrum(small_ladder):
    report = check_condition_C1(small_ladder, 0, -5.0, samples=200)
    assert report.passed, report.to_dict()
    assert not report.inconclusive


def test_condition_C1_above_the_spectrum(small_ladder):
    report = check_condition_C1(small_ladder, 0, 1e5, samples=200)
    assert not report.passed
    assert report.counterexample["reason"] == "left B"


def test_condition_C1_without_samples(small_ladder):
    report = check_condition_C1(small_ladder, 0, -5.0, samples=0)
    assert report.inconclusive and report.passed


def test_boxes_disjoint_far_below_the_edge(demo_ladder):
    image_u, image_s = box_images(demo_ladder, 0, -5.0)
    assert image_u.ordered and image_s.ordered
    assert boxes_disjoint(image_u, image_s)


def test_box_separation_decreases_with_energy(demo_ladder):
    separations = [box_separation(*box_images(demo_ladder, 0, E)) for E in (-5.0, -1.0, -0.1)]
    assert separations[0] > separations[1] > separations[2]


def test_box_touching_energy(demo_ladder):
    E_minus = box_touching_energy(demo_ladder, 0, (-1.0, 1.0))
    assert -1.0 < E_minus < 1.0
    assert box_separation(*box_images(demo_ladder, 0, E_minus - 1e-6)) > 0
    assert box_separation(*box_images(demo_ladder, 0, E_minus + 1e-6)) < 0


def test_box_touching_energy_needs_a_sign_change(demo_ladder):
    with pytest.raises(BracketInvalid):
        box_touching_energy(demo_ladder, 0, (-5.0, -1.0))


# ── stopping times ───────────────────────────────────────────────────────────

def test_stopping_time_precondition(collision_curves):
    curve_u, curve_s = collision_curves
    far = float(curve_u.thetas[int(np.argmax(gap_on_grid(curve_u, curve_s)))])
    with pytest.raises(NotInCollisionWindow):
        stopping_times(curve_u, curve_s, far)


def test_stopping_time_definition_and_bound(collision_curves):
    curve_u, curve_s = collision_curves
    params = curve_u.params
    theta_c = float(curve_u.thetas[int(np.argmin(gap_on_grid(curve_u, curve_s)))])
    times = stopping_times(curve_u, curve_s, theta_c)
    threshold = params.lam ** -3
    for j in range(times.sigma_plus + 1):
        assert gap_at(params.omega.shift(theta_c, j), curve_u, curve_s) < threshold
    assert gap_at(params.omega.shift(theta_c, times.sigma_plus + 1), curve_u, curve_s) >= threshold
    assert gap_at(params.omega.shift(theta_c, -times.sigma_minus - 1), curve_u, curve_s) >= threshold
    assert times.sigma_plus <= times.bound(params.lam)
    assert times.sigma_hat_plus == times.sigma_plus


def test_sigma_statistics_with_inflated_regions(collision_curves, reference_params):
    ladder = build_ladder(reference_params, max_level=1)
    stats = sigma_statistics(*collision_curves, ladder=ladder)
    assert stats.sigma_max >= 0
    for times in stats.times:
        assert 0 <= times.sigma_hat_plus <= times.sigma_plus
        assert 0 <= times.sigma_hat_minus <= times.sigma_minus
    assert 0.0 <= stats.eta <= 1.0


def test_growth_up_to_the_stopping_time_is_reported(collision_curves):
    curve_u, curve_s = collision_curves
    theta_c = float(curve_u.thetas[int(np.argmin(gap_on_grid(curve_u, curve_s)))])
    times = stopping_times(curve_u, curve_s, theta_c)
    forward, backward = growth_check(curve_u, curve_s, times)
    assert forward.steps == times.sigma_plus + 1
    assert backward.steps == times.sigma_minus + 1
    assert math.isfinite(forward.margin)


def test_return_separation(omega):
    assert return_separation(Arc(0.0, 1e-6), 2, 2, omega)
    assert not return_separation(Arc(0.0, 0.2), 1, 1, omega)


# ── critical interval ────────────────────────────────────────────────────────

def test_critical_interval_fallback(demo_ladder, omega):
    k, arc = select_critical_interval(demo_ladder, 0)
    assert k == 0
    assert arc == demo_ladder.level(0).interval.shifted(omega.offset(1))


def test_critical_interval_sandwich(demo_ladder):
    sigma = max(1, math.ceil(demo_ladder.level(0).N / 30))
    k, _ = select_critical_interval(demo_ladder, sigma)
    assert k == 1


def test_critical_interval_exhausted(demo_ladder):
    with pytest.raises(LadderExhausted):
        select_critical_interval(demo_ladder, 10 ** 30)


def test_critical_interval_is_non_decreasing_in_sigma(demo_ladder):
    levels = [select_critical_interval(demo_ladder, sigma)[0] for sigma in (0, 1, 5, 100, 10 ** 6)]
    assert levels == sorted(levels)


def test_degenerate_ladder_uses_level_zero(reference_params):
    ladder = build_ladder(reference_params, max_level=1)
    assert select_critical_interval(ladder, 50)[0] == 0
