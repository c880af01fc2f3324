import math

import numpy as np
import pytest
from mpmath import mp

from errors import DegenerateRotation, MissingSystemConstants
from rotation import (
    ArcSet,
    Arc,
    DiophantineConstants,
    IntervalSystem,
    RotationNumber,
    brute_force_first_return,
    empirical_visit_frequency,
    estimate_diophantine,
    first_return_lower_bound,
    measure_system_constants,
    rotation_offsets,
    run_statistics,
)


# ── continued fractions ──────────────────────────────────────────────────────

def test_golden_mean_partial_quotients(golden):
    assert golden.cf_terms[:12] == [0] + [1] * 11
    assert not golden.terminates


def test_reference_rotation_partial_quotients(omega):
    assert omega.cf_terms[:10] == [0, 3] + [4] * 8
    assert omega.source == "expression"
    assert omega.omega == pytest.approx((math.sqrt(5) - 1) / 4, abs=1e-16)


def test_convergents_are_best_approximations(omega):
    for c in omega.convergents()[1:15]:
        assert abs(omega.omega - c.numerator / c.denominator) < 1.0 / c.denominator ** 2


def test_from_text_accepts_literals_and_expressions():
    assert RotationNumber.from_text("0.25").source == "literal"
    assert RotationNumber.from_text("sqrt(2)-1").source == "expression"


# ── rotation offsets ─────────────────────────────────────────────────────────

def test_offsets_match_extended_precision(omega, rng):
    n = 3_000_000
    offsets = rotation_offsets(omega, n)
    assert offsets.shape == (n + 1,)
    assert not offsets.flags.writeable
    for k in rng.integers(0, n, size=40).tolist() + [0, 1, 2 ** 21 - 1, 2 ** 21, n]:
        with mp.workdps(60):
            x = k * omega.exact
            expected = float(x - mp.floor(x))
        assert abs(offsets[k] - expected) <= 4 * 2.0 ** -52


def test_shift_handles_large_and_negative_multiples(omega):
    with mp.workdps(60):
        x = 10 ** 12 * omega.exact
        expected = float(x - mp.floor(x))
    assert omega.offset(10 ** 12) == pytest.approx(expected, abs=1e-15)
    assert omega.shift(omega.shift(0.3, 17), -17) == pytest.approx(0.3, abs=1e-15)


# ── Diophantine constants ────────────────────────────────────────────────────

def test_rational_rotation_is_degenerate():
    with pytest.raises(DegenerateRotation):
        estimate_diophantine(RotationNumber.from_value(0.5), 100)


def test_golden_mean_constants(golden):
    constants = estimate_diophantine(golden, 100_000)
    assert constants.tau == 1.0
    assert constants.n_max_checked == 100_000
    # n = 1 is the global minimiser; the upper decade sees the Fibonacci liminf
    assert constants.kappa == pytest.approx(0.999 * (3 - math.sqrt(5)) / 2, rel=1e-9)
    assert constants.kappa_tail == pytest.approx(0.999 / math.sqrt(5), rel=1e-3)


def test_reference_constants_hold_on_checked_range(omega):
    constants = estimate_diophantine(omega, 100_000)
    assert constants.kappa > 0
    assert constants.holds_for(omega)


@pytest.mark.parametrize("kappa, tau, eps, expected", [
    (0.4, 1.0, 0.01, 40),
    (0.4, 2.0, 0.001, 20),
])
def test_first_return_formula(kappa, tau, eps, expected):
    assert first_return_lower_bound(DiophantineConstants(kappa, tau, 10), eps) == expected


@pytest.mark.parametrize("kappa, expected", [
    (math.nextafter(1.5, 0.0), 2),
    (1.5, 3),
    (math.nextafter(1.5, 2.0), 3),
])
def test_first_return_bound_rounds_down_near_integers(kappa, expected):
    # eps = 0.5 makes kappa / eps exact, one ulp either side of 3
    assert first_return_lower_bound(DiophantineConstants(kappa, 1.0, 10), 0.5) == expected


def test_first_return_bound_below_actual_return(omega, rng):
    constants = estimate_diophantine(omega, 100_000)
    assert first_return_lower_bound(constants, 0.05) <= brute_force_first_return(omega, 0.05)
    for eps in 10 ** rng.uniform(-4, math.log10(0.2), size=100):
        assert first_return_lower_bound(constants, eps) <= brute_force_first_return(omega, eps)


# ── interval systems ─────────────────────────────────────────────────────────

def test_run_statistics():
    mask = np.array([False, True, True, False, False, True, False])
    assert run_statistics(mask) == (2, 2, 1)
    assert run_statistics(np.zeros(5, dtype=bool)) == (5, 0, 5)


def test_empty_system_never_visited(omega):
    result = empirical_visit_frequency([IntervalSystem(ArcSet.empty(), r=1, l=0)], 0.1, 100, omega)
    assert result.frequency == 0
    assert result.time_bound >= 0 and result.accumulation_bound >= 0
    assert empirical_visit_frequency([], 0.1, 100, omega).frequency == 0


def test_single_arc_within_bounds(omega):
    system = measure_system_constants([Arc(0.3, 0.01)], 0.0, omega, 10_000)
    result = empirical_visit_frequency([system], 0.0, 10_000, omega)
    assert 0 < result.frequency < 0.05
    assert result.within_bounds


def test_full_circle_saturates(omega):
    t = 500
    result = empirical_visit_frequency([IntervalSystem(ArcSet.full(), r=1, l=t)], 0.7, t, omega)
    assert result.frequency == 1.0
    assert result.time_bound >= 1.0


def test_undeclared_constants_rejected(omega):
    with pytest.raises(MissingSystemConstants):
        empirical_visit_frequency([IntervalSystem([Arc(0.5, 0.1)])], 0.0, 10, omega)


@pytest.mark.parametrize("direction", ["forward", "backward"])
def test_random_systems_respect_bounds(omega, rng, direction):
    horizon = 10_000
    for _ in range(100):
        theta0 = float(rng.uniform(0, 1))
        systems = []
        for _ in range(rng.integers(1, 4)):
            arcs = [Arc(c, h) for c, h in zip(rng.uniform(0, 1, 2), rng.uniform(1e-4, 0.03, 2))]
            # constants are measured along the orbit that is counted
            systems.append(measure_system_constants(arcs, theta0, omega, horizon, direction))
        for t in (100, 1_000, horizon):
            result = empirical_visit_frequency(systems, theta0, t, omega, direction)
            assert result.within_bounds, result.to_dict()
