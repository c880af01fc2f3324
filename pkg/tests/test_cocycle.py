import math

import numpy as np
import pytest

from cocycle import (
    CocycleParams,
    PotentialSpec,
    ProjectiveOrbit,
    derivative_difference,
    distance_product,
    distortion_lower_bound,
    distortion_product,
    fibre_step,
    fibre_unstep,
    growth_diagnostic,
    iterate_orbit,
    log_matrix_cocycle_norm,
    lyapunov_via_section,
    matrix_cocycle_norm,
    region_transition,
    separation_frequency,
    theta_derivatives,
)
from errors import FibreMismatch, InvalidSection, PoleHit, ScaleOverflow, ValidationError
from rotation import orbit_angles


@pytest.fixture(scope="module")
def flat(omega):
    return CocycleParams(PotentialSpec.constant(0.0), 30.0, 0.0, omega)


@pytest.fixture(scope="module")
def raw_cosine(omega):
    return CocycleParams(PotentialSpec.cosine(1.0, normalize=False), 30.0, -1.0, omega)


@pytest.fixture(scope="module")
def elliptic(omega):
    """Constant trace 2 cos(0.7753): the projective map is a rotation and gaps stay O(1)."""
    return CocycleParams(PotentialSpec.constant(0.0), 1.0, -2 * math.cos(2 * math.pi * 0.1234), omega)


def _positive_pairs(params, rng, count, length):
    """Coupled forward orbits s_0 <= r_0 seeded in [1, lambda^2]; they stay in r >= 1."""
    pairs = []
    for _ in range(count):
        theta0 = float(rng.uniform(0, 1))
        s0, r0 = np.sort(rng.uniform(1.0, params.lambda_sq, 2))
        pairs.append((iterate_orbit(theta0, r0, length, params), iterate_orbit(theta0, s0, length, params)))
    return pairs


# ── fibre map ────────────────────────────────────────────────────────────────

def test_fibre_step_examples(flat, raw_cosine):
    assert fibre_step(0.3, 1.0, flat) == -1.0
    assert fibre_step(0.0, 1.0, raw_cosine) == pytest.approx(30.0)


def test_fibre_step_pole(flat):
    with pytest.raises(PoleHit):
        fibre_step(0.1, 0.0, flat)


def test_fibre_unstep_examples(flat, raw_cosine):
    assert fibre_unstep(0.3, -1.0, flat) == 1.0
    assert fibre_unstep(0.0, 30.0, raw_cosine) == pytest.approx(1.0)
    with pytest.raises(PoleHit):
        fibre_unstep(0.3, 0.0, flat)


def test_fibre_unstep_inverts_fibre_step(reference_params, rng):
    theta = rng.uniform(0, 1, 10_000)
    r = rng.uniform(1 / 30, 30, 10_000)
    back = fibre_unstep(theta, fibre_step(theta, r, reference_params), reference_params)
    assert np.max(np.abs(back - r) / r) < 1e-10


def test_chained_round_trips(reference_params, rng):
    r = 2.0
    for theta in rng.uniform(0, 1, 100):
        r = fibre_unstep(theta, fibre_step(theta, r, reference_params), reference_params)
    assert r == pytest.approx(2.0, rel=1e-10)


def test_orbit_replay(reference_params):
    orbit = iterate_orbit(0.2, 1.0, 500, reference_params)
    assert orbit.length == 500
    assert orbit.replay_defects().max() < 1e-15
    backward = iterate_orbit(0.2, 0.1, 200, reference_params, direction=-1)
    assert backward.replay_defects().max() < 1e-13


# ── matrix products ──────────────────────────────────────────────────────────

def test_matrix_norm_identity(reference_params):
    assert matrix_cocycle_norm(0.4, 0, reference_params) == 1.0


def test_matrix_norm_one_step(omega):
    params = CocycleParams(PotentialSpec.cosine(1.0, normalize=False), 30.0, 0.0, omega)
    expected = np.linalg.norm(np.array([[0.0, 1.0], [-1.0, 30.0]]), 2)
    assert matrix_cocycle_norm(0.0, 1, params) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(30.0333, abs=1e-4)


def test_matrix_norm_matches_direct_product(reference_params):
    theta = orbit_angles(0.13, 20, reference_params.omega)
    product = np.eye(2)
    for t in theta[:20]:
        product = np.array([[0.0, 1.0], [-1.0, float(reference_params.a(t))]]) @ product
    assert matrix_cocycle_norm(0.13, 20, reference_params) == pytest.approx(np.linalg.norm(product, 2), rel=1e-12)


def test_inverse_products(reference_params):
    # A^-1 of an SL(2) matrix has the same norm
    back = reference_params.omega.shift(0.13, -1)
    assert matrix_cocycle_norm(0.13, -1, reference_params) == pytest.approx(
        matrix_cocycle_norm(back, 1, reference_params), rel=1e-14)


def test_log_norm_survives_renormalization(reference_params):
    n = 5000
    log_norm = log_matrix_cocycle_norm(0.3, n, reference_params)
    # A^n e_2 = (r_1 ... r_{n-1}) (1, r_n) for the orbit seeded at r = infinity
    orbit = iterate_orbit(0.3, math.inf, n, reference_params)
    log_column = float(np.sum(np.log(orbit.values[1:n]))) + 0.5 * math.log1p(orbit.values[n] ** 2)
    assert log_column <= log_norm + 1e-9
    assert log_norm - log_column < 2.0
    with pytest.raises(ScaleOverflow):
        matrix_cocycle_norm(0.3, n, reference_params)


# ── distance and distortion products ─────────────────────────────────────────

def test_constant_distance_product(reference_params):
    thetas = orbit_angles(0.0, 3, reference_params.omega)
    r = ProjectiveOrbit(0.0, np.full(4, 2.0), thetas, reference_params)
    s = ProjectiveOrbit(0.0, np.full(4, 2.0), thetas, reference_params)
    assert math.exp(distance_product(r, s, 0, 2)) == pytest.approx(1 / 64)
    assert distortion_product(s, s, 0, 3) == 0.0


def test_one_step_gap(reference_params):
    r = iterate_orbit(0.25, 2.0, 1, reference_params)
    s = iterate_orbit(0.25, 1.0, 1, reference_params)
    assert r.values[1] - s.values[1] == pytest.approx(0.5, rel=1e-14)
    assert math.exp(distance_product(r, s, 0, 0)) == pytest.approx(0.5)


def test_distance_product_recovers_gap(elliptic, rng):
    for _ in range(20):
        theta0 = float(rng.uniform(0, 1))
        r0, s0 = rng.uniform(0.5, 2.0, 2)
        r = iterate_orbit(theta0, r0, 50, elliptic)
        s = iterate_orbit(theta0, s0, 50, elliptic)
        sign = np.prod(np.sign(r.values[:50] * s.values[:50]))
        predicted = sign * math.exp(distance_product(r, s, 0, 49)) * (r0 - s0)
        assert predicted == pytest.approx(r.values[50] - s.values[50], rel=1e-11)


def test_distortion_relation_and_monotonicity(reference_params, rng):
    for _ in range(50):
        theta0 = float(rng.uniform(0, 1))
        s0, z0, r0 = np.sort(rng.uniform(1.0, 30.0, 3))
        r, z, s = (iterate_orbit(theta0, x, 30, reference_params) for x in (r0, z0, s0))
        lhs = distance_product(r, z, 0, 29)
        rhs = distance_product(r, s, 0, 29) + distortion_product(s, z, 0, 29)
        assert lhs == pytest.approx(rhs, rel=1e-12)
        pi_sr = distortion_product(s, r, 0, 29)
        pi_zr = distortion_product(z, r, 0, 29)
        assert pi_sr <= pi_zr + 1e-12
        assert pi_zr <= 1e-12


def test_distortion_lower_bound(reference_params, rng):
    for r, s in _positive_pairs(reference_params, rng, 50, 30):
        assert distortion_lower_bound(r, s, 29) <= distortion_product(s, r, 0, 29)


def test_misaligned_orbits_rejected(reference_params):
    r = iterate_orbit(0.1, 2.0, 10, reference_params)
    s = iterate_orbit(0.2, 1.0, 10, reference_params)
    with pytest.raises(FibreMismatch):
        distance_product(r, s, 0, 5)
    with pytest.raises(FibreMismatch):
        distance_product(r, iterate_orbit(0.1, 1.0, 3, reference_params), 0, 5)
    with pytest.raises(ValidationError):
        distance_product(r, r, 4, 2)


# ── derivative difference ────────────────────────────────────────────────────

def test_derivative_difference_reconstruction(reference_params, rng):
    for r, s in _positive_pairs(reference_params, rng, 100, 40):
        dr = theta_derivatives(r, float(rng.normal()))
        ds = theta_derivatives(s, float(rng.normal()))
        result = derivative_difference(r, s, 30, dr, ds)
        assert result.mismatch < 1e-8, result.to_dict()
        assert result.within_bound


# ── growth and separation diagnostics ────────────────────────────────────────

def test_growth_diagnostic_on_synthetic_orbits(reference_params):
    lam = reference_params.lam
    thetas = orbit_angles(0.0, 10, reference_params.omega)
    expanding = ProjectiveOrbit(0.0, np.full(11, 1.5 * lam), thetas, reference_params)
    result = growth_diagnostic(expanding)
    assert result.rho == 0.0 and result.holds
    contracting = ProjectiveOrbit(0.0, np.full(11, 0.5 / lam), thetas, reference_params, direction=-1)
    assert growth_diagnostic(contracting, contracting=True).holds


def test_separation_frequency_report(reference_params):
    r = iterate_orbit(0.3, 20.0, 100, reference_params)
    s = iterate_orbit(0.3, 1.0, 100, reference_params)
    report = separation_frequency(r, s)
    assert report.separated
    assert report.bound == pytest.approx(2 / 3 + 3 / 200)
    assert report.holds


def _pairs_in_B(params, rng, count, length, min_gap=0.0):
    """Coupled forward orbits seeded log-uniformly in B with s_0 <= r_0 and r_0 - s_0 >= min_gap,
    at energies drawn from [-2, lambda^2]. Yields (r, s, m) with m the number of leading steps
    on which both stay in B."""
    bands = params.bands
    for _ in range(count):
        while True:
            s0, r0 = np.sort(np.exp(rng.uniform(math.log(bands.lower), math.log(bands.upper), 2)))
            if r0 - s0 >= min_gap:
                break
        theta0 = float(rng.uniform(0, 1))
        coupled = params.with_energy(float(rng.uniform(-2.0, params.lambda_sq)))
        r = iterate_orbit(theta0, r0, length, coupled)
        s = iterate_orbit(theta0, s0, length, coupled)
        inside = bands.in_B(r.values) & bands.in_B(s.values)
        m = len(inside) if inside.all() else int(np.argmin(inside))
        yield r, s, m


def test_growth_diagnostic_with_sampled_weights(reference_params, rng):
    lam = reference_params.lam
    for _ in range(20):
        theta0 = float(rng.uniform(0, 1))
        forward = iterate_orbit(theta0, float(rng.uniform(lam, lam ** 2)), 200, reference_params)
        alphas = rng.uniform(1.0, 2.0, (20, 200))
        sampled = growth_diagnostic(forward, alphas=alphas)
        assert sampled.holds, sampled.to_dict()
        assert sampled.log_product >= growth_diagnostic(forward).log_product
        backward = iterate_orbit(theta0, float(rng.uniform(lam ** -2, 1 / lam)), 200, reference_params, direction=-1)
        sampled = growth_diagnostic(backward, contracting=True, alphas=alphas)
        assert sampled.holds, sampled.to_dict()
        assert sampled.log_product <= growth_diagnostic(backward, contracting=True).log_product


def test_growth_diagnostic_rejects_weights_outside_range(reference_params):
    orbit = iterate_orbit(0.3, 20.0, 10, reference_params)
    with pytest.raises(ValidationError):
        growth_diagnostic(orbit, alphas=np.full(10, 2.5))
    with pytest.raises(ValidationError):
        growth_diagnostic(orbit, alphas=np.ones(9))


def test_separation_frequency_on_random_pairs(reference_params, rng):
    lam = reference_params.lam
    checked = 0
    for r, s, m in _pairs_in_B(reference_params, rng, 300, 80, min_gap=lam ** -7):
        if m < 2:
            continue
        report = separation_frequency(r, s, m - 1)
        assert report.separated
        assert report.holds, report.to_dict()
        checked += 1
    assert checked > 0


def test_order_preserved_while_in_B(reference_params, rng):
    for r, s, m in _pairs_in_B(reference_params, rng, 300, 80):
        assert np.all(s.values[:m] <= r.values[:m])


# ── region transitions ───────────────────────────────────────────────────────

def test_region_transition_inner_endpoints(reference_params, rng):
    forward = region_transition(reference_params, rng)
    assert forward.samples == 10_000
    assert forward.holds and forward.margin >= 1.0, forward.to_dict()
    backward = region_transition(reference_params, rng, direction=-1)
    assert backward.holds and backward.margin >= 1.0, backward.to_dict()


def test_region_transition_overshoots_upper_band(reference_params, rng):
    # sup lambda^2 v = 2 lambda^2 for the normalised cosine
    forward = region_transition(reference_params, rng)
    assert forward.outer > 0
    assert forward.holds


def test_region_transition_fails_at_high_energy(reference_params, rng):
    report = region_transition(reference_params, rng, samples=2_000, energies=(50.0, 50.0))
    assert not report.holds
    assert report.counterexample["z1"] < reference_params.lam


# ── Lyapunov exponent from a section ─────────────────────────────────────────

def test_lyapunov_of_constant_section(omega):
    lam = math.sqrt(30.0)
    assert lyapunov_via_section(lambda t: np.full(np.shape(t), lam), 1000, omega=omega) == pytest.approx(math.log(lam))


def test_lyapunov_rejects_non_positive_section(omega):
    with pytest.raises(InvalidSection):
        lyapunov_via_section(lambda t: np.cos(2 * math.pi * t), 100, omega=omega)
