"""The property suite behind `cocycle-lab check`.

Every check returns a PropertyResult; a failing property is data, reported
with a counterexample, never an exception.
"""
import logging
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from cocycle.main import CocycleParams, iterate_orbit, region_transition
from cocycle.products import (derivative_difference, distance_product, distortion_lower_bound, distortion_product,
                              theta_derivatives)
from config.run_config import RunConfig
from curves.checks import derivative_bound_check, derivative_recursion_check, mirror_identity_defect
from curves.main import CurveSettings, compute_curves, evaluate_stable, evaluate_unstable, gap_on_grid
from errors import LabError, NotInCollisionWindow
from ladder.conditions import box_images, box_separation, check_condition_C1, check_condition_C2
from ladder.main import build_ladder
from ladder.stopping import sigma_statistics
from rotation.arcs import Arc
from rotation.interval_systems import empirical_visit_frequency, measure_system_constants

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-8
DERIVATIVE_TOL = 1e-5
MIRROR_TOL = 1e-10
ORBIT_LENGTH = 30
SYSTEM_HORIZON = 10_000
SYSTEM_COUNT = 100
TRANSITION_SAMPLES = 10_000
DERIVATIVE_ENERGIES = (-3.0, -1.0)

IDENTITY = "identity"
PROPERTY = "property"
LADDER = "ladder"


class PropertyResult(BaseModel):
    name: str
    kind: str
    passed: bool
    samples: int = 0
    max_error: Optional[float] = None
    tolerance: Optional[float] = None
    counterexample: Optional[Dict[str, Any]] = None
    details: Dict[str, Any] = Field(default_factory=dict)


class CheckReport(BaseModel):
    config_hash: str
    lambda_sq: float
    seed: int
    results: List[PropertyResult]
    passed: bool
    identities_passed: bool


class CoupledOrbits:
    """Triples of forward orbits s <= z <= r over one base orbit, seeded in [1, lambda^2] inside B."""

    def __init__(self, params: CocycleParams, rng: np.random.Generator, count: int, length: int = ORBIT_LENGTH,
                 fault_step: Optional[int] = None):
        self.length = length
        self.triples = []
        for _ in range(count):
            theta0 = float(rng.uniform(0, 1))
            s0, z0, r0 = np.sort(rng.uniform(1.0, params.lambda_sq, 3))
            self.triples.append((iterate_orbit(theta0, float(r0), length, params, fault_step=fault_step),
                                 iterate_orbit(theta0, float(z0), length, params),
                                 iterate_orbit(theta0, float(s0), length, params)))

    def positive(self):
        """Triples whose three orbits stay in r > 0, where the fibre map preserves order."""
        return [t for t in self.triples if all(np.all(o.values > 0) for o in t)]

    def confined(self):
        """Triples whose three orbits stay in B."""
        return [t for t in self.triples if all(np.all(o.params.bands.in_B(o.values)) for o in t)]


def _identity(name: str, orbits: CoupledOrbits, error: Callable, tolerance: float = IDENTITY_TOL,
              triples: Optional[List] = None) -> PropertyResult:
    """Runs error(r, z, s) -> (value, payload) over every triple; payload is reported for the worst one."""
    worst, worst_payload = 0.0, None
    first_failure = None
    triples = orbits.triples if triples is None else triples
    for r, z, s in triples:
        value, payload = error(r, z, s)
        if value > worst:
            worst, worst_payload = value, payload
        if value > tolerance and first_failure is None:
            first_failure = payload
    passed = worst <= tolerance
    return PropertyResult(name=name, kind=IDENTITY, passed=passed, samples=len(triples), max_error=worst,
                          tolerance=tolerance, counterexample=None if passed else (first_failure or worst_payload),
                          details={"skipped": len(orbits.triples) - len(triples)})


def check_distance_recursion(orbits: CoupledOrbits) -> PropertyResult:
    """r_{k+1} - s_{k+1} = (r_k - s_k) / (r_k s_k) at every step; the first broken step is reported."""

    def error(r, z, s):
        rv, sv = r.values, s.values
        lhs = rv[1:] - sv[1:]
        rhs = (rv[:-1] - sv[:-1]) / (rv[:-1] * sv[:-1])
        defect = np.abs(lhs - rhs) / (np.abs(rv[1:]) + np.abs(sv[1:]))
        k = int(np.argmax(defect > IDENTITY_TOL)) if np.any(defect > IDENTITY_TOL) else int(np.argmax(defect))
        return float(defect.max()), {"theta0": r.theta0, "step": k + 1, "r": float(rv[k + 1]), "s": float(sv[k + 1]),
                                     "defect": float(defect[k])}
    return _identity("distance_recursion", orbits, error)


def check_product_relation(orbits: CoupledOrbits) -> PropertyResult:
    """log D(r, z) = log D(r, s) + log Pi(s, z)."""
    k = orbits.length - 1

    def error(r, z, s):
        lhs = distance_product(r, z, 0, k)
        rhs = distance_product(r, s, 0, k) + distortion_product(s, z, 0, k)
        return abs(lhs - rhs) / max(1.0, abs(lhs)), {"theta0": r.theta0, "lhs": lhs, "rhs": rhs}
    return _identity("distance_distortion_relation", orbits, error)


def check_distortion_monotone(orbits: CoupledOrbits) -> PropertyResult:
    """Pi(s, r) <= Pi(z, r) <= 1 for s <= z <= r."""
    k = orbits.length - 1

    def error(r, z, s):
        pi_sr = distortion_product(s, r, 0, k)
        pi_zr = distortion_product(z, r, 0, k)
        excess = max(0.0, pi_sr - pi_zr, pi_zr)
        return excess, {"theta0": r.theta0, "log_pi_sr": pi_sr, "log_pi_zr": pi_zr}
    return _identity("distortion_monotone", orbits, error, tolerance=1e-12, triples=orbits.positive())


def check_distortion_inequality(orbits: CoupledOrbits) -> PropertyResult:
    """Pi(s, r) >= exp(-lambda^4 sum_j 1/D_{j,k})."""
    k = orbits.length - 1

    def error(r, z, s):
        bound = distortion_lower_bound(r, s, k)
        value = distortion_product(s, r, 0, k)
        return max(0.0, bound - value), {"theta0": r.theta0, "log_bound": bound, "log_pi": value}
    return _identity("distortion_inequality", orbits, error, tolerance=1e-12, triples=orbits.confined())


def check_derivative_difference(orbits: CoupledOrbits, rng: np.random.Generator) -> List[PropertyResult]:
    """Dominant term plus remainder reconstructs d_theta(r - s), and the remainder obeys its bound in B."""
    k = orbits.length - 2
    positive = orbits.positive()
    confined = {id(t) for t in orbits.confined()}
    seeds = rng.normal(size=(len(positive), 2))
    results, bounded = [], []
    for triple, (a, b) in zip(positive, seeds):
        r, _, s = triple
        difference = derivative_difference(r, s, k, theta_derivatives(r, float(a)), theta_derivatives(s, float(b)))
        results.append(difference)
        if id(triple) in confined:
            bounded.append(difference)
    worst = max(results, key=lambda d: d.mismatch, default=None)
    over = [d for d in bounded if not d.within_bound]
    reconstruction = PropertyResult(
        name="derivative_reconstruction", kind=IDENTITY, samples=len(results),
        passed=worst is None or worst.mismatch <= IDENTITY_TOL, tolerance=IDENTITY_TOL,
        max_error=worst.mismatch if worst else 0.0,
        counterexample=worst.to_dict() if worst and worst.mismatch > IDENTITY_TOL else None)
    remainder = PropertyResult(
        name="remainder_bound", kind=IDENTITY, samples=len(bounded), passed=not over,
        max_error=max((abs(d.remainder) / d.remainder_bound for d in bounded if d.remainder_bound > 0), default=0.0),
        tolerance=1.0, counterexample=over[0].to_dict() if over else None)
    return [reconstruction, remainder]


def check_derivative_recursions(params: CocycleParams, settings: CurveSettings, rng: np.random.Generator,
                                probes: int) -> PropertyResult:
    """All four recursion derivatives against central differences at random (theta, E)."""
    worst, worst_payload, failures = 0.0, None, 0
    for theta, E in zip(rng.uniform(0, 1, probes), rng.uniform(*DERIVATIVE_ENERGIES, probes)):
        at_E = params.with_energy(float(E))
        for evaluate in (evaluate_unstable, evaluate_stable):
            try:
                check = derivative_recursion_check(evaluate(float(theta), at_E, settings=settings), at_E, settings)
            except LabError as e:
                failures += 1
                worst_payload = worst_payload or {"theta": float(theta), "E": float(E), **e.to_dict()}
                continue
            if check.max_mismatch > worst:
                worst, worst_payload = check.max_mismatch, dict(check.to_dict(), E=float(E))
    passed = failures == 0 and worst <= DERIVATIVE_TOL
    return PropertyResult(name="derivative_recursions", kind=IDENTITY, passed=passed, samples=2 * probes,
                          max_error=worst, tolerance=DERIVATIVE_TOL, counterexample=None if passed else worst_payload,
                          details={"stencil_failures": failures})


def check_counting_bounds(params: CocycleParams, rng: np.random.Generator, count: int = SYSTEM_COUNT,
                          horizon: int = SYSTEM_HORIZON) -> PropertyResult:
    """Visit frequencies of random interval systems stay under both analytic bounds."""
    omega = params.omega
    violations, first = 0, None
    worst = 0.0
    for _ in range(count):
        theta0 = float(rng.uniform(0, 1))
        direction = "forward" if rng.uniform() < 0.5 else "backward"
        systems = []
        for _ in range(int(rng.integers(1, 4))):
            arcs = [Arc(c, h) for c, h in zip(rng.uniform(0, 1, 2), rng.uniform(1e-4, 0.03, 2))]
            systems.append(measure_system_constants(arcs, theta0, omega, horizon, direction))
        for t in (100, 1_000, horizon):
            result = empirical_visit_frequency(systems, theta0, t, omega, direction)
            bound = min(result.time_bound, result.accumulation_bound)
            worst = max(worst, result.frequency - bound)
            if not result.within_bounds:
                violations += 1
                first = first or dict(result.to_dict(), theta0=theta0, direction=direction)
    return PropertyResult(name="visit_frequency_bounds", kind=PROPERTY, passed=violations == 0, samples=count,
                          max_error=max(worst, 0.0), tolerance=0.0, counterexample=first,
                          details={"horizon": horizon, "violations": violations})


def check_region_transition(params: CocycleParams, rng: np.random.Generator,
                            samples: int = TRANSITION_SAMPLES) -> PropertyResult:
    """One step from B \\ B^s off I_0 lands above lambda, and one step back lands below 1/lambda.

    Only the inner endpoints are asserted. Overshoots past lambda^2 (and below
    lambda^-2 backward) are counted in details.
    """
    forward = region_transition(params, rng, samples, direction=1)
    backward = region_transition(params, rng, samples, direction=-1)
    violations = forward.inner + backward.inner
    return PropertyResult(name="region_transition", kind=PROPERTY, passed=violations == 0, samples=2 * samples,
                          max_error=max(0.0, 1.0 - min(forward.margin, backward.margin)), tolerance=0.0,
                          counterexample=forward.counterexample or backward.counterexample,
                          details={"forward": forward.to_dict(), "backward": backward.to_dict()})


def check_curves(params: CocycleParams, settings: CurveSettings, rng: np.random.Generator) -> List[PropertyResult]:
    """Ordering, mirror identity, the d_E bound and the stopping-time bound on the curves at params.E."""
    results = []
    try:
        curve_u, curve_s = compute_curves(params, settings)
    except LabError as e:
        return [PropertyResult(name="curves", kind=PROPERTY, passed=False, counterexample=e.to_dict(),
                               details={"E": params.E})]
    gap = gap_on_grid(curve_u, curve_s)
    i = int(np.argmin(gap))
    results.append(PropertyResult(name="curves_ordered", kind=PROPERTY, passed=bool(gap[i] > 0), samples=len(gap),
                                  details={"E": params.E, "min_gap": float(gap[i])},
                                  counterexample=None if gap[i] > 0 else {"theta": float(curve_u.thetas[i]),
                                                                          "gap": float(gap[i])}))
    probes = rng.uniform(0, 1, 200)
    if params.potential.is_even:
        defect = mirror_identity_defect(curve_u, curve_s, probes)
        results.append(PropertyResult(name="mirror_identity", kind=IDENTITY, passed=defect <= MIRROR_TOL,
                                      samples=len(probes), max_error=defect, tolerance=MIRROR_TOL))
    bound = derivative_bound_check(curve_u, probes)
    results.append(PropertyResult(name="energy_derivative_bound", kind=PROPERTY, passed=bound.holds,
                                  samples=bound.checked, max_error=bound.max_ratio, tolerance=1.0,
                                  details=bound.to_dict()))
    try:
        stats = sigma_statistics(curve_u, curve_s)
    except NotInCollisionWindow as e:
        results.append(PropertyResult(name="stopping_time_bound", kind=PROPERTY, passed=True,
                                      details={"skipped": e.message}))
        return results
    except LabError as e:
        results.append(PropertyResult(name="stopping_time_bound", kind=PROPERTY, passed=False,
                                      counterexample=e.to_dict()))
        return results
    lam = params.lam
    over = [t for t in stats.times if t.sigma_plus > t.bound(lam)]
    results.append(PropertyResult(name="stopping_time_bound", kind=PROPERTY, passed=not over, samples=len(stats.times),
                                  counterexample=dict(over[0].to_dict(), bound=over[0].bound(lam)) if over else None))
    return results


def check_ladder(params: CocycleParams, config: RunConfig) -> List[PropertyResult]:
    """(C2)_n on representable levels, sampled (C1)_0 and disjoint boxes at the ladder energy."""
    settings = config.ladder
    try:
        ladder = build_ladder(params, max_level=settings.max_level, m_choice=settings.m_choice,
                              n_max=config.cocycle.n_max, tau=config.cocycle.tau)
    except LabError as e:
        return [PropertyResult(name="ladder", kind=LADDER, passed=False, counterexample=e.to_dict())]
    results = []
    for level in ladder.levels:
        if level.M is None or level.length is None:
            continue
        try:
            holds = check_condition_C2(ladder, level.n)
            results.append(PropertyResult(name=f"C2_{level.n}", kind=LADDER, passed=holds, details={"M": level.M}))
        except LabError as e:
            results.append(PropertyResult(name=f"C2_{level.n}", kind=LADDER, passed=False, counterexample=e.to_dict()))
    E = settings.c1_energy
    try:
        report = check_condition_C1(ladder, 0, E, samples=settings.c1_samples, step_cap=settings.step_cap)
        results.append(PropertyResult(name="C1_0", kind=LADDER, passed=report.passed, samples=report.samples,
                                      counterexample=report.counterexample, details=report.to_dict()))
    except LabError as e:
        results.append(PropertyResult(name="C1_0", kind=LADDER, passed=False, counterexample=e.to_dict()))
    try:
        separation = box_separation(*box_images(ladder, 0, E, points=settings.box_points))
        results.append(PropertyResult(name="boxes_disjoint_0", kind=LADDER, passed=separation > 0,
                                      details={"E": E, "separation": separation}))
    except LabError as e:
        results.append(PropertyResult(name="boxes_disjoint_0", kind=LADDER, passed=False, counterexample=e.to_dict()))
    for result in results:
        result.details.setdefault("degenerate", ladder.degenerate)
    return results


def run_checks(config: RunConfig, params: CocycleParams) -> CheckReport:
    """Runs the whole suite with the config's seed, orbit and probe counts.

    With run.inject_fault = "fibre" the upper orbit of every coupled triple
    is corrupted at step 5, which the distance recursion must pinpoint.
    """
    rng = np.random.default_rng(config.run.seed)
    settings = CurveSettings.from_run_config(config)
    fault_step = 5 if config.run.inject_fault == "fibre" else None
    orbits = CoupledOrbits(params, rng, config.run.check_orbits, fault_step=fault_step)
    results = [
        check_distance_recursion(orbits),
        check_product_relation(orbits),
        check_distortion_monotone(orbits),
        check_distortion_inequality(orbits),
        *check_derivative_difference(orbits, rng),
        check_derivative_recursions(params, settings, rng, config.run.check_probes),
        check_counting_bounds(params, rng),
        *check_curves(params, settings, rng),
        *check_ladder(params.with_energy(config.ladder.c1_energy), config),
        check_region_transition(params, rng),
    ]
    for result in results:
        level = logging.INFO if result.passed else logging.WARNING
        logger.log(level, f"check {result.name}: {'pass' if result.passed else 'FAIL'}")
    identities = all(r.passed for r in results if r.kind == IDENTITY)
    report = CheckReport(config_hash=config.config_hash(), lambda_sq=params.lambda_sq, seed=config.run.seed,
                         results=results, passed=all(r.passed for r in results), identities_passed=identities)
    logger.info(f"Check suite: {sum(r.passed for r in results)}/{len(results)} properties hold")
    return report
