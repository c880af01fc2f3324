"""Numerical checks of the curve derivatives.

The recursions give exact derivatives of the T-step pullback, so central
finite differences taken at the same horizon must agree with them up to
the stencil error.
"""
import logging
from typing import Dict, Optional

import numpy as np

from cocycle.main import CocycleParams
from curves.main import CurvePoint, CurveSettings, InvariantCurve
from curves.recursions import STABLE, UNSTABLE, pullback
from errors import StencilError, ValidationError

logger = logging.getLogger(__name__)

FD_STEP = 1e-6
FD_STEP_SECOND = 1e-4
STABILIZATION_STEPS = 12


def _second_difference(side, centre, h):
    """Fourth-order central second difference from f(x-2h), f(x-h), f(x+h), f(x+2h)."""
    m2, m1, p1, p2 = side
    return (-m2 + 16 * m1 - 30 * centre + 16 * p1 - p2) / (12 * h * h)


class DerivativeCheck:
    """Relative mismatch of each recursion derivative against its finite difference."""

    def __init__(self, point: CurvePoint, recursion: Dict[str, float], finite_difference: Dict[str, float]):
        self.point = point
        self.recursion = recursion
        self.finite_difference = finite_difference
        self.mismatch = {key: abs(recursion[key] - finite_difference[key]) / max(abs(finite_difference[key]), 1.0)
                         for key in recursion}

    @property
    def max_mismatch(self) -> float:
        return max(self.mismatch.values())

    def passed(self, tolerance: float = 1e-5) -> bool:
        return self.max_mismatch <= tolerance

    def to_dict(self):
        return {"theta": self.point.theta, "direction": self.point.direction, "horizon": self.point.horizon,
                "recursion": self.recursion, "finite_difference": self.finite_difference,
                "mismatch": self.mismatch, "max_mismatch": self.max_mismatch}


def derivative_recursion_check(point: CurvePoint, params: CocycleParams, settings: Optional[CurveSettings] = None,
                               h: float = FD_STEP, h2: float = FD_STEP_SECOND) -> DerivativeCheck:
    """Compares the four recursion derivatives of `point` with central differences.

    First derivatives use the three-point stencil with step h, second
    derivatives the five-point one with step h2; all stencil points are
    pulled back with the point's own horizon.

    Raises:
        StencilError: A stencil orbit left the confinement region.
    """
    settings = settings or CurveSettings.for_params(params)
    theta, E = point.theta, params.E
    steps = np.array([-h, h, -2 * h2, -h2, h2, 2 * h2])
    thetas = np.concatenate([[theta], theta + steps, np.full(6, theta)])
    energies = np.concatenate([[E], np.full(6, E), E + steps])
    result = pullback(thetas, point.horizon, params, point.direction, energies, seed_policy=settings.seed_policy,
                      confinement=settings.confinement, with_derivatives=False)
    if not result.ok:
        index, step = result.first_failure()
        raise StencilError(f"Stencil point {index} did not stay confined (step {step})", theta=theta, h=h, h2=h2)
    p = result.psi
    centre = p[0]
    theta_side, energy_side = p[1:7], p[7:13]
    finite_difference = {
        "d_theta": (theta_side[1] - theta_side[0]) / (2 * h),
        "d2_theta": _second_difference(theta_side[2:], centre, h2),
        "d_E": (energy_side[1] - energy_side[0]) / (2 * h),
        "d2_E": _second_difference(energy_side[2:], centre, h2),
    }
    recursion = {"d_theta": point.d_theta, "d2_theta": point.d2_theta, "d_E": point.d_E, "d2_E": point.d2_E}
    check = DerivativeCheck(point, recursion, {k: float(v) for k, v in finite_difference.items()})
    logger.debug(f"derivative check at theta={theta!r}: max mismatch {check.max_mismatch:.3g}")
    return check


class DerivativeBoundReport:
    def __init__(self, checked: int, skipped: int, violations: int, max_ratio: float, bound: float):
        self.checked = checked
        self.skipped = skipped
        self.violations = violations
        self.max_ratio = max_ratio
        self.bound = bound

    @property
    def holds(self) -> bool:
        return self.violations == 0

    def to_dict(self):
        return dict(vars(self), holds=self.holds)


def derivative_bound_check(curve_u: InvariantCurve, probes) -> DerivativeBoundReport:
    """|d_E psi^u + 1| <= 2/lambda^2 at probes whose past orbit is stabilized in B^u.

    A probe theta counts as stabilized when for some N the points
    theta - i omega, i = 1..N, have psi^u >= lambda and the seed term
    |d_E psi^u(theta - (N+1) omega)| / prod_{i<=N+1} psi^u(theta - i omega)^2
    is at most lambda^-4. Other probes are skipped.
    """
    if curve_u.direction != UNSTABLE:
        raise ValidationError("derivative_bound_check needs the unstable curve")
    params = curve_u.params
    lam = params.lam
    probes = np.atleast_1d(np.asarray(probes, dtype=np.float64))
    steps = np.arange(STABILIZATION_STEPS + 1)
    offsets = np.array([params.omega.offset(-int(i)) for i in steps])
    angles = np.mod(probes[:, None] + offsets[None, :], 1.0)
    values = curve_u.evaluate(angles, with_derivatives=True)
    psi, d_E = values.psi, values.d_E

    stabilized = np.zeros(probes.shape, dtype=bool)
    in_band = np.ones(probes.shape, dtype=bool)
    log_product = np.zeros(probes.shape)
    for n in range(STABILIZATION_STEPS):
        # seed at theta - (n+1) omega, band condition on theta - 1..n omega
        log_product = log_product + 2 * np.log(psi[:, n + 1])
        seed = np.abs(d_E[:, n + 1]) * np.exp(-log_product)
        stabilized |= in_band & (seed <= lam ** -4)
        in_band &= psi[:, n + 1] >= lam

    bound = 2.0 / params.lambda_sq
    excess = np.abs(d_E[:, 0] + 1.0)[stabilized]
    report = DerivativeBoundReport(checked=int(stabilized.sum()), skipped=int((~stabilized).sum()),
                                   violations=int(np.count_nonzero(excess > bound)),
                                   max_ratio=float(excess.max() / bound) if excess.size else 0.0, bound=bound)
    logger.debug(f"derivative bound: {report.to_dict()}")
    return report


def mirror_identity_defect(curve_u: InvariantCurve, curve_s: InvariantCurve, probes) -> float:
    """max |psi^s(theta) psi^u(omega - theta) - 1| over the probes (even potentials only)."""
    if curve_s.direction != STABLE or curve_u.direction != UNSTABLE:
        raise ValidationError("mirror_identity_defect takes (unstable, stable)")
    if not curve_u.params.potential.is_even:
        raise ValidationError("the mirror identity needs an even potential")
    probes = np.atleast_1d(np.asarray(probes, dtype=np.float64))
    mirrored = np.mod(curve_u.params.omega.omega - probes, 1.0)
    return float(np.max(np.abs(curve_s.evaluate(probes) * curve_u.evaluate(mirrored) - 1.0)))
