"""Pullback evaluation of the invariant sections.

psi^u(theta) is the limit of the forward fibre map started T steps in the
past at theta - T omega; psi^s(theta) the limit of the inverse map started
T steps in the future at theta + T omega. Both are evaluated for whole
arrays of angles at once, and the first and second derivatives in theta and
E are carried along the orbit with the recursions

    forward:  r' = a - 1/r
              d_theta r'  = lambda^2 v' + d_theta r / r^2
              d2_theta r' = lambda^2 v'' + d2_theta r / r^2 - 2 (d_theta r)^2 / r^3
              d_E r'      = -1 + d_E r / r^2
              d2_E r'     = d2_E r / r^2 - 2 (d_E r)^2 / r^3

    backward: r = 1 / (a - r')
              d_theta r   = r^2 (d_theta r' - lambda^2 v')
              d2_theta r  = r^2 (d2_theta r' - lambda^2 v'') + 2 (d_theta r)^2 / r
              d_E r       = r^2 (1 + d_E r')
              d2_E r      = r^2 d2_E r' + 2 (d_E r)^2 / r

with every derivative seeded at 0.
"""
import logging
from typing import Optional

import numpy as np
from mpmath import mp

from cocycle.main import CocycleParams
from errors import ValidationError
from rotation.main import rotation_offsets

logger = logging.getLogger(__name__)

UNSTABLE = "unstable"
STABLE = "stable"
DIRECTIONS = (UNSTABLE, STABLE)

SEED_POLICIES = ("cone", "band")
CONFINEMENTS = ("cone", "band")

DD_DIGITS = 32


class Pullback:
    """Arrays produced by one vectorised pullback of horizon T.

    `failed[i]` is set when the orbit of point i left the confinement region;
    `fail_step[i]` is the first step at which it did (-1 otherwise).
    """

    def __init__(self, psi: np.ndarray, horizon: int, failed: np.ndarray, fail_step: np.ndarray,
                 d_theta: Optional[np.ndarray] = None, d2_theta: Optional[np.ndarray] = None,
                 d_E: Optional[np.ndarray] = None, d2_E: Optional[np.ndarray] = None):
        self.psi = psi
        self.horizon = horizon
        self.failed = failed
        self.fail_step = fail_step
        self.d_theta = d_theta
        self.d2_theta = d2_theta
        self.d_E = d_E
        self.d2_E = d2_E

    @property
    def has_derivatives(self) -> bool:
        return self.d_theta is not None

    @property
    def ok(self) -> bool:
        return not bool(np.any(self.failed))

    def first_failure(self):
        """(index, step) of the first failed point, or None."""
        bad = np.nonzero(self.failed)[0]
        if bad.size == 0:
            return None
        return int(bad[0]), int(self.fail_step[bad[0]])


def _check_policies(direction: str, seed_policy: str, confinement: str):
    if direction not in DIRECTIONS:
        raise ValidationError(f"direction must be one of {DIRECTIONS}, got '{direction}'")
    if seed_policy not in SEED_POLICIES:
        raise ValidationError(f"seed_policy must be one of {SEED_POLICIES}, got '{seed_policy}'")
    if confinement not in CONFINEMENTS:
        raise ValidationError(f"confinement must be one of {CONFINEMENTS}, got '{confinement}'")


def pullback(thetas, horizon: int, params: CocycleParams, direction: str, energy=None,
             seed_policy: str = "cone", confinement: str = "cone", with_derivatives: bool = True) -> Pullback:
    """Evaluates psi^u or psi^s at every angle with a pullback of `horizon` steps.

    Args:
        thetas: Angles, any shape.
        horizon (int): Number of fibre steps T >= 1.
        params (CocycleParams): The cocycle; its energy is used unless `energy` is given.
        direction (str): "unstable" or "stable".
        energy: Optional energies broadcast against `thetas` (finite-difference stencils in E).
        seed_policy (str): "cone" starts from the boundary of the positive cone
            (r = infinity for psi^u, r = 0 for psi^s); "band" from the midpoint of B^u / B^s.
        confinement (str): "cone" requires r > 0 along the orbit, "band" requires r in B.
        with_derivatives (bool): Also advance the derivative recursions.

    Returns:
        Pullback: psi (and derivatives) with the same shape as `thetas`.
    """
    _check_policies(direction, seed_policy, confinement)
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    thetas = np.asarray(thetas, dtype=np.float64)
    E = params.E if energy is None else np.asarray(energy, dtype=np.float64)
    thetas, E = np.broadcast_arrays(thetas, E)
    shape = thetas.shape
    lam_sq = params.lambda_sq
    potential = params.potential
    bands = params.bands
    offsets = rotation_offsets(params.omega, horizon)
    unstable = direction == UNSTABLE

    mid_u, mid_s = bands.midpoints()
    if seed_policy == "cone":
        r = np.full(shape, np.inf if unstable else 0.0)
    else:
        r = np.full(shape, mid_u if unstable else mid_s)
    if with_derivatives:
        dt = np.zeros(shape)
        d2t = np.zeros(shape)
        de = np.zeros(shape)
        d2e = np.zeros(shape)
    failed = np.zeros(shape, dtype=bool)
    fail_step = np.full(shape, -1, dtype=np.int64)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for j in range(horizon):
            if unstable:
                phi = np.mod(thetas - offsets[horizon - j], 1.0)
            else:
                phi = np.mod(thetas + offsets[horizon - 1 - j], 1.0)
            a = lam_sq * potential.v(phi) - E
            if unstable:
                inv = 1.0 / r
                if with_derivatives:
                    inv2 = inv * inv
                    dv = lam_sq * potential.dv(phi)
                    d2v = lam_sq * potential.d2v(phi)
                    d2t = d2v + d2t * inv2 - 2.0 * dt * dt * inv2 * inv
                    dt = dv + dt * inv2
                    d2e = d2e * inv2 - 2.0 * de * de * inv2 * inv
                    de = -1.0 + de * inv2
                r = a - inv
            else:
                r = 1.0 / (a - r)
                if with_derivatives:
                    r2 = r * r
                    dv = lam_sq * potential.dv(phi)
                    d2v = lam_sq * potential.d2v(phi)
                    dt = r2 * (dt - dv)
                    d2t = r2 * (d2t - d2v) + 2.0 * dt * dt / r
                    de = r2 * (1.0 + de)
                    d2e = r2 * d2e + 2.0 * de * de / r
            if confinement == "cone":
                bad = ~(r > 0) | ~np.isfinite(r)
            else:
                bad = ~bands.in_B(r)
            newly = bad & ~failed
            if np.any(newly):
                fail_step[newly] = j
                failed |= newly

    if with_derivatives:
        return Pullback(r, horizon, failed, fail_step, dt, d2t, de, d2e)
    return Pullback(r, horizon, failed, fail_step)


def pullback_mp(theta: float, horizon: int, params: CocycleParams, direction: str, energy: Optional[float] = None,
                dps: int = DD_DIGITS):
    """Scalar pullback in mpmath arithmetic with `dps` digits (the `dd` precision mode).

    Always uses the cone seeds; returns an mpf.
    """
    _check_policies(direction, "cone", "cone")
    with mp.workdps(dps):
        omega = mp.mpf(params.omega.exact)
        theta = mp.mpf(theta)
        E = mp.mpf(params.E if energy is None else energy)
        lam_sq = mp.mpf(params.lambda_sq)
        potential = params.potential
        if direction == UNSTABLE:
            r = mp.inf
            for j in range(horizon):
                phi = theta - (horizon - j) * omega
                r = lam_sq * potential.v_mp(phi) - E - (0 if mp.isinf(r) else 1 / r)
        else:
            r = mp.mpf(0)
            for j in range(horizon):
                phi = theta + (horizon - 1 - j) * omega
                r = 1 / (lam_sq * potential.v_mp(phi) - E - r)
        return +r
