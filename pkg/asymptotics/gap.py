"""Minimum distance delta(E) between the invariant curves and its quadratic shape.

Near theta_c the distance behaves like delta + c (theta - theta_c)^2. Two
acceptance bands are reported for c:

- the plain band [lambda^2 / C, C lambda^2];
- the curvature-scaled band [k lambda^2 / C, C k lambda^2] with k = v''(theta_min)/2.

For the normalised cosine k = 2 pi^2, so at lambda^2 = 30 the measured
c ~ k lambda^2 ~ 590 lies in the scaled band but above the plain one.

The window is fitted twice. The symmetric model delta + c x^2 gives
quad_coeff_symmetric. The full quadratic delta + b x + c x^2 gives quad_coeff,
and its linear term b is reported as the shift -b / 2c of the fitted vertex
from theta_c, so a misplaced theta_c shows up next to the residual.
"""
import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import golden

from curves.main import InvariantCurve, gap_at, gap_on_grid
from curves.grid import MAX_WINDOW_HALF_WIDTH, WINDOW_WIDTH
from curves.recursions import STABLE, UNSTABLE
from errors import NonUniqueMinimum, ValidationError
from rotation.arcs import Arc

logger = logging.getLogger(__name__)

THETA_TOL = 1e-12
FIT_POINTS = 129
RIVAL_FACTOR = 2.0


class WindowFit:
    """Least-squares fits of d(theta_c + x) over one window; residuals are relative to delta."""

    def __init__(self, quad_coeff: float, linear_coeff: float, residual: float, quad_coeff_symmetric: float,
                 residual_symmetric: float, half_width: float):
        self.quad_coeff = quad_coeff
        self.linear_coeff = linear_coeff
        self.residual = residual
        self.quad_coeff_symmetric = quad_coeff_symmetric
        self.residual_symmetric = residual_symmetric
        self.half_width = half_width

    @property
    def vertex_shift(self) -> float:
        """-b / 2c: where the full fit puts the minimum, relative to theta_c."""
        if self.quad_coeff == 0:
            return math.inf
        return -self.linear_coeff / (2.0 * self.quad_coeff)

    @property
    def relative_shift(self) -> float:
        """|vertex_shift| in units of the window half-width."""
        return abs(self.vertex_shift) / self.half_width if self.half_width > 0 else math.inf


def fit_window(local: np.ndarray, d: np.ndarray, delta: float) -> WindowFit:
    """Fits delta + b x + c x^2 and delta + c x^2 to d sampled at offsets `local` from theta_c."""
    local = np.asarray(local, dtype=float)
    d = np.asarray(d, dtype=float)
    coeffs = np.polyfit(local, d, 2)
    residual = float(np.max(np.abs(np.polyval(coeffs, local) - d))) / delta
    design = np.column_stack([np.ones_like(local), local ** 2])
    (intercept, c_sym), *_ = np.linalg.lstsq(design, d, rcond=None)
    residual_sym = float(np.max(np.abs(intercept + c_sym * local ** 2 - d))) / delta
    return WindowFit(float(coeffs[0]), float(coeffs[1]), residual, float(c_sym), residual_sym,
                     float(np.max(np.abs(local))))


class GapProfile:
    """delta(E), theta_c and the quadratic fits of d around theta_c."""

    def __init__(self, E: float, delta: float, theta_c: float, window: Arc, fit: WindowFit,
                 d_E: float, d2_theta: float, potential_scale: float, lambda_sq: float,
                 rival: Optional[float] = None):
        self.E = E
        self.delta = delta
        self.theta_c = theta_c
        self.window = window
        self.fit = fit
        self.quad_coeff = fit.quad_coeff
        self.residual = fit.residual
        self.d_E = d_E
        self.d2_theta = d2_theta
        self.potential_scale = potential_scale
        self.lambda_sq = lambda_sq
        self.rival = rival

    @property
    def non_unique(self) -> bool:
        return self.rival is not None

    def quad_spec_band(self, C: float = 10.0) -> Tuple[float, float]:
        """[lambda^2 / C, C lambda^2]."""
        return self.lambda_sq / C, C * self.lambda_sq

    def quad_scaled_band(self, C: float = 10.0) -> Tuple[float, float]:
        """[k lambda^2 / C, C k lambda^2] with k = v''(theta_min)/2."""
        scale = self.potential_scale * self.lambda_sq
        return scale / C, C * scale

    def quad_in_spec_band(self, C: float = 10.0) -> bool:
        lo, hi = self.quad_spec_band(C)
        return lo <= self.quad_coeff <= hi

    def quad_in_scaled_band(self, C: float = 10.0) -> bool:
        lo, hi = self.quad_scaled_band(C)
        return lo <= self.quad_coeff <= hi

    def d_E_in_band(self) -> bool:
        """-1 - 4/lambda^2 <= d_E d(theta_c) <= -1 + 4/lambda^2."""
        return abs(self.d_E + 1.0) <= 4.0 / self.lambda_sq

    def to_dict(self):
        return {"E": self.E, "delta": self.delta, "theta_c": self.theta_c, "quad_coeff": self.quad_coeff,
                "window": [float(self.window.center), float(self.window.half_length)], "residual": self.residual,
                "linear_coeff": self.fit.linear_coeff, "vertex_shift": self.fit.vertex_shift,
                "quad_coeff_symmetric": self.fit.quad_coeff_symmetric,
                "residual_symmetric": self.fit.residual_symmetric,
                "quad_spec_band": list(self.quad_spec_band()), "quad_scaled_band": list(self.quad_scaled_band()),
                "d_E": self.d_E, "d2_theta": self.d2_theta, "rival": self.rival}

    def __str__(self):
        return (f"GapProfile(E={self.E!r}, delta={self.delta:.6g}, theta_c={self.theta_c!r}, "
                f"c={self.quad_coeff:.6g}, residual={self.residual:.3g}, shift={self.fit.vertex_shift:.3g})")


def _local_minima(gap: np.ndarray) -> np.ndarray:
    return np.nonzero((gap <= np.roll(gap, 1)) & (gap <= np.roll(gap, -1)))[0]


def refine_minimum(curve_u: InvariantCurve, curve_s: InvariantCurve, i: int) -> Tuple[float, float]:
    """Golden-section refinement of the grid minimum at node i; returns (theta_c, delta)."""
    thetas = curve_u.thetas
    n = len(thetas)
    left = float(thetas[i - 1]) - (1.0 if i == 0 else 0.0)
    right = float(thetas[(i + 1) % n]) + (1.0 if i == n - 1 else 0.0)
    centre = float(thetas[i])

    def f(theta):
        return gap_at(theta, curve_u, curve_s)

    try:
        theta_c, delta, _ = golden(f, brack=(left, centre, right), tol=THETA_TOL, full_output=True)
    except ValueError:
        # flat bracket: the grid value stands
        theta_c, delta = centre, f(centre)
    return float(theta_c) % 1.0, float(delta)


def gap_profile(curve_u: InvariantCurve, curve_s: InvariantCurve, fit_points: int = FIT_POINTS,
                strict: bool = False) -> GapProfile:
    """Locates theta_c and fits d around it with and without a linear term (see fit_window).

    The fit window has half-width 8 sqrt(delta/c0) with c0 half the grid value
    of d2_theta d at theta_c.

    Args:
        curve_u (InvariantCurve): psi^u on the adaptive grid.
        curve_s (InvariantCurve): psi^s on the same grid.
        fit_points (int): Samples in the fit window.
        strict (bool): Raise NonUniqueMinimum instead of recording the rival.

    Returns:
        GapProfile: With the rival minimum, if any, recorded.
    """
    if curve_u.direction != UNSTABLE or curve_s.direction != STABLE:
        raise ValidationError("gap_profile takes (unstable, stable)")
    params = curve_u.params
    gap = gap_on_grid(curve_u, curve_s)
    i = int(np.argmin(gap))
    if not gap[i] > 0:
        raise ValidationError(f"curves are not ordered: d = {gap[i]!r} at theta={curve_u.thetas[i]!r}")
    theta_c, delta = refine_minimum(curve_u, curve_s, i)

    c0 = 0.5 * float(curve_u.d2_theta[i] - curve_s.d2_theta[i])
    if not c0 > 0:
        c0 = 0.5 * params.lambda_sq * max(params.potential.curvature, 1.0)
    half = min(WINDOW_WIDTH * math.sqrt(delta / c0), MAX_WINDOW_HALF_WIDTH)
    local = np.linspace(-half, half, fit_points)
    angles = np.mod(theta_c + local, 1.0)
    values_u = curve_u.evaluate(angles, with_derivatives=True)
    values_s = curve_s.evaluate(angles, with_derivatives=True)
    d = values_u.psi - values_s.psi
    fit = fit_window(local, d, delta)
    middle = fit_points // 2
    d_E = float(values_u.d_E[middle] - values_s.d_E[middle])
    d2_theta = float(values_u.d2_theta[middle] - values_s.d2_theta[middle])

    rival = None
    window = Arc(theta_c, half)
    for j in _local_minima(gap):
        if gap[j] <= RIVAL_FACTOR * delta and not window.contains(curve_u.thetas[j]):
            rival = float(curve_u.thetas[j])
            break
    profile = GapProfile(params.E, delta, theta_c, window, fit, d_E, d2_theta,
                         0.5 * params.potential.curvature, params.lambda_sq, rival)
    if rival is not None:
        message = f"Second local minimum of d at theta={rival!r} within {RIVAL_FACTOR}x of delta={delta!r}"
        if strict:
            raise NonUniqueMinimum(message, theta_c=theta_c, rival=rival)
        logger.warning(message)
    logger.debug(f"{profile}")
    return profile
