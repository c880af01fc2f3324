import logging
import math
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd

from cocycle.main import CocycleParams
from config.run_config import RunConfig
from curves import grid
from curves.recursions import STABLE, UNSTABLE, Pullback, pullback, pullback_mp
from errors import NoConvergence, NotUniformlyHyperbolic, ValidationError

logger = logging.getLogger(__name__)

DERIVATIVE_FIELDS = ("d_theta", "d2_theta", "d_E", "d2_E")
CURVE_COLUMNS = ["theta", "psi_u", "psi_s", "d_theta_u", "d_theta_s", "d2_theta_u", "d2_theta_s",
                 "d_E_u", "d_E_s", "residual_u", "residual_s"]


class CurveSettings:
    """Numerical knobs of curve evaluation. Defaults follow RunConfig."""

    def __init__(self, T0: int = 64, T_max: int = 1_000_000, tol_psi: float = 3e-8, tol_deriv: float = 1e-8,
                 seed_policy: str = "cone", confinement: str = "cone", base_points: int = 4096,
                 refine_depth: int = 6, window_points: int = 257, precision: str = "f64",
                 dd_threshold: float = 1e-11):
        if T0 < 1 or T_max < T0:
            raise ValidationError(f"need 1 <= T0 <= T_max, got T0={T0}, T_max={T_max}")
        self.T0 = T0
        self.T_max = T_max
        self.tol_psi = tol_psi
        self.tol_deriv = tol_deriv
        self.seed_policy = seed_policy
        self.confinement = confinement
        self.base_points = base_points
        self.refine_depth = refine_depth
        self.window_points = window_points
        self.precision = precision
        self.dd_threshold = dd_threshold

    @classmethod
    def from_run_config(cls, config: RunConfig) -> "CurveSettings":
        return cls(T0=config.horizon.T0, T_max=config.horizon.T_max, tol_psi=config.resolved_tol_psi(),
                   tol_deriv=config.tolerances.tol_deriv, seed_policy=config.horizon.seed_policy,
                   confinement=config.horizon.confinement, base_points=config.grid.base_points,
                   refine_depth=config.grid.refine_depth, window_points=config.grid.window_points,
                   precision=config.run.precision, dd_threshold=config.tolerances.dd_threshold)

    @classmethod
    def for_params(cls, params: CocycleParams, **overrides) -> "CurveSettings":
        """Defaults with tol_psi = 1e-9 lambda^2."""
        overrides.setdefault("tol_psi", 1e-9 * params.lambda_sq)
        return cls(**overrides)

    def to_dict(self):
        return dict(vars(self))


class CurvePoint:
    """One sample of an invariant section with its derivatives in theta and E."""

    def __init__(self, direction: str, theta: float, psi: float, d_theta: float, d2_theta: float, d_E: float,
                 d2_E: float, horizon: int, residual: float):
        self.direction = direction
        self.theta = theta
        self.psi = psi
        self.d_theta = d_theta
        self.d2_theta = d2_theta
        self.d_E = d_E
        self.d2_E = d2_E
        self.horizon = horizon
        self.residual = residual

    def to_dict(self):
        return dict(vars(self))

    def __str__(self):
        return f"CurvePoint({self.direction}, theta={self.theta!r}, psi={self.psi!r}, T={self.horizon})"


def _raise_on_failure(result: Pullback, thetas: np.ndarray, direction: str, energy=None):
    failure = result.first_failure()
    if failure is None:
        return
    index, step = failure
    theta = float(np.ravel(thetas)[index])
    raise NotUniformlyHyperbolic(
        f"{direction} pullback left the invariant cone at theta={theta!r} after {step + 1} of "
        f"{result.horizon} steps", theta=theta, step=step,
        energy=None if energy is None else float(np.ravel(np.broadcast_to(energy, np.shape(thetas)))[index]))


def _agree(previous: Pullback, current: Pullback, tol_psi: float, tol_deriv: float) -> np.ndarray:
    ok = np.abs(current.psi - previous.psi) <= tol_psi
    if current.has_derivatives:
        for field in DERIVATIVE_FIELDS:
            now, before = getattr(current, field), getattr(previous, field)
            ok &= np.abs(now - before) <= tol_deriv * np.maximum(1.0, np.abs(now))
    return ok


def _subset(result: Pullback, mask: np.ndarray) -> Pullback:
    derivatives = {f: getattr(result, f)[mask] for f in DERIVATIVE_FIELDS} if result.has_derivatives else {}
    return Pullback(result.psi[mask], result.horizon, result.failed[mask], result.fail_step[mask], **derivatives)


def evaluate_points(thetas, params: CocycleParams, direction: str, settings: CurveSettings, energy=None,
                    with_derivatives: bool = True) -> Tuple[Pullback, np.ndarray]:
    """Auto-horizon evaluation of one invariant section at many angles.

    Each point's horizon doubles from T0 until the values at T and 2T agree
    within tol_psi (and tol_deriv relative, for the derivatives).

    Returns:
        Tuple[Pullback, np.ndarray]: Converged values and the horizon used per point.

    Raises:
        NotUniformlyHyperbolic: A pullback orbit left the confinement region.
        NoConvergence: A point did not converge within T_max.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=np.float64))
    energies = None if energy is None else np.broadcast_to(np.asarray(energy, dtype=np.float64), thetas.shape)
    options = dict(seed_policy=settings.seed_policy, confinement=settings.confinement,
                   with_derivatives=with_derivatives)
    T = settings.T0
    previous = pullback(thetas, T, params, direction, energies, **options)
    _raise_on_failure(previous, thetas, direction, energies)
    result = _subset(previous, np.ones(thetas.shape, dtype=bool))
    horizons = np.full(thetas.shape, T, dtype=np.int64)
    pending = np.arange(thetas.size)
    while pending.size:
        T *= 2
        if T > settings.T_max:
            raise NoConvergence(f"{direction} curve did not converge within T_max={settings.T_max} at "
                                f"{pending.size} points", theta=float(thetas[pending[0]]), T_max=settings.T_max)
        sub_energy = None if energies is None else energies[pending]
        current = pullback(thetas[pending], T, params, direction, sub_energy, **options)
        _raise_on_failure(current, thetas[pending], direction, sub_energy)
        done = _agree(previous, current, settings.tol_psi, settings.tol_deriv)
        finished = pending[done]
        result.psi[finished] = current.psi[done]
        if with_derivatives:
            for field in DERIVATIVE_FIELDS:
                getattr(result, field)[finished] = getattr(current, field)[done]
        horizons[finished] = T
        pending = pending[~done]
        previous = _subset(current, ~done)
        if pending.size:
            logger.debug(f"{direction}: {pending.size} points still unconverged at T={T}")
    result.horizon = int(horizons.max())
    return result, horizons


def _residuals(thetas: np.ndarray, psi: np.ndarray, params: CocycleParams, direction: str, horizon: int,
               settings: CurveSettings) -> np.ndarray:
    """|psi(theta + omega) - Phi_E(theta, psi(theta))| with psi(theta + omega) pulled back afresh."""
    ahead = np.mod(thetas + params.omega.omega, 1.0)
    following = pullback(ahead, horizon, params, direction, seed_policy=settings.seed_policy,
                         confinement=settings.confinement, with_derivatives=False)
    _raise_on_failure(following, ahead, direction)
    with np.errstate(divide="ignore"):
        return np.abs(following.psi - (params.a(thetas) - 1.0 / psi))


class InvariantCurve:
    """psi^u or psi^s sampled on an adaptive grid of the circle (sorted thetas)."""

    def __init__(self, direction: str, params: CocycleParams, thetas: np.ndarray, values: Pullback,
                 horizons: np.ndarray, residuals: np.ndarray, settings: CurveSettings):
        self.direction = direction
        self.params = params
        self.thetas = thetas
        self.psi = values.psi
        self.d_theta = values.d_theta
        self.d2_theta = values.d2_theta
        self.d_E = values.d_E
        self.d2_E = values.d2_E
        self.horizons = horizons
        self.residuals = residuals
        self.settings = settings

    def __len__(self):
        return len(self.thetas)

    @property
    def horizon(self) -> int:
        return int(self.horizons.max())

    @property
    def residual_max(self) -> float:
        return float(np.max(self.residuals))

    @property
    def converged(self) -> bool:
        return self.residual_max < self.settings.tol_psi

    @property
    def global_c1_norm(self) -> float:
        return float(np.max(np.abs(self.d_theta)))

    @property
    def global_c2_norm(self) -> float:
        return float(np.max(np.abs(self.d2_theta)))

    @property
    def argmax_c1(self) -> float:
        return float(self.thetas[int(np.argmax(np.abs(self.d_theta)))])

    def point(self, i: int) -> CurvePoint:
        return CurvePoint(self.direction, float(self.thetas[i]), float(self.psi[i]), float(self.d_theta[i]),
                          float(self.d2_theta[i]), float(self.d_E[i]), float(self.d2_E[i]), int(self.horizons[i]),
                          float(self.residuals[i]))

    @property
    def points(self):
        return [self.point(i) for i in range(len(self))]

    def evaluate(self, thetas, with_derivatives: bool = False) -> Union[np.ndarray, Pullback]:
        """psi at arbitrary angles, pulled back with the curve's largest horizon."""
        thetas = np.asarray(thetas, dtype=np.float64)
        result = pullback(thetas, self.horizon, self.params, self.direction, seed_policy=self.settings.seed_policy,
                          confinement=self.settings.confinement, with_derivatives=with_derivatives)
        _raise_on_failure(result, thetas, self.direction)
        return result if with_derivatives else result.psi

    def __str__(self):
        return (f"InvariantCurve({self.direction}, E={self.params.E!r}, points={len(self)}, T={self.horizon}, "
                f"residual={self.residual_max:.3g})")


def _point(theta: float, params: CocycleParams, direction: str, horizon: Union[int, str],
           settings: Optional[CurveSettings]) -> CurvePoint:
    settings = settings or CurveSettings.for_params(params)
    thetas = np.array([float(theta) % 1.0])
    if horizon == "auto":
        values, horizons = evaluate_points(thetas, params, direction, settings)
        T = int(horizons[0])
    else:
        T = int(horizon)
        values = pullback(thetas, T, params, direction, seed_policy=settings.seed_policy,
                          confinement=settings.confinement)
        _raise_on_failure(values, thetas, direction)
    residual = _residuals(thetas, values.psi, params, direction, T, settings)
    return CurvePoint(direction, float(thetas[0]), float(values.psi[0]), float(values.d_theta[0]),
                      float(values.d2_theta[0]), float(values.d_E[0]), float(values.d2_E[0]), T, float(residual[0]))


def evaluate_unstable(theta: float, params: CocycleParams, horizon: Union[int, str] = "auto",
                      settings: Optional[CurveSettings] = None) -> CurvePoint:
    """psi^u(theta) by forward pullback from theta - T omega, with its derivatives."""
    return _point(theta, params, UNSTABLE, horizon, settings)


def evaluate_stable(theta: float, params: CocycleParams, horizon: Union[int, str] = "auto",
                    settings: Optional[CurveSettings] = None) -> CurvePoint:
    """psi^s(theta) by backward pullback from theta + T omega, with its derivatives."""
    return _point(theta, params, STABLE, horizon, settings)


class _Samples:
    """Grid under construction: both directions evaluated at the same angles."""

    def __init__(self, params: CocycleParams, settings: CurveSettings):
        self.params = params
        self.settings = settings
        self.thetas = np.empty(0)
        self.values = {UNSTABLE: None, STABLE: None}
        self.horizons = {UNSTABLE: np.empty(0, dtype=np.int64), STABLE: np.empty(0, dtype=np.int64)}

    def add(self, extra: np.ndarray) -> int:
        extra = grid.new_angles(self.thetas, extra)
        if extra.size == 0:
            return 0
        thetas = np.concatenate([self.thetas, extra])
        order = np.argsort(thetas, kind="stable")
        for direction in (UNSTABLE, STABLE):
            values, horizons = evaluate_points(extra, self.params, direction, self.settings)
            old = self.values[direction]
            if old is None:
                self.values[direction] = _subset(values, order)
            else:
                fields = {f: np.concatenate([getattr(old, f), getattr(values, f)])[order] for f in DERIVATIVE_FIELDS}
                psi = np.concatenate([old.psi, values.psi])[order]
                self.values[direction] = Pullback(psi, max(old.horizon, values.horizon),
                                                  np.zeros(psi.size, dtype=bool), np.full(psi.size, -1), **fields)
            self.horizons[direction] = np.concatenate([self.horizons[direction], horizons])[order]
        self.thetas = thetas[order]
        return int(extra.size)

    @property
    def gap(self) -> np.ndarray:
        return self.values[UNSTABLE].psi - self.values[STABLE].psi

    @property
    def slope(self) -> np.ndarray:
        return np.maximum(np.abs(self.values[UNSTABLE].d_theta), np.abs(self.values[STABLE].d_theta))

    def quad_estimate(self, i: int) -> float:
        """Half of d2_theta (psi^u - psi^s) at node i, or the potential's scale when not positive."""
        c = 0.5 * float(self.values[UNSTABLE].d2_theta[i] - self.values[STABLE].d2_theta[i])
        if c > 0 and math.isfinite(c):
            return c
        return 0.5 * self.params.lambda_sq * max(self.params.potential.curvature, 1.0)


def compute_curves(params: CocycleParams, settings: Optional[CurveSettings] = None) -> Tuple[InvariantCurve, InvariantCurve]:
    """psi^u and psi^s on a shared adaptive grid.

    Args:
        params (CocycleParams): The cocycle at the energy of interest.
        settings (Optional[CurveSettings]): Horizons, tolerances and grid sizes.

    Returns:
        Tuple[InvariantCurve, InvariantCurve]: (unstable, stable).
    """
    settings = settings or CurveSettings.for_params(params)
    samples = _Samples(params, settings)
    samples.add(grid.base_grid(settings.base_points))
    for depth in range(settings.refine_depth):
        added = samples.add(grid.refinement_midpoints(samples.thetas, samples.gap, samples.slope))
        logger.debug(f"refinement round {depth + 1}: {added} new points")
        if not added:
            break
    gap = samples.gap
    i = int(np.argmin(gap))
    delta = float(gap[i])
    if delta > 0:
        windows = grid.critical_windows(float(samples.thetas[i]), delta, samples.quad_estimate(i), params.omega,
                                        params.lam, settings.window_points)
        samples.add(windows)
    else:
        logger.warning(f"psi^u - psi^s = {delta!r} <= 0 at theta={samples.thetas[i]!r}; curves are not ordered")

    curves = []
    for direction in (UNSTABLE, STABLE):
        values = samples.values[direction]
        horizons = samples.horizons[direction]
        residuals = _residuals(samples.thetas, values.psi, params, direction, int(horizons.max()), settings)
        curves.append(InvariantCurve(direction, params, samples.thetas, values, horizons, residuals, settings))
    curve_u, curve_s = curves
    logger.info(f"Computed curves at E={params.E!r}: {len(curve_u)} points, T_u={curve_u.horizon}, "
                f"T_s={curve_s.horizon}, min gap={float(np.min(samples.gap)):.6g}")
    return curve_u, curve_s


def curve_norms(curve: InvariantCurve) -> Tuple[float, float]:
    """(max |d_theta psi|, max |d2_theta psi|) over the adaptive grid."""
    return curve.global_c1_norm, curve.global_c2_norm


def gap_on_grid(curve_u: InvariantCurve, curve_s: InvariantCurve) -> np.ndarray:
    if curve_u.thetas is not curve_s.thetas and not np.array_equal(curve_u.thetas, curve_s.thetas):
        raise ValidationError("curves are sampled on different grids")
    return curve_u.psi - curve_s.psi


def is_ordered(curve_u: InvariantCurve, curve_s: InvariantCurve) -> bool:
    """psi^s < psi^u at every grid angle."""
    return bool(np.all(gap_on_grid(curve_u, curve_s) > 0))


def gap_at(theta: float, curve_u: InvariantCurve, curve_s: InvariantCurve) -> float:
    """psi^u - psi^s at one angle; in `dd` precision the difference is formed in extended arithmetic
    once it drops below dd_threshold."""
    theta = float(theta) % 1.0
    d = float(curve_u.evaluate(np.array([theta]))[0] - curve_s.evaluate(np.array([theta]))[0])
    settings = curve_u.settings
    if settings.precision == "dd" and d < settings.dd_threshold:
        params = curve_u.params
        u = pullback_mp(theta, curve_u.horizon, params, UNSTABLE)
        s = pullback_mp(theta, curve_s.horizon, params, STABLE)
        d = float(u - s)
    return d


def curve_frame(curve_u: InvariantCurve, curve_s: InvariantCurve) -> pd.DataFrame:
    """The curve dump: one row per grid angle, columns CURVE_COLUMNS."""
    gap_on_grid(curve_u, curve_s)
    frame = pd.DataFrame({
        "theta": curve_u.thetas,
        "psi_u": curve_u.psi, "psi_s": curve_s.psi,
        "d_theta_u": curve_u.d_theta, "d_theta_s": curve_s.d_theta,
        "d2_theta_u": curve_u.d2_theta, "d2_theta_s": curve_s.d2_theta,
        "d_E_u": curve_u.d_E, "d_E_s": curve_s.d_E,
        "residual_u": curve_u.residuals, "residual_s": curve_s.residuals,
    })
    return frame[CURVE_COLUMNS]
