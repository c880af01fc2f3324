"""Per-energy measurements of the sweep and the asymptotics report built from them."""
import logging
import math
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from asymptotics.edge import EdgeEstimate
from asymptotics.fits import (LinearGapFit, NormExponentFit, SecondDifferenceCheck, epsilon_trace,
                              fit_linear_gap, fit_norm_exponent, second_differences, trends_to_zero)
from asymptotics.gap import gap_profile
from cocycle.main import CocycleParams, iterate_orbit, lyapunov_via_section
from cocycle.products import derivative_difference, theta_derivatives
from curves.main import CurveSettings, InvariantCurve, compute_curves, curve_norms
from errors import LadderExhausted, NotInCollisionWindow, ValidationError
from ladder.main import ScaleLadder
from ladder.stopping import SigmaStatistics, select_critical_interval, sigma_statistics
from rotation.arcs import Arc, ArcSet, orbit_union
from rotation.main import rotation_offsets

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["E", "E0_minus_E", "delta", "theta_c", "quad_coeff", "c1_norm_u", "c1_norm_s", "c2_norm_u",
                 "sigma_plus_max", "sigma_minus_max", "level_k", "eta", "lyapunov", "residual_max"]
EXTRA_COLUMNS = ["quad_residual", "quad_vertex_shift", "quad_coeff_symmetric", "quad_in_spec_band",
                 "quad_in_scaled_band", "d_E_gap", "interval_length_ratio", "dominant_scaled", "remainder_max",
                 "off_window_min_gap"]

DOMINANT_PROBES = 16
OFF_WINDOW_PROBES = 4096
OFF_WINDOW_FACTOR = 10.0
EPSILON_AGREEMENT = 10.0
NORM_EXPONENT_MATCH = 0.05


def energy_schedule(E0: float, g: float, ratio: float = 0.5, points: int = 12) -> np.ndarray:
    """E_j = E0 - g ratio^j, j = 0..points-1, moving toward the edge."""
    if not g > 0:
        raise ValidationError(f"schedule start g must be positive, got {g}")
    if not 0 < ratio < 1:
        raise ValidationError(f"schedule ratio must lie in (0, 1), got {ratio}")
    if points < 3:
        raise ValidationError(f"schedule needs at least 3 points, got {points}")
    return E0 - g * ratio ** np.arange(points)


class DominantTermProfile:
    """Derivative of the gap at the stopping time split into dominant term and remainder, per probe."""

    def __init__(self, delta: float, entries: List[Dict[str, Any]]):
        self.delta = delta
        self.entries = entries

    @property
    def max_dominant(self) -> float:
        return max((abs(e["dominant"]) for e in self.entries), default=0.0)

    @property
    def max_remainder(self) -> float:
        return max((abs(e["remainder"]) for e in self.entries), default=0.0)

    @property
    def scaled(self) -> float:
        """max |dominant| sqrt(delta); bounded above and below as delta shrinks."""
        return self.max_dominant * math.sqrt(self.delta)

    @property
    def within_bounds(self) -> bool:
        return all(e["within_bound"] for e in self.entries)

    def to_dict(self):
        return {"delta": self.delta, "max_dominant": self.max_dominant, "max_remainder": self.max_remainder,
                "scaled": self.scaled, "within_bounds": self.within_bounds, "probes": self.entries}


def dominant_term_profile(curve_u: InvariantCurve, curve_s: InvariantCurve, stats: SigmaStatistics,
                          delta: float, max_probes: int = DOMINANT_PROBES) -> DominantTermProfile:
    """Reconstructs d_theta(r_{k+1} - s_{k+1}) along the invariant curves for k <= sigma^+.

    The orbits start at psi^u(theta) and psi^s(theta) with their theta-derivatives
    as seeds, so r_k - s_k = d(theta + k omega) along the way.
    """
    params = curve_u.params
    times = stats.times
    if len(times) > max_probes:
        times = [times[i] for i in np.linspace(0, len(times) - 1, max_probes).astype(int)]
    entries = []
    for t in times:
        steps = t.sigma_plus + 1
        start = np.array([t.theta])
        u = curve_u.evaluate(start, with_derivatives=True)
        s = curve_s.evaluate(start, with_derivatives=True)
        orbit_r = iterate_orbit(t.theta, float(u.psi[0]), steps, params)
        orbit_s = iterate_orbit(t.theta, float(s.psi[0]), steps, params)
        dr = theta_derivatives(orbit_r, float(u.d_theta[0]))
        ds = theta_derivatives(orbit_s, float(s.d_theta[0]))
        best = None
        for k in range(steps):
            term = derivative_difference(orbit_r, orbit_s, k, dr, ds)
            if best is None or abs(term.dominant) > abs(best.dominant):
                best = term
        entry = best.to_dict()
        entry.update(theta=t.theta, sigma_plus=t.sigma_plus)
        entries.append(entry)
    profile = DominantTermProfile(delta, entries)
    logger.debug(f"dominant term over {len(entries)} probes: max={profile.max_dominant:.6g}, "
                 f"scaled={profile.scaled:.6g}, remainder={profile.max_remainder:.3g}")
    return profile


class OffWindowFloor:
    def __init__(self, probes: int, min_gap: float, floor: float, worst_theta: Optional[float]):
        self.probes = probes
        self.min_gap = min_gap
        self.floor = floor
        self.worst_theta = worst_theta

    @property
    def holds(self) -> bool:
        return self.probes == 0 or self.min_gap >= self.floor

    def to_dict(self):
        return dict(vars(self), holds=self.holds)


def collision_window(interval: Arc, sigma_plus: int, sigma_minus: int, omega) -> ArcSet:
    """U_{-sigma^- <= m <= sigma^+} (I + m omega)."""
    offsets = [float(o) for o in rotation_offsets(omega, sigma_plus)]
    offsets += [float(o) for o in np.mod(-rotation_offsets(omega, sigma_minus)[1:], 1.0)]
    return orbit_union(interval.to_set(), offsets)


def off_window_gap_floor(curve_u: InvariantCurve, curve_s: InvariantCurve, interval: Arc,
                         stats: SigmaStatistics, delta: float, probes: int = OFF_WINDOW_PROBES) -> OffWindowFloor:
    """min d over probe angles outside the collision window, against 10 sqrt(delta)."""
    window = collision_window(interval, stats.sigma_plus, stats.sigma_minus, curve_u.params.omega)
    thetas = (np.arange(probes) + 0.5) / probes
    outside = thetas[~window.contains(thetas)]
    floor = OFF_WINDOW_FACTOR * math.sqrt(delta)
    if outside.size == 0:
        return OffWindowFloor(0, math.inf, floor, None)
    d = curve_u.evaluate(outside) - curve_s.evaluate(outside)
    i = int(np.argmin(d))
    result = OffWindowFloor(int(outside.size), float(d[i]), floor, float(outside[i]))
    if not result.holds:
        logger.warning(f"d = {result.min_gap:.3g} below 10 sqrt(delta) = {floor:.3g} at theta={result.worst_theta!r} "
                       f"outside the collision window")
    return result


def measure_energy(params: CocycleParams, settings: Optional[CurveSettings] = None, E0: Optional[float] = None,
                   ladder: Optional[ScaleLadder] = None, quad_C: float = 10.0, lyapunov_samples: int = 100_000,
                   burn_in: int = 1000) -> Dict[str, Any]:
    """One sweep row at params.E.

    Args:
        params (CocycleParams): The cocycle at the swept energy.
        settings (Optional[CurveSettings]): Curve settings.
        E0 (Optional[float]): The edge, for the E0_minus_E column.
        ladder (Optional[ScaleLadder]): Gives sigma-hat, eta, level_k and the interval I(E).
        quad_C (float): Width of both accepted bands of quad_coeff.
        lyapunov_samples (int): Orbit points of the Lyapunov average.
        burn_in (int): Orbit points skipped before averaging.

    Returns:
        Dict[str, Any]: Values for SWEEP_COLUMNS + EXTRA_COLUMNS.
    """
    settings = settings or CurveSettings.for_params(params)
    curve_u, curve_s = compute_curves(params, settings)
    profile = gap_profile(curve_u, curve_s)
    c1_u, c2_u = curve_norms(curve_u)
    c1_s, _ = curve_norms(curve_s)
    row: Dict[str, Any] = {
        "E": params.E,
        "E0_minus_E": (E0 - params.E) if E0 is not None else math.nan,
        "delta": profile.delta,
        "theta_c": profile.theta_c,
        "quad_coeff": profile.quad_coeff,
        "c1_norm_u": c1_u,
        "c1_norm_s": c1_s,
        "c2_norm_u": c2_u,
        "residual_max": max(curve_u.residual_max, curve_s.residual_max),
        "quad_residual": profile.residual,
        "quad_vertex_shift": profile.fit.vertex_shift,
        "quad_coeff_symmetric": profile.fit.quad_coeff_symmetric,
        "quad_in_spec_band": profile.quad_in_spec_band(quad_C),
        "quad_in_scaled_band": profile.quad_in_scaled_band(quad_C),
        "d_E_gap": profile.d_E,
    }

    try:
        stats = sigma_statistics(curve_u, curve_s, ladder)
    except NotInCollisionWindow as e:
        logger.info(f"E={params.E!r}: {e}; stopping times set to 0")
        stats = None
    row["sigma_plus_max"] = stats.sigma_plus if stats is not None else 0
    row["sigma_minus_max"] = stats.sigma_minus if stats is not None else 0
    row["eta"] = stats.eta if stats is not None else 0.0

    interval = None
    row["level_k"] = -1
    if ladder is not None:
        try:
            k, interval = select_critical_interval(ladder, stats.sigma_max if stats is not None else 0)
            row["level_k"] = k
        except LadderExhausted as e:
            logger.warning(f"E={params.E!r}: {e}")
    row["interval_length_ratio"] = (float(interval.length) / math.sqrt(profile.delta)
                                    if interval is not None else math.nan)

    if stats is not None:
        dominant = dominant_term_profile(curve_u, curve_s, stats, profile.delta)
        row["dominant_scaled"] = dominant.scaled
        row["remainder_max"] = dominant.max_remainder
    else:
        row["dominant_scaled"] = math.nan
        row["remainder_max"] = math.nan
    if stats is not None and interval is not None:
        row["off_window_min_gap"] = off_window_gap_floor(curve_u, curve_s, interval, stats, profile.delta).min_gap
    else:
        row["off_window_min_gap"] = math.nan

    row["lyapunov"] = lyapunov_via_section(curve_u, lyapunov_samples, burn_in=burn_in)
    logger.info(f"Measured E={params.E!r}: delta={profile.delta:.6g}, c1_u={c1_u:.6g}, "
                f"sigma+={row['sigma_plus_max']}, L={row['lyapunov']:.6g}")
    return {column: row[column] for column in SWEEP_COLUMNS + EXTRA_COLUMNS}


class AsymptoticsReport:
    """Fits of the linear and the norm law over a finished sweep, with the finite-difference checks."""

    def __init__(self, linear: LinearGapFit, norm_u: NormExponentFit, norm_s: NormExponentFit,
                 second: SecondDifferenceCheck, epsilon: List, interval_ratios: List, lambda_sq: float,
                 E0: float, bracket: Optional[Sequence[float]] = None, dominant: Optional[List] = None):
        self.linear = linear
        self.norm_u = norm_u
        self.norm_s = norm_s
        self.second = second
        self.epsilon = epsilon
        self.interval_ratios = interval_ratios
        self.lambda_sq = lambda_sq
        self.E0 = E0
        self.bracket = list(bracket) if bracket is not None else None
        self.dominant = dominant or []

    @property
    def norms_match(self) -> bool:
        return abs(self.norm_s.exponent - self.norm_u.exponent) <= NORM_EXPONENT_MATCH

    @property
    def epsilon_trends_to_zero(self) -> bool:
        return trends_to_zero([eps for _, eps, _ in self.epsilon])

    @property
    def epsilon_agrees(self) -> bool:
        """epsilon(E) nearest the edge and the fitted eps_hat within a factor 10 of each other."""
        if not self.epsilon:
            return False
        measured = self.epsilon[-1][1]
        fitted = self.norm_u.eps_hat
        if measured == 0 or fitted == 0:
            return measured == fitted
        return 1.0 / EPSILON_AGREEMENT <= measured / fitted <= EPSILON_AGREEMENT

    @property
    def ratios_non_decreasing(self) -> bool:
        values = [ratio for _, ratio in self.interval_ratios]
        return all(b >= a for a, b in zip(values, values[1:]))

    def to_dict(self):
        linear = self.linear.to_dict()
        linear["in_band"] = self.linear.slope_in_band(self.lambda_sq)
        return {
            "linear": linear,
            "norm_u": self.norm_u.to_dict(),
            "norm_s": self.norm_s.to_dict(),
            "norms_match": self.norms_match,
            "edge": {"E0": self.E0, "bracket": self.bracket},
            "second_differences": self.second.to_dict(),
            "epsilon_trace": [{"E": E, "epsilon": eps, "eta": eta} for E, eps, eta in self.epsilon],
            "epsilon_trends_to_zero": self.epsilon_trends_to_zero,
            "epsilon_agrees": self.epsilon_agrees,
            "interval_length_ratio": [{"E": E, "ratio": ratio} for E, ratio in self.interval_ratios],
            "interval_ratio_non_decreasing": self.ratios_non_decreasing,
            "dominant_scaled": [{"E": E, "scaled": value} for E, value in self.dominant],
        }


def build_report(frame: pd.DataFrame, lambda_sq: float, edge: Optional[EdgeEstimate] = None,
                 E0: Optional[float] = None) -> AsymptoticsReport:
    """Fits a sweep frame (one row per energy, SWEEP_COLUMNS at least).

    Rows with a non-finite delta, or with a status other than `done` when the
    frame has a status column, are left out.

    Raises:
        ValidationError: No edge was given and the frame has no E0_minus_E column values.
        SpanTooNarrow: Fewer than 8 usable rows or too short a span for a fit.
    """
    rows = frame
    if "status" in rows.columns:
        rows = rows[rows["status"] == "done"]
    rows = rows[np.isfinite(rows["delta"].astype(float))].sort_values("E")
    if edge is not None:
        E0 = edge.E0
    if E0 is not None:
        distances = E0 - rows["E"].to_numpy(dtype=float)
    else:
        distances = rows["E0_minus_E"].to_numpy(dtype=float)
        if not np.all(np.isfinite(distances)):
            raise ValidationError("the sweep has no E0_minus_E values and no edge was given")
        E0 = float(rows["E"].iloc[0] + distances[0]) if len(rows) else math.nan

    energies = rows["E"].to_numpy(dtype=float)
    deltas = rows["delta"].to_numpy(dtype=float)
    lam = math.sqrt(lambda_sq)
    linear = fit_linear_gap(distances, deltas)
    norm_u = fit_norm_exponent(deltas, rows["c1_norm_u"].to_numpy(dtype=float))
    norm_s = fit_norm_exponent(deltas, rows["c1_norm_s"].to_numpy(dtype=float))
    second = second_differences(energies, deltas, lambda_sq)
    epsilon = epsilon_trace(energies, deltas, rows["eta"].to_numpy(dtype=float),
                            rows["sigma_plus_max"].to_numpy(dtype=int), lam)
    ratios = []
    if "interval_length_ratio" in rows.columns:
        ratios = [(float(E), float(r)) for E, r in zip(energies, rows["interval_length_ratio"]) if np.isfinite(r)]
    dominant = []
    if "dominant_scaled" in rows.columns:
        dominant = [(float(E), float(v)) for E, v in zip(energies, rows["dominant_scaled"]) if np.isfinite(v)]
    bracket = edge.bracket if edge is not None else None
    report = AsymptoticsReport(linear, norm_u, norm_s, second, epsilon, ratios, lambda_sq, float(E0), bracket,
                               dominant)
    if not linear.slope_in_band(lambda_sq):
        logger.warning(f"Linear slope {linear.slope:.6g} outside 1 +- 4/lambda^2")
    if not second.holds:
        logger.warning(f"Second difference {second.max_abs:.3g} exceeds {second.bound:.3g}")
    logger.info(f"Asymptotics report over {len(rows)} energies: slope={linear.slope:.6g}, "
                f"exponent_u={norm_u.exponent:.4f}, exponent_s={norm_s.exponent:.4f}")
    return report
