"""Location of the lowest spectral edge E0.

E0 is taken as the supremum of the energies where both invariant curves
converge inside the cone with a positive gap. The bisection is
cross-validated by a linear extrapolation of delta(E) to zero.
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import linregress

from asymptotics.gap import gap_profile
from cocycle.main import CocycleParams
from curves.main import CurveSettings, compute_curves, gap_on_grid
from errors import (BracketInvalid, HorizonExceeded, NoConvergence, NonMonotonePredicate,
                    NotUniformlyHyperbolic, PoleHit)

logger = logging.getLogger(__name__)

EXTRAPOLATION_POINTS = 8
EXTRAPOLATION_SPACING = 1e-7
MONOTONE_PROBES = (10.0, 100.0, 1e3, 1e4) # multiples of the final bracket width below lo
_CURVE_FAILURES = (NotUniformlyHyperbolic, NoConvergence, HorizonExceeded, PoleHit)


class EdgeEstimate:
    def __init__(self, E0: float, lo: float, hi: float, method: str, iterations: int,
                 extrapolated: Optional[float] = None, history: Optional[List[Dict]] = None,
                 non_monotone: bool = False):
        self.E0 = E0
        self.lo = lo
        self.hi = hi
        self.method = method
        self.iterations = iterations
        self.extrapolated = extrapolated
        self.history = history or []
        self.non_monotone = non_monotone

    @property
    def bracket(self) -> Tuple[float, float]:
        return self.lo, self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def disagreement(self) -> Optional[float]:
        return None if self.extrapolated is None else abs(self.E0 - self.extrapolated)

    def agrees(self, tol: float, factor: float = 3.0) -> bool:
        """Bisection and extrapolation within factor * max(bracket width, tol)."""
        return self.disagreement is not None and self.disagreement <= factor * max(self.width, tol)

    def to_dict(self):
        return {"E0": self.E0, "bracket": [self.lo, self.hi], "method": self.method, "iterations": self.iterations,
                "extrapolated": self.extrapolated, "disagreement": self.disagreement,
                "non_monotone": self.non_monotone, "history": self.history}

    def __str__(self):
        return f"EdgeEstimate(E0={self.E0!r}, bracket=({self.lo!r}, {self.hi!r}), method={self.method})"


class EdgePredicate:
    """Curves converge with min d > gap_floor at E; every evaluation is kept in `history`."""

    def __init__(self, params: CocycleParams, settings: CurveSettings, gap_floor: float):
        self.params = params
        self.settings = settings
        self.gap_floor = gap_floor
        self.history: List[Dict] = []

    def __call__(self, E: float) -> bool:
        params = self.params.with_energy(E)
        try:
            curve_u, curve_s = compute_curves(params, self.settings)
        except _CURVE_FAILURES as e:
            self.history.append({"E": E, "ok": False, "gap": None, "reason": type(e).__name__})
            logger.debug(f"edge predicate at E={E!r}: {type(e).__name__}")
            return False
        gap = float(np.min(gap_on_grid(curve_u, curve_s)))
        ok = gap > self.gap_floor
        self.history.append({"E": E, "ok": ok, "gap": gap, "reason": None if ok else "gap below floor"})
        logger.debug(f"edge predicate at E={E!r}: ok={ok}, min gap={gap!r}")
        return ok


def _bisect(predicate: EdgePredicate, lo: float, hi: float, tol: float) -> Tuple[float, float, int]:
    iterations = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if predicate(mid):
            lo = mid
        else:
            hi = mid
        iterations += 1
    return lo, hi, iterations


def extrapolate_edge(params: CocycleParams, settings: CurveSettings, below: float,
                     spacing: float = EXTRAPOLATION_SPACING, points: int = EXTRAPOLATION_POINTS) -> float:
    """Zero of the affine fit of delta(E) at E = below - i * spacing, i = 1..points."""
    energies = below - spacing * np.arange(1, points + 1)
    deltas = [gap_profile(*compute_curves(params.with_energy(float(E)), settings)).delta for E in energies]
    fit = linregress(energies, deltas)
    E0 = -fit.intercept / fit.slope
    logger.debug(f"extrapolated edge {E0!r} from slope {fit.slope!r} (r={fit.rvalue!r})")
    return float(E0)


def find_edge(params: CocycleParams, bracket: Tuple[float, float], tol: float = 1e-12,
              settings: Optional[CurveSettings] = None, gap_floor: Optional[float] = None,
              extrapolate: bool = True, strict: bool = False) -> EdgeEstimate:
    """Bisects the energy bracket down to width tol.

    Args:
        params (CocycleParams): The cocycle; its energy is ignored.
        bracket (Tuple[float, float]): (lo, hi) with the predicate true at lo and false at hi.
        tol (float): Final bracket width.
        settings (Optional[CurveSettings]): Curve settings for every predicate evaluation.
        gap_floor (Optional[float]): Smallest resolvable gap; 1e3 machine epsilon by default.
        extrapolate (bool): Cross-validate with the delta(E) extrapolation.
        strict (bool): Raise NonMonotonePredicate instead of recording it.

    Returns:
        EdgeEstimate: E0 is the midpoint of the final bracket.

    Raises:
        BracketInvalid: The predicate does not hold at lo or still holds at hi.
    """
    lo, hi = map(float, bracket)
    if not lo < hi:
        raise BracketInvalid(f"bracket must satisfy lo < hi, got ({lo}, {hi})", lo=lo, hi=hi)
    settings = settings or CurveSettings.for_params(params)
    gap_floor = 1e3 * np.finfo(np.float64).eps if gap_floor is None else gap_floor
    predicate = EdgePredicate(params, settings, gap_floor)
    if not predicate(lo):
        raise BracketInvalid(f"curves do not converge with a positive gap at lo={lo}", lo=lo, hi=hi)
    if predicate(hi):
        raise BracketInvalid(f"curves still converge with a positive gap at hi={hi}", lo=lo, hi=hi)
    logger.info(f"Bisecting the edge in [{lo}, {hi}] to {tol:g}")
    start = lo
    lo, hi, iterations = _bisect(predicate, lo, hi, tol)

    non_monotone = False
    width = hi - lo
    for factor in MONOTONE_PROBES:
        E = lo - factor * width
        if E <= start or predicate(E):
            continue
        non_monotone = True
        message = f"edge predicate fails at E={E!r} below the bisected lo={lo!r}"
        if strict:
            raise NonMonotonePredicate(message, E=E, lo=lo)
        logger.warning(message + "; bracket shrunk to the lower failure")
        good = max((h["E"] for h in predicate.history if h["ok"] and h["E"] < E), default=start)
        lo, hi, more = _bisect(predicate, good, E, tol)
        iterations += more
        break

    E0 = 0.5 * (lo + hi)
    extrapolated = None
    method = "bisection"
    if extrapolate:
        extrapolated = extrapolate_edge(params, settings, lo)
        method = "cross-validated"
    estimate = EdgeEstimate(E0, lo, hi, method, iterations, extrapolated, predicate.history, non_monotone)
    logger.info(f"Edge: {estimate} after {iterations} bisection steps"
                + (f", extrapolation differs by {estimate.disagreement:.3g}" if extrapolate else ""))
    return estimate
