"""Adaptive theta grid for the invariant curves.

A uniform base grid is refined by bisecting the cells where the two curves
come close or the slope is near its maximum, then densified on windows
around theta_c + m omega, the orbit of the near-collision.
"""
import logging
import math
from typing import Tuple

import numpy as np

from rotation.main import RotationNumber

logger = logging.getLogger(__name__)

GAP_FACTOR = 4.0 # refine where d < GAP_FACTOR * min d
SLOPE_FRACTION = 0.5 # or where |d_theta psi| >= SLOPE_FRACTION * max
WINDOW_WIDTH = 8.0 # half-width in units of sqrt(delta / c)
MAX_WINDOW_HALF_WIDTH = 0.05


def base_grid(points: int) -> np.ndarray:
    return np.arange(points, dtype=np.float64) / points


def refinement_midpoints(thetas: np.ndarray, gap: np.ndarray, slope: np.ndarray) -> np.ndarray:
    """Midpoints of the cells [theta_i, theta_{i+1}] (cyclically) that need bisection.

    Args:
        thetas (np.ndarray): Sorted grid in [0, 1).
        gap (np.ndarray): psi^u - psi^s on the grid.
        slope (np.ndarray): max(|d_theta psi^u|, |d_theta psi^s|) on the grid.

    Returns:
        np.ndarray: New angles, possibly empty.
    """
    d_min = float(np.min(gap))
    slope_max = float(np.max(np.abs(slope)))
    flagged = np.zeros(thetas.shape, dtype=bool)
    # flat data (constant potentials) needs no refinement
    if slope_max > 0:
        flagged |= np.abs(slope) >= SLOPE_FRACTION * slope_max
    if d_min <= 0:
        flagged |= gap <= 0
    elif GAP_FACTOR * d_min < float(np.max(gap)):
        flagged |= gap < GAP_FACTOR * d_min
    # a flagged node bisects both neighbouring cells
    cells = flagged | np.roll(flagged, -1)
    right = np.append(thetas[1:], thetas[0] + 1.0)
    mids = 0.5 * (thetas + right)[cells]
    return np.mod(mids, 1.0)


def critical_window_range(delta: float, lam: float) -> Tuple[int, int]:
    """m range of the windows theta_c + m omega: the stopping-time bound 3 + 2 log_lambda(1/delta), plus 2."""
    if delta <= 0 or not math.isfinite(delta):
        return -2, 2
    sigma = max(0, math.ceil(3 + 2 * math.log(1.0 / delta) / math.log(lam))) if delta < lam ** -3 else 0
    return -sigma - 2, sigma + 2


def critical_windows(theta_c: float, delta: float, quad_coeff: float, omega: RotationNumber, lam: float,
                     points: int) -> np.ndarray:
    """Uniform samples of half-width 8 sqrt(delta/c) around theta_c + m omega."""
    if delta <= 0 or quad_coeff <= 0:
        return np.empty(0)
    half = min(WINDOW_WIDTH * math.sqrt(delta / quad_coeff), MAX_WINDOW_HALF_WIDTH)
    m_lo, m_hi = critical_window_range(delta, lam)
    local = np.linspace(-half, half, points)
    centers = np.array([omega.shift(theta_c, m) for m in range(m_lo, m_hi + 1)])
    logger.debug(f"{len(centers)} critical windows of half-width {half:.3g} around theta_c={theta_c!r}")
    return np.mod((centers[:, None] + local[None, :]).ravel(), 1.0)


def new_angles(thetas: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Candidates not already on the grid, sorted and without duplicates."""
    candidates = np.mod(np.asarray(candidates, dtype=np.float64), 1.0)
    candidates[candidates >= 1.0] = 0.0
    return np.setdiff1d(np.unique(candidates), thetas)
