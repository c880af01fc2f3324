"""Fits of the two asymptotic laws and the finite-difference checks on delta(E).

delta(E) is fitted linearly in E0 - E (through the origin, and affinely),
the C^1 norms of the curves as a power of delta on log-log scales.
"""
import logging
import math
from typing import List, Sequence, Tuple

import numpy as np
from scipy.stats import linregress

from errors import SpanTooNarrow, ValidationError

logger = logging.getLogger(__name__)

MIN_SAMPLES = 8
MIN_DECADES = 1.5
SECOND_DIFFERENCE_CONSTANT = 32.0


def _check_span(x: np.ndarray, what: str) -> None:
    if x.size < MIN_SAMPLES:
        raise SpanTooNarrow(f"need at least {MIN_SAMPLES} samples of {what}, got {x.size}", samples=int(x.size))
    if np.any(x <= 0):
        raise ValidationError(f"{what} must be positive for the fit")
    decades = math.log10(float(x.max()) / float(x.min()))
    if decades < MIN_DECADES:
        raise SpanTooNarrow(f"{what} spans {decades:.2f} decades, need {MIN_DECADES}", decades=decades)


class LinearGapFit:
    """delta = slope (E0 - E) through the origin, plus the affine variant."""

    def __init__(self, slope: float, stderr: float, r2: float, slope_affine: float, intercept_affine: float,
                 stderr_affine: float, r2_affine: float, samples: int):
        self.slope = slope
        self.stderr = stderr
        self.r2 = r2
        self.slope_affine = slope_affine
        self.intercept_affine = intercept_affine
        self.stderr_affine = stderr_affine
        self.r2_affine = r2_affine
        self.samples = samples

    def slope_in_band(self, lambda_sq: float) -> bool:
        """1 - 4/lambda^2 <= slope <= 1 + 4/lambda^2."""
        return abs(self.slope - 1.0) <= 4.0 / lambda_sq

    def to_dict(self):
        return dict(vars(self))


def fit_linear_gap(distances: Sequence[float], deltas: Sequence[float]) -> LinearGapFit:
    """Least squares of delta against x = E0 - E.

    Args:
        distances (Sequence[float]): E0 - E for each sample (positive).
        deltas (Sequence[float]): delta(E) for each sample.

    Raises:
        SpanTooNarrow: Fewer than 8 samples or less than 1.5 decades of E0 - E.
    """
    x = np.asarray(distances, dtype=np.float64)
    y = np.asarray(deltas, dtype=np.float64)
    _check_span(x, "E0 - E")
    slope = float(np.dot(x, y) / np.dot(x, x))
    residuals = y - slope * x
    stderr = math.sqrt(float(np.dot(residuals, residuals)) / (x.size - 1) / float(np.dot(x, x)))
    total = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.dot(residuals, residuals)) / total if total > 0 else 1.0
    affine = linregress(x, y)
    fit = LinearGapFit(slope, stderr, r2, float(affine.slope), float(affine.intercept), float(affine.stderr),
                       float(affine.rvalue ** 2), int(x.size))
    logger.info(f"Linear gap fit: slope={slope:.6g} +- {stderr:.2g}, r2={r2:.6f}, "
                f"affine intercept={fit.intercept_affine:.3g}")
    return fit


class NormExponentFit:
    """log ||psi||_{C^1} = exponent log delta + intercept."""

    def __init__(self, exponent: float, stderr: float, intercept: float, r2: float, samples: int):
        self.exponent = exponent
        self.stderr = stderr
        self.intercept = intercept
        self.r2 = r2
        self.samples = samples

    @property
    def eps_hat(self) -> float:
        """2 (exponent + 1/2), zero once the exponent reaches -1/2."""
        return max(0.0, 2.0 * (self.exponent + 0.5))

    def to_dict(self):
        return dict(vars(self), eps_hat=self.eps_hat)


def fit_norm_exponent(deltas: Sequence[float], norms: Sequence[float]) -> NormExponentFit:
    """Power law of the C^1 norm in delta.

    Raises:
        SpanTooNarrow: Fewer than 8 samples or less than 1.5 decades of delta.
    """
    x = np.asarray(deltas, dtype=np.float64)
    y = np.asarray(norms, dtype=np.float64)
    _check_span(x, "delta")
    if np.any(y <= 0):
        raise ValidationError("norms must be positive for the log-log fit")
    fit = linregress(np.log(x), np.log(y))
    result = NormExponentFit(float(fit.slope), float(fit.stderr), float(fit.intercept), float(fit.rvalue ** 2),
                             int(x.size))
    logger.info(f"Norm exponent fit: {result.exponent:.4f} +- {result.stderr:.2g} (eps_hat={result.eps_hat:.3g})")
    return result


class SecondDifferenceCheck:
    def __init__(self, energies: np.ndarray, values: np.ndarray, bound: float):
        self.energies = energies
        self.values = values
        self.bound = bound

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @property
    def holds(self) -> bool:
        return self.max_abs <= self.bound

    def to_dict(self):
        return {"energies": self.energies.tolist(), "values": self.values.tolist(), "bound": self.bound,
                "max_abs": self.max_abs, "holds": self.holds}


def second_differences(energies: Sequence[float], deltas: Sequence[float], lambda_sq: float) -> SecondDifferenceCheck:
    """Three-point second differences of delta(E) on a non-uniform grid, against 32/lambda^2."""
    E = np.asarray(energies, dtype=np.float64)
    d = np.asarray(deltas, dtype=np.float64)
    order = np.argsort(E)
    E, d = E[order], d[order]
    h0 = E[1:-1] - E[:-2]
    h1 = E[2:] - E[1:-1]
    values = 2.0 * (d[:-2] / (h0 * (h0 + h1)) - d[1:-1] / (h0 * h1) + d[2:] / (h1 * (h0 + h1)))
    return SecondDifferenceCheck(E[1:-1], values, SECOND_DIFFERENCE_CONSTANT / lambda_sq)


def epsilon_of_energy(eta: float, sigma_plus: int, delta: float, lam: float) -> float:
    """epsilon(E) = 2 lambda^4 eta sigma^+ / log_lambda(1/delta)."""
    if eta == 0 or sigma_plus == 0:
        return 0.0
    return 2.0 * lam ** 4 * eta * sigma_plus / (math.log(1.0 / delta) / math.log(lam))


def epsilon_trace(energies: Sequence[float], deltas: Sequence[float], etas: Sequence[float],
                  sigma_plus: Sequence[int], lam: float) -> List[Tuple[float, float, float]]:
    """(E, epsilon(E), eta(E)) for each swept energy, in the given order."""
    return [(float(E), epsilon_of_energy(float(eta), int(s), float(delta), lam), float(eta))
            for E, delta, eta, s in zip(energies, deltas, etas, sigma_plus)]


def trends_to_zero(values: Sequence[float]) -> bool:
    """Non-increasing along the sequence (ordered toward the edge)."""
    values = list(values)
    return all(b <= a for a, b in zip(values, values[1:]))
