"""Toy model of the norm growth.

Two functions separated by d + theta^2 on [-a, a] are pushed apart by a
constant factor r > 1 per step until the separation reaches delta. At the
separation time sigma(theta) the derivative of the separation is
2 r^sigma theta, and its maximum over theta lies between delta/sqrt(d) and
r delta/sqrt(d) whenever a >= sqrt(d).
"""
import logging
import math

import numpy as np

from errors import ValidationError

logger = logging.getLogger(__name__)


class ToyGrowth:
    def __init__(self, d: float, r: float, delta: float, a: float, thetas: np.ndarray, sigma: np.ndarray,
                 derivative: np.ndarray):
        self.d = d
        self.r = r
        self.delta = delta
        self.a = a
        self.thetas = thetas
        self.sigma = sigma
        self.derivative = derivative

    @property
    def max_derivative(self) -> float:
        return float(np.max(self.derivative))

    @property
    def lower(self) -> float:
        return self.delta / math.sqrt(self.d)

    @property
    def upper(self) -> float:
        return self.r * self.delta / math.sqrt(self.d)

    @property
    def sandwich_holds(self) -> bool:
        """delta/sqrt(d) <= max <= r delta/sqrt(d); only the upper bound when a < sqrt(d)."""
        upper_ok = self.max_derivative <= self.upper * (1 + 1e-12)
        if self.a < math.sqrt(self.d):
            return upper_ok
        return upper_ok and self.max_derivative >= self.lower * (1 - 1e-12)

    def to_dict(self):
        return {"d": self.d, "r": self.r, "delta": self.delta, "a": self.a, "max_derivative": self.max_derivative,
                "lower": self.lower, "upper": self.upper, "max_sigma": int(self.sigma.max()),
                "sandwich_holds": self.sandwich_holds}


def toy_norm_growth(d: float, r: float, delta: float, a: float, points: int = 2001) -> ToyGrowth:
    """Separation times and derivatives of the toy model on a grid of [0, a] (the model is even).

    The grid always contains sqrt(d) when it lies in [0, a], where the maximum is attained.
    """
    if not (d > 0 and r > 1 and a > 0 and d + a * a <= delta):
        raise ValidationError(f"toy model needs d > 0, r > 1, a > 0 and d + a^2 <= delta; got d={d}, r={r}, "
                              f"delta={delta}, a={a}")
    thetas = np.linspace(0.0, a, points)
    if math.sqrt(d) <= a:
        thetas = np.union1d(thetas, [math.sqrt(d)])
    separation = d + thetas ** 2
    sigma = np.maximum(0, np.ceil(np.log(delta / separation) / math.log(r))).astype(np.int64)
    # the logarithm may land one off at exact powers of r
    sigma = np.where(r ** sigma * separation < delta, sigma + 1, sigma)
    sigma = np.where((sigma > 0) & (r ** (sigma - 1) * separation >= delta), sigma - 1, sigma)
    derivative = 2.0 * r ** sigma * thetas
    growth = ToyGrowth(d, r, delta, a, thetas, sigma, derivative)
    logger.debug(f"toy model: {growth.to_dict()}")
    return growth
