import logging
import math
from typing import Tuple

import numpy as np
from scipy.optimize import bisect

from errors import CouplingTooSmall
from rotation.arcs import Arc

logger = logging.getLogger(__name__)

# I_0 is the sublevel set {v <= C0_LEVEL / lambda}
C0_LEVEL = 10.0


class Bands:
    """B = [lambda^-2, lambda^2] with its sub-bands B^u = [lambda, lambda^2]
    and B^s = [lambda^-2, lambda^-1]."""

    def __init__(self, lam: float):
        self.lam: float = lam
        self.lower: float = lam ** -2
        self.upper: float = lam ** 2
        self.u: Tuple[float, float] = (lam, lam ** 2)
        self.s: Tuple[float, float] = (lam ** -2, lam ** -1)

    def in_B(self, r):
        r = np.asarray(r)
        return (r >= self.lower) & (r <= self.upper)

    def in_Bu(self, r):
        r = np.asarray(r)
        return (r >= self.u[0]) & (r <= self.u[1])

    def in_Bs(self, r):
        r = np.asarray(r)
        return (r >= self.s[0]) & (r <= self.s[1])

    def above_Bu_floor(self, r):
        """r >= lambda: the inner endpoint of B^u, ignoring the outer one."""
        return np.asarray(r) >= self.u[0]

    def below_Bs_ceiling(self, r):
        return np.asarray(r) <= self.s[1]

    def violations(self, r, band: str = "u"):
        """Counts (below, above) of samples outside the requested band."""
        lo, hi = {"B": (self.lower, self.upper), "u": self.u, "s": self.s}[band]
        r = np.asarray(r)
        return int(np.count_nonzero(r < lo)), int(np.count_nonzero(r > hi))

    def midpoints(self) -> Tuple[float, float]:
        """(mid B^u, mid B^s) used by the `band` seed policy."""
        return 0.5 * (self.u[0] + self.u[1]), 0.5 * (self.s[0] + self.s[1])

    def to_dict(self):
        return {"B": [self.lower, self.upper], "B_u": list(self.u), "B_s": list(self.s)}


def compute_c0(potential, lam: float) -> float:
    """c0 with {v <= 10/lambda} inside the arc |theta| <= c0 / (2 sqrt(lambda)).

    Solves v(theta) = 10/lambda by bisection on both sides of the
    minimum of the working potential.

    Args:
        potential (PotentialSpec): A normalized potential.
        lam (float): The coupling lambda (not its square).

    Returns:
        float: c0 = 2 sqrt(lambda) max(theta_plus, |theta_minus|).
    """
    level = C0_LEVEL / lam
    grid = np.linspace(0.0, 0.5, 2049)
    right = potential.v(grid)
    left = potential.v(-grid)
    crossings = []
    for side, values in ((1.0, right), (-1.0, left)):
        above = np.nonzero(values > level)[0]
        if above.size == 0:
            raise CouplingTooSmall(
                f"v never exceeds 10/lambda = {level:.6g}; I_0 would cover the circle "
                f"(need lambda > {C0_LEVEL / float(values.max()):.6g})", lam=lam, level=level)
        hi = grid[above[0]]
        crossings.append(bisect(lambda t: float(potential.v(side * t)) - level, 0.0, hi, xtol=1e-15))
    theta_plus, theta_minus = crossings
    c0 = 2.0 * math.sqrt(lam) * max(theta_plus, theta_minus)
    logger.debug(f"c0={c0!r} from theta_+={theta_plus!r}, theta_-={-theta_minus!r} at level {level!r}")
    return c0


def initial_interval(c0: float, lam: float) -> Arc:
    """I_0 = {|theta| <= c0 / (2 sqrt(lambda))}."""
    return Arc(0.0, c0 / (2.0 * math.sqrt(lam)))
