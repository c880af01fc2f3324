"""(r, l, a)-interval systems and the visit-frequency bounds they imply.

A system is a union of arcs Sigma with a minimal return time r (an orbit
leaving Sigma needs at least r steps to come back), a maximal confinement
time l (no orbit stays in Sigma for more than l consecutive steps) and an
optional accumulation time a (steps before the first visit).
"""
import logging
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from errors import MissingSystemConstants, ValidationError
from rotation.arcs import Arc, ArcSet, union_all
from rotation.main import RotationNumber, orbit_angles

logger = logging.getLogger(__name__)

FORWARD = "forward"
BACKWARD = "backward"


class IntervalSystem:
    def __init__(self, arcs: Union[ArcSet, Sequence[Arc]], r: Optional[int] = None, l: Optional[int] = None,
                 a: int = 0, reversed: bool = False):
        self.arcs: ArcSet = arcs if isinstance(arcs, ArcSet) else ArcSet.from_arcs(arcs)
        self.r: Optional[int] = r
        self.l: Optional[int] = l
        self.a: int = a
        self.reversed: bool = reversed

    @property
    def declared(self) -> bool:
        return self.r is not None and self.l is not None

    def time_bound(self, t: int) -> float:
        """l/t + l/(r + l)."""
        self._require_constants()
        if self.l == 0:
            return 0.0
        return self.l / t + self.l / (self.r + self.l)

    def accumulation_bound(self) -> float:
        """l/(m + l) with m = min(a, r)."""
        self._require_constants()
        if self.l == 0:
            return 0.0
        return self.l / (min(self.a, self.r) + self.l)

    def _require_constants(self):
        if not self.declared:
            raise MissingSystemConstants("Interval system has undeclared r or l", r=self.r, l=self.l)

    def __str__(self):
        return f"IntervalSystem({len(self.arcs)} pieces, r={self.r}, l={self.l}, a={self.a}, reversed={self.reversed})"


class VisitFrequency:
    """Empirical frequency of visits next to the two analytic upper bounds."""

    def __init__(self, frequency: float, visits: int, t: int, time_bound: float, accumulation_bound: float):
        self.frequency: float = frequency
        self.visits: int = visits
        self.t: int = t
        self.time_bound: float = time_bound
        self.accumulation_bound: float = accumulation_bound

    @property
    def within_bounds(self) -> bool:
        return self.frequency <= self.time_bound and self.frequency <= self.accumulation_bound

    def to_dict(self):
        return {"frequency": self.frequency, "visits": self.visits, "t": self.t,
                "time_bound": self.time_bound, "accumulation_bound": self.accumulation_bound,
                "within_bounds": self.within_bounds}


def _direction_sign(direction: str) -> int:
    if direction == FORWARD:
        return 1
    if direction == BACKWARD:
        return -1
    raise ValidationError(f"direction must be '{FORWARD}' or '{BACKWARD}', got '{direction}'")


def visit_mask(arcs: ArcSet, theta0: float, t: int, omega: RotationNumber, direction: str = FORWARD) -> np.ndarray:
    """mask[j] tells whether theta0 + j*omega (or - j*omega backwards) lies in arcs, 0 <= j < t."""
    angles = orbit_angles(theta0, t - 1, omega, _direction_sign(direction))
    return arcs.contains(angles)


def empirical_visit_frequency(systems: Iterable[IntervalSystem], theta0: float, t: int, omega: RotationNumber,
                              direction: str = FORWARD) -> VisitFrequency:
    """Counts the orbit points inside the union of the systems.

    Args:
        systems (Iterable[IntervalSystem]): Systems with declared r and l.
        theta0 (float): Start of the orbit.
        t (int): Orbit length (>= 1).
        omega (RotationNumber): The rotation.
        direction (str): 'forward' or 'backward'.

    Returns:
        VisitFrequency: Frequency and the sums of both analytic bounds.
    """
    if t < 1:
        raise ValidationError(f"t must be >= 1, got {t}")
    systems = list(systems)
    time_bound = sum(s.time_bound(t) for s in systems)
    accumulation_bound = sum(s.accumulation_bound() for s in systems)
    union = union_all(s.arcs for s in systems)
    visits = int(np.count_nonzero(visit_mask(union, theta0, t, omega, direction)))
    return VisitFrequency(visits / t, visits, t, time_bound, accumulation_bound)


def run_statistics(mask: np.ndarray) -> Tuple[int, int, int]:
    """(min gap between runs, longest run, index of first visit) of a boolean sequence.

    With fewer than two runs the gap is the sequence length; with no visit
    the first-visit index is the sequence length as well.
    """
    horizon = len(mask)
    padded = np.concatenate(([False], mask.astype(bool), [False]))
    edges = np.diff(padded.astype(np.int8))
    starts = np.nonzero(edges == 1)[0]
    stops = np.nonzero(edges == -1)[0]
    if starts.size == 0:
        return horizon, 0, horizon
    longest = int((stops - starts).max())
    gaps = starts[1:] - stops[:-1]
    min_gap = int(gaps.min()) if gaps.size else horizon
    return min_gap, longest, int(starts[0])


def measure_system_constants(arcs: Union[ArcSet, Sequence[Arc]], theta0: float, omega: RotationNumber, horizon: int,
                             direction: str = FORWARD) -> IntervalSystem:
    """Builds an IntervalSystem whose (r, l, a) are measured along one orbit of the given horizon."""
    system = IntervalSystem(arcs, reversed=direction == BACKWARD)
    mask = visit_mask(system.arcs, theta0, horizon, omega, direction)
    system.r, system.l, system.a = run_statistics(mask)
    logger.debug(f"Measured {system} over {horizon} {direction} steps from theta0={theta0!r}")
    return system
