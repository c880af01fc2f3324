"""Arcs of the circle R/Z and finite unions of them.

Endpoints are kept as Fractions of the binary64 inputs, so the set algebra
below is exact and does not depend on the order in which unions are formed.
"""
import logging
from fractions import Fraction
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

Number = Union[int, float, Fraction]
_ZERO = Fraction(0)
_ONE = Fraction(1)


def _frac(value: Number) -> Fraction:
    return value if isinstance(value, Fraction) else Fraction(value)


class Arc:
    """Closed arc {theta : dist(theta, center) <= half_length}."""

    def __init__(self, center: Number, half_length: Number):
        half_length = _frac(half_length)
        if half_length < 0:
            raise ValueError(f"half_length must be non-negative, got {half_length}")
        self.center: Fraction = _frac(center) % 1
        self.half_length: Fraction = half_length

    @property
    def length(self) -> Fraction:
        return min(2 * self.half_length, _ONE)

    def shifted(self, offset: Number) -> "Arc":
        return Arc(self.center + _frac(offset), self.half_length)

    def to_set(self) -> "ArcSet":
        return ArcSet.from_arcs([self])

    def contains(self, theta):
        return self.to_set().contains(theta)

    def __eq__(self, other):
        return isinstance(other, Arc) and (self.center, self.half_length) == (other.center, other.half_length)

    def __hash__(self):
        return hash((self.center, self.half_length))

    def __repr__(self):
        return f"Arc(center={float(self.center)!r}, half_length={float(self.half_length)!r})"


class ArcSet:
    """Finite union of closed arcs, stored as sorted disjoint pieces [a, b] of [0, 1].

    An arc crossing 0 is stored as two pieces. Zero-length pieces are dropped,
    so two sets are equal when they differ by finitely many points.
    """

    def __init__(self, pieces: Iterable[Tuple[Number, Number]] = ()):
        self.pieces: Tuple[Tuple[Fraction, Fraction], ...] = _normalize(
            (_frac(a), _frac(b)) for a, b in pieces)

    @classmethod
    def empty(cls) -> "ArcSet":
        return cls()

    @classmethod
    def full(cls) -> "ArcSet":
        return cls([(_ZERO, _ONE)])

    @classmethod
    def from_arcs(cls, arcs: Iterable[Arc]) -> "ArcSet":
        pieces: List[Tuple[Fraction, Fraction]] = []
        for arc in arcs:
            pieces.extend(_arc_pieces(arc.center - arc.half_length, 2 * arc.half_length))
        return cls(pieces)

    @property
    def is_empty(self) -> bool:
        return not self.pieces

    @property
    def is_full(self) -> bool:
        return self.pieces == ((_ZERO, _ONE),)

    def measure(self) -> Fraction:
        return sum((b - a for a, b in self.pieces), _ZERO)

    def union(self, other: "ArcSet") -> "ArcSet":
        return ArcSet(self.pieces + other.pieces)

    def complement(self) -> "ArcSet":
        gaps = []
        cursor = _ZERO
        for a, b in self.pieces:
            if a > cursor:
                gaps.append((cursor, a))
            cursor = max(cursor, b)
        if cursor < _ONE:
            gaps.append((cursor, _ONE))
        return ArcSet(gaps)

    def intersection(self, other: "ArcSet") -> "ArcSet":
        result = []
        i = j = 0
        mine, theirs = self.pieces, other.pieces
        while i < len(mine) and j < len(theirs):
            a = max(mine[i][0], theirs[j][0])
            b = min(mine[i][1], theirs[j][1])
            if b > a:
                result.append((a, b))
            if mine[i][1] < theirs[j][1]:
                i += 1
            else:
                j += 1
        return ArcSet(result)

    def difference(self, other: "ArcSet") -> "ArcSet":
        return self.intersection(other.complement())

    def is_subset(self, other: "ArcSet") -> bool:
        return self.difference(other).is_empty

    def is_disjoint(self, other: "ArcSet") -> bool:
        return self.intersection(other).is_empty

    def shifted(self, offset: Number) -> "ArcSet":
        offset = _frac(offset) % 1
        pieces: List[Tuple[Fraction, Fraction]] = []
        for a, b in self.pieces:
            pieces.extend(_arc_pieces(a + offset, b - a))
        return ArcSet(pieces)

    def contains(self, theta):
        """Vectorised membership of angles (reduced mod 1); endpoints count as inside."""
        theta = np.mod(np.asarray(theta, dtype=np.float64), 1.0)
        if not self.pieces:
            return np.zeros(theta.shape, dtype=bool)
        starts = np.array([float(a) for a, _ in self.pieces])
        ends = np.array([float(b) for _, b in self.pieces])
        index = np.searchsorted(starts, theta, side="right") - 1
        return (index >= 0) & (theta <= ends[np.clip(index, 0, None)])

    def float_pieces(self) -> List[Tuple[float, float]]:
        return [(float(a), float(b)) for a, b in self.pieces]

    def __or__(self, other):
        return self.union(other)

    def __and__(self, other):
        return self.intersection(other)

    def __sub__(self, other):
        return self.difference(other)

    def __eq__(self, other):
        return isinstance(other, ArcSet) and self.pieces == other.pieces

    def __hash__(self):
        return hash(self.pieces)

    def __len__(self):
        return len(self.pieces)

    def __repr__(self):
        return f"ArcSet({self.float_pieces()!r})"


def union_all(sets: Iterable[ArcSet]) -> ArcSet:
    pieces: List[Tuple[Fraction, Fraction]] = []
    for s in sets:
        pieces.extend(s.pieces)
    return ArcSet(pieces)


def _arc_pieces(start: Fraction, length: Fraction) -> List[Tuple[Fraction, Fraction]]:
    if length >= 1:
        return [(_ZERO, _ONE)]
    start = start % 1
    end = start + length
    if end <= 1:
        return [(start, end)]
    return [(start, _ONE), (_ZERO, end - 1)]


def _normalize(pieces: Iterable[Tuple[Fraction, Fraction]]) -> Tuple[Tuple[Fraction, Fraction], ...]:
    ordered = sorted((a, b) for a, b in pieces if b > a)
    merged: List[Tuple[Fraction, Fraction]] = []
    for a, b in ordered:
        if merged and a <= merged[-1][1]:
            if b > merged[-1][1]:
                merged[-1] = (merged[-1][0], b)
        else:
            merged.append((a, b))
    return tuple(merged)


def orbit_union(base: ArcSet, offsets: Sequence[Number]) -> ArcSet:
    """Union of base + offset over the given rotation offsets."""
    return union_all(base.shifted(o) for o in offsets)
