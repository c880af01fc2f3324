import logging
import math
from fractions import Fraction
from functools import lru_cache
from typing import List, Optional, Tuple, Union

import numpy as np
import sympy
from mpmath import mp

from config.settings import current_config
from errors import DegenerateRotation, HorizonExceeded, ValidationError

logger = logging.getLogger(__name__)

# omega is split as hi + lo with hi carrying 32 fractional bits, so k * hi
# is exact in binary64 for every k below 2**21.
_SPLIT = 2.0 ** 32
EXACT_BLOCK = 2 ** 21
CF_DEPTH = 30
RATIONAL_DIST = 64 * 2.0 ** -52


def continued_fraction(value, depth: int = CF_DEPTH) -> Tuple[List[int], bool]:
    """Partial quotients [a0; a1, a2, ...] of `value`.

    Returns the quotients and a flag telling whether the expansion
    terminated (value rational to working precision).
    """
    terms: List[int] = []
    with mp.workdps(current_config.MP_DPS):
        x = mp.mpf(value)
        cutoff = mp.mpf(10) ** (-(current_config.MP_DPS - 10))
        for _ in range(depth):
            a = mp.floor(x)
            terms.append(int(a))
            frac = x - a
            if frac < cutoff:
                return terms, True
            x = 1 / frac
    return terms, False


class RotationNumber:
    """Rotation angle omega in (0, 1), kept both as binary64 and as a
    high-precision mpmath value for exact multiples."""

    def __init__(self, value, source: str = "literal", text: Optional[str] = None):
        with mp.workdps(current_config.MP_DPS):
            exact = mp.mpf(value)
            exact = exact - mp.floor(exact)
            if exact == 0:
                raise DegenerateRotation(f"Rotation number {value} is an integer")
            self._exact_text = mp.nstr(exact, current_config.MP_DPS)
            self.omega: float = float(exact)
            self.omega_hi: float = math.floor(self.omega * _SPLIT) / _SPLIT
            self.omega_lo: float = float(exact - mp.mpf(self.omega_hi))
        self.source: str = source
        self.text: str = text if text is not None else repr(self.omega)
        self.cf_terms, self.terminates = continued_fraction(self.exact)

    @classmethod
    def from_value(cls, value: float) -> "RotationNumber":
        return cls(float(value), source="literal")

    @classmethod
    def from_expression(cls, expression: str) -> "RotationNumber":
        """Evaluates e.g. "(sqrt(5)-1)/4" to full working precision."""
        try:
            parsed = sympy.sympify(expression)
            text = str(sympy.N(parsed, current_config.MP_DPS + 5))
            with mp.workdps(current_config.MP_DPS):
                value = mp.mpf(text)
        except (sympy.SympifyError, TypeError, ValueError) as e:
            raise ValidationError(f"Cannot evaluate rotation expression '{expression}': {e}")
        return cls(value, source="expression", text=expression)

    @classmethod
    def from_text(cls, text: str) -> "RotationNumber":
        try:
            return cls(float(text), source="literal", text=text)
        except ValueError:
            return cls.from_expression(text)

    @property
    def exact(self):
        with mp.workdps(current_config.MP_DPS):
            return mp.mpf(self._exact_text)

    def convergents(self) -> List[Fraction]:
        convergents: List[Fraction] = []
        p_prev, p = 1, self.cf_terms[0]
        q_prev, q = 0, 1
        convergents.append(Fraction(p, q))
        for a in self.cf_terms[1:]:
            p_prev, p = p, a * p + p_prev
            q_prev, q = q, a * q + q_prev
            convergents.append(Fraction(p, q))
        return convergents

    def offset(self, m: int) -> float:
        """frac(m * omega) for any integer m, correctly rounded."""
        m = int(m)
        if 0 <= m < EXACT_BLOCK:
            return float(rotation_offsets(self, m)[m])
        with mp.workdps(current_config.MP_DPS + len(str(abs(m)))):
            x = m * self.exact
            x = x - mp.floor(x)
            value = float(x)
        return 0.0 if value >= 1.0 else value

    def offset_fraction(self, m: int) -> Fraction:
        return Fraction(self.offset(m))

    def shift(self, theta: float, m: int) -> float:
        """(theta + m * omega) mod 1."""
        value = (theta + self.offset(m)) % 1.0
        return 0.0 if value >= 1.0 else value

    def key(self) -> Tuple[float, float, str]:
        return self.omega_hi, self.omega_lo, self._exact_text

    def __eq__(self, other):
        return isinstance(other, RotationNumber) and self._exact_text == other._exact_text

    def __hash__(self):
        return hash(self._exact_text)

    def __str__(self):
        head = ", ".join(str(a) for a in self.cf_terms[1:6])
        return f"RotationNumber({self.text} = {self.omega!r}, cf=[{self.cf_terms[0]}; {head}, ...], source={self.source})"


@lru_cache(maxsize=16)
def _offset_table(omega_hi: float, omega_lo: float, exact_text: str, size: int) -> np.ndarray:
    first = min(size, EXACT_BLOCK)
    k = np.arange(first, dtype=np.float64)
    base = k * omega_hi
    base -= np.floor(base)
    base += k * omega_lo
    base = np.mod(base, 1.0)
    base[base >= 1.0] -= 1.0
    blocks = [base]
    start = first
    while start < size:
        with mp.workdps(current_config.MP_DPS + 8):
            x = start * mp.mpf(exact_text)
            shift = float(x - mp.floor(x))
        block = base[: min(EXACT_BLOCK, size - start)] + shift
        block -= np.floor(block)
        blocks.append(block)
        start += EXACT_BLOCK
    table = np.concatenate(blocks)
    table.setflags(write=False)
    logger.debug(f"Built rotation offset table of size {size}")
    return table


def rotation_offsets(omega: RotationNumber, n: int) -> np.ndarray:
    """frac(k * omega) for k = 0..n, each with a single rounding. Read-only."""
    if n < 0:
        raise ValueError("n must be non-negative")
    size = 1 << max(6, n.bit_length())
    return _offset_table(*omega.key(), size)[: n + 1]


def orbit_angles(theta0: Union[float, np.ndarray], n: int, omega: RotationNumber, direction: int = 1) -> np.ndarray:
    """theta_k = theta0 + direction * k * omega (mod 1), k = 0..n.

    A scalar theta0 gives shape (n+1,); an array gives (len, n+1).
    """
    offsets = rotation_offsets(omega, n)
    if direction < 0:
        offsets = -offsets
    theta0 = np.asarray(theta0, dtype=np.float64)
    angles = np.mod(theta0[..., None] + offsets, 1.0)
    angles[angles >= 1.0] = 0.0
    return angles


class DiophantineConstants:
    """Empirical (kappa, tau): dist(n omega, Z) > kappa / n**tau for 0 < n <= n_max_checked."""

    def __init__(self, kappa: float, tau: float, n_max_checked: int, kappa_tail: Optional[float] = None):
        if kappa <= 0:
            raise ValidationError("kappa must be positive")
        if tau < 1:
            raise ValidationError("tau must be >= 1")
        self.kappa: float = kappa
        self.tau: float = tau
        self.n_max_checked: int = n_max_checked
        self.kappa_tail: float = kappa_tail if kappa_tail is not None else kappa

    def holds_for(self, omega: RotationNumber) -> bool:
        n, dist = _distances(omega, self.n_max_checked)
        return bool(np.all(n ** self.tau * dist > self.kappa))

    def __str__(self):
        return (f"DiophantineConstants(kappa={self.kappa:.6g}, tau={self.tau}, "
                f"n_max_checked={self.n_max_checked}, kappa_tail={self.kappa_tail:.6g})")


def _distances(omega: RotationNumber, n_max: int) -> Tuple[np.ndarray, np.ndarray]:
    offsets = rotation_offsets(omega, n_max)[1:]
    dist = np.minimum(offsets, 1.0 - offsets)
    n = np.arange(1, n_max + 1, dtype=np.float64)
    return n, dist


def estimate_diophantine(omega: RotationNumber, n_max: int, tau: float = 1.0, margin: float = 1e-3) -> DiophantineConstants:
    """Estimates (kappa, tau) by exhaustive search over 1 <= n <= n_max.

    Args:
        omega (RotationNumber): The rotation.
        n_max (int): Range of the exhaustive check (>= 2).
        tau (float): Exponent; 1 for bounded-type rotations.
        margin (float): kappa is reported as (1 - margin) times the observed minimum.

    Returns:
        DiophantineConstants: With kappa_tail, the same minimum over the
        upper decade n >= n_max/10 (a proxy for the liminf).
    """
    if n_max < 2:
        raise ValidationError(f"n_max must be >= 2, got {n_max}")
    n, dist = _distances(omega, n_max)
    degenerate = np.nonzero(dist <= RATIONAL_DIST)[0]
    if degenerate.size:
        first = int(n[degenerate[0]])
        raise DegenerateRotation(f"omega={omega.omega!r} is rational to working precision: dist({first} omega, Z) = 0",
                                 n=first)
    scaled = n ** tau * dist
    kappa = (1.0 - margin) * float(scaled.min())
    tail_start = max(1, n_max // 10) - 1
    kappa_tail = (1.0 - margin) * float(scaled[tail_start:].min())
    constants = DiophantineConstants(kappa, tau, n_max, kappa_tail)
    logger.info(f"Estimated {constants} for omega={omega.omega!r} (minimum at n={int(n[np.argmin(scaled)])})")
    return constants


def first_return_lower_bound(constants: DiophantineConstants, interval_length: float) -> int:
    """N = floor((kappa / eps)**(1/tau)): an arc of length eps does not meet
    its own rotation images for 0 < |n| <= N."""
    if not 0 < interval_length < 1:
        raise ValidationError(f"interval_length must lie in (0, 1), got {interval_length}")
    x = (constants.kappa / interval_length) ** (1.0 / constants.tau)
    # never round up: a value just under an integer keeps the smaller bound
    return int(math.floor(x))


def log_first_return_lower_bound(constants: DiophantineConstants, log_length: float) -> float:
    """Natural log of the same bound, for lengths below binary64 range."""
    return (math.log(constants.kappa) - log_length) / constants.tau


def brute_force_first_return(omega: RotationNumber, interval_length: float, n_limit: Optional[int] = None) -> int:
    """Smallest n >= 1 with dist(n omega, Z) <= eps, i.e. the first time an
    arc of length eps meets its own image."""
    if not 0 < interval_length < 1:
        raise ValidationError(f"interval_length must lie in (0, 1), got {interval_length}")
    if n_limit is None:
        # Dirichlet guarantees a return within 1/eps steps
        n_limit = int(math.ceil(1.0 / interval_length)) + 1
    n_limit = min(n_limit, 1 << 24)
    chunk = 1 << 16
    start = 1
    while start <= n_limit:
        stop = min(n_limit, start + chunk - 1)
        offsets = rotation_offsets(omega, stop)[start:]
        dist = np.minimum(offsets, 1.0 - offsets)
        hits = np.nonzero(dist <= interval_length)[0]
        if hits.size:
            return start + int(hits[0])
        start = stop + 1
    raise HorizonExceeded(f"No return of an arc of length {interval_length} within {n_limit} steps",
                          n_limit=n_limit)
