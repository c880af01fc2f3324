"""Scale ladder of the inductive construction.

Level n carries the critical interval I_n (centred at the minimum of the
working potential), the recovery time M_n and the first-return bound N_n.
Scales grow super-exponentially, so every quantity is also kept as a
natural logarithm; the integer or float value is None once it leaves the
exactly representable range.
"""
import json
import logging
import math
import sys
from typing import Dict, List, Optional, Tuple

import numpy as np

from cocycle.main import CocycleParams
from cocycle.utils import compute_c0
from errors import (CouplingTooSmall, HorizonExceeded, LadderExhausted, ScaleOverflow,
                    ValidationError)
from rotation.arcs import Arc, ArcSet, orbit_union, union_all
from rotation.main import (DiophantineConstants, RotationNumber, estimate_diophantine,
                           first_return_lower_bound, log_first_return_lower_bound, rotation_offsets)

logger = logging.getLogger(__name__)

MAX_LEVEL = 2
M_CHOICES = ("lower", "admissible")
LOG_FLOAT_MIN = math.log(sys.float_info.min)
LOG_INT_MAX = 53 * math.log(2.0) # integers stay exact in binary64 below 2**53
REGION_ARC_CAP = 200_000
ADMISSIBLE_TRIES = 100_000


def _exact_floor(log_value: float) -> Optional[int]:
    """floor(exp(log_value)), snapping values within 1e-9 of an integer (10**4**0.25 is 10)."""
    if log_value >= LOG_INT_MAX:
        return None
    x = math.exp(log_value)
    nearest = round(x)
    if abs(x - nearest) <= 1e-9 * max(1.0, x):
        return int(nearest)
    return int(math.floor(x))


def _finite(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


class LadderLevel:
    """One rung: |I_n|, M_n, N_n and the numerical energy bracket (E_n^-, E_n^+)."""

    def __init__(self, n: int, center: float, log_length: float, log_M: float, M: Optional[int],
                 log_N: float, N: Optional[int]):
        self.n = n
        self.center = center
        self.log_length = log_length
        self.log_M = log_M
        self.M = M
        self.log_N = log_N
        self.N = N
        self.E_minus: Optional[float] = None
        self.E_plus: Optional[float] = None

    @property
    def length(self) -> Optional[float]:
        if self.log_length <= LOG_FLOAT_MIN:
            return None
        return math.exp(self.log_length)

    @property
    def half_length(self) -> Optional[float]:
        length = self.length
        return None if length is None else 0.5 * length

    @property
    def interval(self) -> Arc:
        if self.half_length is None:
            raise ScaleOverflow(f"|I_{self.n}| = exp({self.log_length:.6g}) is below binary64 range",
                                level=self.n, log_length=self.log_length)
        return Arc(self.center, self.half_length)

    def to_dict(self) -> Dict:
        return {"n": self.n, "I_center": self.center, "I_halflength": self.half_length, "M": self.M,
                "N": self.N, "E_minus": self.E_minus, "E_plus": self.E_plus,
                "log_I_length": _finite(self.log_length), "log_M": _finite(self.log_M),
                "log_N": _finite(self.log_N)}

    def __str__(self):
        return f"LadderLevel(n={self.n}, |I|=exp({self.log_length:.6g}), M={self.M}, N={self.N})"


class RegionSet:
    """Exceptional sets Xi^u_n, Xi^s_n and the good set Theta_n = T minus both."""

    def __init__(self, n: int, xi_u: ArcSet, xi_s: ArcSet):
        self.n = n
        self.xi_u = xi_u
        self.xi_s = xi_s
        self.theta = union_all([xi_u, xi_s]).complement()

    @property
    def exceptional_measure(self) -> float:
        return float(union_all([self.xi_u, self.xi_s]).measure())

    @property
    def covers_circle(self) -> bool:
        """Xi^u_n and Xi^s_n leave no good set."""
        return self.theta.is_empty

    def partition_holds(self) -> bool:
        return union_all([self.theta, self.xi_u, self.xi_s]).is_full

    def to_dict(self):
        return {"n": self.n, "xi_u": self.xi_u.float_pieces(), "xi_s": self.xi_s.float_pieces(),
                "exceptional_measure": self.exceptional_measure}


class ScaleLadder:
    """Levels 0..max_level of the construction for one cocycle (energy-independent)."""

    def __init__(self, params: CocycleParams, c0: float, constants: DiophantineConstants,
                 levels: List[LadderLevel], m_choice: str):
        self.params = params
        self.c0 = c0
        self.constants = constants
        self.levels = levels
        self.m_choice = m_choice
        self.warnings: List[str] = []
        self._regions: Dict[int, RegionSet] = {}

    @property
    def tau(self) -> float:
        return self.constants.tau

    @property
    def kappa(self) -> float:
        return self.constants.kappa

    @property
    def max_level(self) -> int:
        return len(self.levels) - 1

    @property
    def degenerate(self) -> bool:
        return bool(self.warnings)

    @property
    def energy_brackets(self) -> List[Tuple[Optional[float], Optional[float]]]:
        return [(level.E_minus, level.E_plus) for level in self.levels]

    def level(self, n: int) -> LadderLevel:
        if not 0 <= n <= self.max_level:
            raise ValidationError(f"level {n} outside 0..{self.max_level}", level=n)
        return self.levels[n]

    def region_set(self, n: int) -> RegionSet:
        """Xi^u_n = U_{i<=n} U_{m=1}^{M_i} (I_i + m omega), Xi^s_n = U_{i<=n} U_{m=0}^{M_i} (I_i - m omega)."""
        if n < 0:
            return RegionSet(-1, ArcSet.empty(), ArcSet.empty())
        if n not in self._regions:
            self._regions[n] = region_set(self.levels[:n + 1], self.params.omega)
        return self._regions[n]

    def attach_energy_bracket(self, n: int, E_minus: Optional[float], E_plus: Optional[float]) -> None:
        level = self.level(n)
        level.E_minus, level.E_plus = E_minus, E_plus

    def warn(self, message: str) -> None:
        self.warnings.append(message)
        logger.warning(message)

    def to_dict(self):
        return {"c0": self.c0, "tau": self.tau, "kappa": self.kappa, "m_choice": self.m_choice,
                "degenerate": self.degenerate, "warnings": list(self.warnings),
                "levels": [level.to_dict() for level in self.levels]}

    def to_json(self) -> str:
        return json.dumps([level.to_dict() for level in self.levels], sort_keys=True, indent=2)

    def __str__(self):
        return f"ScaleLadder(c0={self.c0:.6g}, levels={[str(level) for level in self.levels]})"


def _orbit_arcs(interval: Arc, omega: RotationNumber, M: int, forward: bool) -> ArcSet:
    offsets = rotation_offsets(omega, M)
    if forward:
        offsets = offsets[1:]
    else:
        offsets = np.mod(-offsets, 1.0)
    return orbit_union(interval.to_set(), [float(o) for o in offsets])


def region_set(levels: List[LadderLevel], omega: RotationNumber) -> RegionSet:
    """RegionSet over the given levels (all of them, indices 0..n)."""
    total = 0
    for level in levels:
        if level.M is None:
            raise HorizonExceeded(f"M_{level.n} = exp({level.log_M:.6g}) is not representable", level=level.n)
        total += 2 * level.M + 1
    if total > REGION_ARC_CAP:
        raise HorizonExceeded(f"Region set needs {total} arcs (cap {REGION_ARC_CAP})", arcs=total)
    xi_u = union_all(_orbit_arcs(level.interval, omega, level.M, forward=True) for level in levels)
    xi_s = union_all(_orbit_arcs(level.interval, omega, level.M, forward=False) for level in levels)
    regions = RegionSet(levels[-1].n, xi_u, xi_s)
    logger.debug(f"region set {regions.n}: {len(xi_u)} + {len(xi_s)} pieces, "
                 f"exceptional measure {regions.exceptional_measure:.6g}")
    return regions


def c2_holds(interval: Arc, M: int, theta_prev: ArcSet, omega: RotationNumber) -> bool:
    """I_n +- (M_n + i) omega inside Theta_{n-1} for i = 0, 1."""
    for i in (0, 1):
        for sign in (1, -1):
            image = interval.shifted(omega.offset(sign * (M + i))).to_set()
            if not image.is_subset(theta_prev):
                return False
    return True


def _admissible_M(interval: Arc, log_lower: float, theta_prev: ArcSet, omega: RotationNumber, n: int) -> int:
    lower = _exact_floor(log_lower)
    if lower is None:
        raise ScaleOverflow(f"M_{n} >= exp({log_lower:.6g}) is not representable", level=n)
    if math.exp(log_lower) - lower > 1e-9 * lower:
        lower += 1
    last = min(2 * lower, lower + ADMISSIBLE_TRIES)
    for M in range(lower, last + 1):
        if c2_holds(interval, M, theta_prev, omega):
            logger.info(f"M_{n} = {M}: first admissible value from {lower}")
            return M
    raise LadderExhausted(f"No M_{n} in [{lower}, {last}] satisfies the return condition", level=n)


def build_ladder(params: CocycleParams, max_level: int = 1, constants: Optional[DiophantineConstants] = None,
                 m_choice: str = "lower", n_max: int = 100_000, tau: float = 1.0) -> ScaleLadder:
    """Levels 0..max_level of the scale ladder.

    M_0 = floor(lambda^(1/(4 tau))), |I_0| = c0/sqrt(lambda),
    |I_j| = c0/lambda^(M_{j-1}/2) and M_j = floor(lambda^(M_{j-1}/(4 tau)))
    (or, with m_choice="admissible", the first M_j in
    [lambda^(M_{j-1}/(4 tau)), 2 lambda^(M_{j-1}/(4 tau))] satisfying the
    return condition). N_n is the Diophantine first-return bound of |I_n|.

    Args:
        params (CocycleParams): The cocycle; its energy is not used.
        max_level (int): Highest level, at most 2.
        constants (Optional[DiophantineConstants]): Estimated from omega when omitted.
        m_choice (str): "lower" or "admissible".
        n_max (int): Search range of the Diophantine estimate.
        tau (float): Diophantine exponent used by the estimate.

    Returns:
        ScaleLadder: With degeneracy warnings attached when the scales do not separate.

    Raises:
        CouplingTooSmall: M_0 = 0, i.e. lambda < 1.
    """
    if not 0 <= max_level <= MAX_LEVEL:
        raise ValidationError(f"max_level must lie in 0..{MAX_LEVEL}, got {max_level}")
    if m_choice not in M_CHOICES:
        raise ValidationError(f"m_choice must be one of {M_CHOICES}, got {m_choice!r}")
    lam = params.lam
    if lam < 1.0:
        raise CouplingTooSmall(f"M_0 = floor(lambda^(1/(4 tau))) = 0 for lambda = {lam!r}; need lambda >= 1",
                               lam=lam, threshold=1.0)
    constants = constants or estimate_diophantine(params.omega, n_max, tau)
    c0 = compute_c0(params.potential, lam)
    log_lam = math.log(lam)
    center = params.potential.frame_min
    omega = params.omega

    levels: List[LadderLevel] = []
    for n in range(max_level + 1):
        if n == 0:
            log_length = math.log(c0) - 0.5 * log_lam
            log_M = log_lam / (4 * constants.tau)
            M = _exact_floor(log_M)
        else:
            previous = levels[-1]
            if previous.M is not None:
                prev_M = float(previous.M)
            elif previous.log_M < math.log(sys.float_info.max):
                prev_M = math.exp(previous.log_M)
            else:
                raise ScaleOverflow(f"M_{n - 1} = exp({previous.log_M:.6g}) overflows binary64", level=n - 1)
            log_length = math.log(c0) - 0.5 * prev_M * log_lam
            log_M = prev_M * log_lam / (4 * constants.tau)
            M = _exact_floor(log_M)
            if m_choice == "admissible":
                theta_prev = region_set(levels, omega).theta
                interval = Arc(center, 0.5 * math.exp(log_length))
                M = _admissible_M(interval, log_M, theta_prev, omega, n)
                log_M = math.log(M)
        log_N = log_first_return_lower_bound(constants, log_length)
        length = math.exp(log_length) if log_length > LOG_FLOAT_MIN else None
        if length is not None and length >= 1.0:
            N, log_N = 0, -math.inf
        elif length is not None and log_N < LOG_INT_MAX:
            N = first_return_lower_bound(constants, length)
        else:
            N = None
        levels.append(LadderLevel(n, center, log_length, log_M, M, log_N, N))

    ladder = ScaleLadder(params, c0, constants, levels, m_choice)
    if levels[0].M is not None and levels[0].M <= 1:
        ladder.warn(f"Degenerate ladder: M_0 = {levels[0].M} at lambda = {lam:.6g} "
                    f"(lambda^(1/(4 tau)) < 2); levels do not separate")
    for lower, upper in zip(levels, levels[1:]):
        if lower.M is not None and upper.M is not None and upper.M <= lower.M:
            ladder.warn(f"Degenerate ladder: M_{upper.n} = {upper.M} does not exceed M_{lower.n} = {lower.M}")
    if levels[0].length is not None and levels[0].length >= 1.0:
        ladder.warn(f"Degenerate ladder: |I_0| = {levels[0].length:.6g} covers the circle")
    logger.info(f"Built {ladder}")
    return ladder


class RegionMembership:
    """Grid points where psi^u < lambda outside Xi^u_n or psi^s > 1/lambda outside Xi^s_n.

    Upper-band violations (psi^u > lambda^2, psi^s < lambda^-2) are counted
    separately; they are expected whenever sup lambda^2 v > lambda^2.
    """

    def __init__(self, n: int, points: int, u_violations: int, s_violations: int, u_above: int, s_below: int):
        self.n = n
        self.points = points
        self.u_violations = u_violations
        self.s_violations = s_violations
        self.u_above = u_above
        self.s_below = s_below

    @property
    def holds(self) -> bool:
        return self.u_violations == 0 and self.s_violations == 0

    def to_dict(self):
        return dict(vars(self), holds=self.holds)


def region_membership(curve_u, curve_s, regions: RegionSet) -> RegionMembership:
    """Checks psi^u not in B^u implies theta in Xi^u_n (and the stable mirror) on the curve grid."""
    bands = curve_u.params.bands
    thetas = curve_u.thetas
    in_xi_u = regions.xi_u.contains(thetas)
    in_xi_s = regions.xi_s.contains(thetas)
    report = RegionMembership(
        n=regions.n, points=len(thetas),
        u_violations=int(np.count_nonzero(~bands.above_Bu_floor(curve_u.psi) & ~in_xi_u)),
        s_violations=int(np.count_nonzero(~bands.below_Bs_ceiling(curve_s.psi) & ~in_xi_s)),
        u_above=bands.violations(curve_u.psi, "u")[1],
        s_below=bands.violations(curve_s.psi, "s")[0],
    )
    logger.debug(f"region membership at level {regions.n}: {report.to_dict()}")
    return report
