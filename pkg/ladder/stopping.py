"""Stopping times of the near-collision and the critical-interval rule.

For theta with d(theta) = psi^u(theta) - psi^s(theta) < lambda^-3 the
forward stopping time sigma^+ is the last j with d(theta + i omega) below
the threshold for all 0 <= i <= j; sigma^- is its backward mirror.
"""
import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from curves.main import InvariantCurve, gap_at, gap_on_grid
from errors import HorizonExceeded, LadderExhausted, NotInCollisionWindow
from ladder.main import REGION_ARC_CAP, ScaleLadder
from rotation.arcs import Arc, ArcSet, orbit_union, union_all
from rotation.main import RotationNumber, rotation_offsets

logger = logging.getLogger(__name__)

RETURN_FRACTION = 30 # I(E) = I_k + omega when N_{k-1}/30 <= sigma < N_k/30
SEPARATION_FACTOR = 15
INFLATION = 20 # M-hat_j = 20 * 2^j * M_j
WALK_CHUNK = 64
WALK_CAP = 100_000
MAX_PROBES = 64


class StoppingTimes:
    def __init__(self, theta: float, gap: float, sigma_plus: int, sigma_minus: int, sigma_hat_plus: int,
                 sigma_hat_minus: int):
        self.theta = theta
        self.gap = gap
        self.sigma_plus = sigma_plus
        self.sigma_minus = sigma_minus
        self.sigma_hat_plus = sigma_hat_plus
        self.sigma_hat_minus = sigma_hat_minus

    def eta(self, sigma_n_plus: Optional[int] = None, sigma_n_minus: Optional[int] = None) -> float:
        """max of (sigma - sigma_hat) / sigma_n over both directions; sigma_n defaults to this theta's own sigma."""
        values = []
        for sigma, hat, sigma_n in ((self.sigma_plus, self.sigma_hat_plus, sigma_n_plus),
                                    (self.sigma_minus, self.sigma_hat_minus, sigma_n_minus)):
            sigma_n = sigma if sigma_n is None else sigma_n
            values.append((sigma - hat) / sigma_n if sigma_n > 0 else 0.0)
        return max(values)

    def bound(self, lam: float) -> float:
        """3 + 2 log_lambda(1/d(theta)), an upper bound for sigma^+."""
        return 3.0 + 2.0 * math.log(1.0 / self.gap) / math.log(lam)

    def to_dict(self):
        return dict(vars(self), eta=self.eta())

    def __str__(self):
        return (f"StoppingTimes(theta={self.theta!r}, sigma+={self.sigma_plus}, sigma-={self.sigma_minus}, "
                f"hat+={self.sigma_hat_plus}, hat-={self.sigma_hat_minus})")


def _walk(curve_u: InvariantCurve, curve_s: InvariantCurve, thetas: np.ndarray, sign: int, threshold: float,
          cap: int = WALK_CAP) -> np.ndarray:
    """sigma for each angle: first j >= 1 with d(theta + sign j omega) >= threshold, minus one."""
    omega = curve_u.params.omega
    sigma = np.full(thetas.shape, -1, dtype=np.int64)
    start = 1
    while start <= cap:
        pending = np.nonzero(sigma < 0)[0]
        if pending.size == 0:
            return sigma
        stop = min(cap, start + WALK_CHUNK - 1)
        offsets = rotation_offsets(omega, stop)[start:]
        if sign < 0:
            offsets = np.mod(-offsets, 1.0)
        angles = np.mod(thetas[pending, None] + offsets[None, :], 1.0)
        d = curve_u.evaluate(angles) - curve_s.evaluate(angles)
        crossed = d >= threshold
        hit = crossed.any(axis=1)
        sigma[pending[hit]] = start + np.argmax(crossed[hit], axis=1) - 1
        start = stop + 1
    raise HorizonExceeded(f"Orbit stayed within lambda^-3 of the collision for {cap} steps", cap=cap)


def inflated_region(ladder: ScaleLadder) -> ArcSet:
    """U_j U_{m <= 20 2^j M_j} (I_j +- m omega) over the levels small enough to enumerate."""
    omega = ladder.params.omega
    sets = []
    for level in ladder.levels:
        if level.M is None:
            break
        m_hat = INFLATION * 2 ** level.n * level.M
        if 2 * m_hat + 1 > REGION_ARC_CAP:
            logger.debug(f"inflated region skips level {level.n}: {2 * m_hat + 1} arcs")
            break
        offsets = rotation_offsets(omega, m_hat)
        base = level.interval.to_set()
        sets.append(orbit_union(base, [float(o) for o in offsets]))
        sets.append(orbit_union(base, [float(o) for o in np.mod(-offsets, 1.0)]))
    return union_all(sets)


def _last_avoiding(thetas: np.ndarray, sigma: np.ndarray, sign: int, region: ArcSet,
                   omega: RotationNumber) -> np.ndarray:
    """Largest k <= sigma with theta + sign k omega outside the region (0 if none)."""
    if region.is_empty:
        return np.maximum(sigma, 0)
    top = int(sigma.max()) if sigma.size else 0
    if top <= 0:
        return np.zeros(thetas.shape, dtype=np.int64)
    offsets = rotation_offsets(omega, top)[1:]
    if sign < 0:
        offsets = np.mod(-offsets, 1.0)
    angles = np.mod(thetas[:, None] + offsets[None, :], 1.0)
    outside = ~region.contains(angles)
    k = np.arange(1, top + 1)
    eligible = outside & (k[None, :] <= sigma[:, None])
    return np.where(eligible, k[None, :], 0).max(axis=1)


def _stopping_times(curve_u: InvariantCurve, curve_s: InvariantCurve, thetas: np.ndarray, gaps: np.ndarray,
                    ladder: Optional[ScaleLadder]) -> List[StoppingTimes]:
    params = curve_u.params
    threshold = params.lam ** -3
    plus = _walk(curve_u, curve_s, thetas, 1, threshold)
    minus = _walk(curve_u, curve_s, thetas, -1, threshold)
    if ladder is None:
        hat_plus, hat_minus = plus, minus
    else:
        region = inflated_region(ladder)
        hat_plus = _last_avoiding(thetas, plus, 1, region, params.omega)
        hat_minus = _last_avoiding(thetas, minus, -1, region, params.omega)
    return [StoppingTimes(float(t), float(g), int(p), int(m), int(hp), int(hm))
            for t, g, p, m, hp, hm in zip(thetas, gaps, plus, minus, hat_plus, hat_minus)]


def stopping_times(curve_u: InvariantCurve, curve_s: InvariantCurve, theta: float,
                   ladder: Optional[ScaleLadder] = None) -> StoppingTimes:
    """sigma^+-, and sigma-hat^+- when a ladder is given, at one angle of the collision window.

    Raises:
        NotInCollisionWindow: d(theta) >= lambda^-3.
    """
    threshold = curve_u.params.lam ** -3
    d = gap_at(theta, curve_u, curve_s)
    if not d < threshold:
        raise NotInCollisionWindow(f"d({theta!r}) = {d!r} is not below lambda^-3 = {threshold!r}",
                                   theta=theta, gap=d)
    times = _stopping_times(curve_u, curve_s, np.array([float(theta) % 1.0]), np.array([d]), ladder)[0]
    logger.debug(f"{times}")
    return times


class SigmaStatistics:
    """Stopping times over the grid angles of the collision window."""

    def __init__(self, times: List[StoppingTimes]):
        self.times = times

    @property
    def sigma_plus(self) -> int:
        return max(t.sigma_plus for t in self.times)

    @property
    def sigma_minus(self) -> int:
        return max(t.sigma_minus for t in self.times)

    @property
    def sigma_max(self) -> int:
        return max(self.sigma_plus, self.sigma_minus)

    @property
    def eta(self) -> float:
        return max(t.eta(self.sigma_plus, self.sigma_minus) for t in self.times)

    def to_dict(self):
        return {"probes": len(self.times), "sigma_plus": self.sigma_plus, "sigma_minus": self.sigma_minus,
                "eta": self.eta}


def sigma_statistics(curve_u: InvariantCurve, curve_s: InvariantCurve, ladder: Optional[ScaleLadder] = None,
                     max_probes: int = MAX_PROBES) -> SigmaStatistics:
    """sigma^+-_n maximised over grid angles with d < lambda^-3 (at most max_probes of them, argmin included)."""
    gap = gap_on_grid(curve_u, curve_s)
    threshold = curve_u.params.lam ** -3
    window = np.nonzero(gap < threshold)[0]
    if window.size == 0:
        raise NotInCollisionWindow(f"no grid angle has d < lambda^-3 = {threshold!r} (min d = {gap.min()!r})",
                                   min_gap=float(gap.min()))
    if window.size > max_probes:
        chosen = window[np.linspace(0, window.size - 1, max_probes).astype(int)]
        window = np.union1d(chosen, [int(np.argmin(gap))])
    times = _stopping_times(curve_u, curve_s, curve_u.thetas[window], gap[window], ladder)
    stats = SigmaStatistics(times)
    logger.info(f"Stopping times over {len(times)} probes: {stats.to_dict()}")
    return stats


def return_separation(interval: Arc, sigma_plus: int, sigma_minus: int, omega: RotationNumber) -> bool:
    """U_{1<=m<=15 sigma+} (I + m omega) and U_{1<=m<=15 sigma-} (I - m omega) are disjoint."""
    base = interval.to_set()
    forward = orbit_union(base, [float(o) for o in rotation_offsets(omega, SEPARATION_FACTOR * sigma_plus)[1:]])
    backward = orbit_union(base, [float(o) for o in
                                  np.mod(-rotation_offsets(omega, SEPARATION_FACTOR * sigma_minus)[1:], 1.0)])
    return forward.is_disjoint(backward)


def select_critical_interval(ladder: ScaleLadder, sigma_max: int) -> Tuple[int, Arc]:
    """(k, I_k + omega) with N_{k-1}/30 <= sigma_max < N_k/30, or level 0 when sigma_max < N_0/30.

    A degenerate ladder (levels that do not separate) always gives level 0.

    Raises:
        LadderExhausted: sigma_max >= N_max_level / 30.
    """
    omega = ladder.params.omega
    if ladder.degenerate:
        logger.warning("Degenerate ladder: I(E) taken as I_0 + omega")
        return 0, ladder.level(0).interval.shifted(omega.offset(1))
    log_sigma = math.log(RETURN_FRACTION * sigma_max) if sigma_max > 0 else -math.inf
    for level in ladder.levels:
        if log_sigma < level.log_N:
            return level.n, level.interval.shifted(omega.offset(1))
    raise LadderExhausted(f"sigma = {sigma_max} reaches N_{ladder.max_level}/30; raise ladder.max_level",
                          sigma=sigma_max, max_level=ladder.max_level)


class GrowthCheck:
    """log D along the orbit of theta against ((i+1)/2) log lambda, for i up to sigma."""

    def __init__(self, theta: float, direction: str, steps: int, margin: float):
        self.theta = theta
        self.direction = direction
        self.steps = steps
        self.margin = margin

    @property
    def holds(self) -> bool:
        return self.margin >= 0

    def to_dict(self):
        return dict(vars(self), holds=self.holds)


def growth_check(curve_u: InvariantCurve, curve_s: InvariantCurve, times: StoppingTimes) -> Tuple[GrowthCheck, GrowthCheck]:
    """Forward and backward growth of the gap between the invariant curves up to the stopping times.

    Along the invariant curves r_i - s_i = d(theta + i omega), so
    log D_{0,i} = log d(theta + (i+1) omega) - log d(theta).
    """
    omega = curve_u.params.omega
    log_lam = math.log(curve_u.params.lam)
    checks = []
    for direction, sigma, sign in (("forward", times.sigma_plus, 1), ("backward", times.sigma_minus, -1)):
        steps = sigma + 1
        offsets = rotation_offsets(omega, steps)
        if sign < 0:
            offsets = np.mod(-offsets, 1.0)
        angles = np.mod(times.theta + offsets, 1.0)
        d = curve_u.evaluate(angles) - curve_s.evaluate(angles)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_D = np.log(d[1:]) - np.log(d[0])
        required = 0.5 * np.arange(1, steps + 1) * log_lam
        margin = float(np.min(log_D - required)) if steps else 0.0
        checks.append(GrowthCheck(times.theta, direction, steps, margin))
    return checks[0], checks[1]
