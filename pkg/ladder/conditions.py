"""Desk-scale certifiers for the ladder conditions.

(C2)_n is pure arc algebra. (C1)_n and the box images iterate the
projective map over sampled fibres, so they certify only what the
samples show.
"""
import logging
import math
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from errors import BracketInvalid, HorizonExceeded, PoleHit
from ladder.main import ScaleLadder, c2_holds
from rotation.main import rotation_offsets

logger = logging.getLogger(__name__)

C1_RADII = 8
BOX_STEP_CAP = 1_000_000


def check_condition_C2(ladder: ScaleLadder, n: int, M: Optional[int] = None) -> bool:
    """I_n +- (M_n + i) omega inside Theta_{n-1} for i = 0, 1; M overrides M_n."""
    level = ladder.level(n)
    M = level.M if M is None else int(M)
    if M is None:
        raise HorizonExceeded(f"M_{n} = exp({level.log_M:.6g}) is not representable", level=n)
    theta_prev = ladder.region_set(n - 1).theta
    holds = c2_holds(level.interval, M, theta_prev, ladder.params.omega)
    logger.debug(f"(C2)_{n} with M={M}: {holds}")
    return holds


class C1Report:
    """Outcome of the sampled (C1)_n check at one energy."""

    def __init__(self, n: int, E: float, samples: int, forward_failures: int, backward_failures: int,
                 counterexample: Optional[Dict], max_steps: int):
        self.n = n
        self.E = E
        self.samples = samples
        self.forward_failures = forward_failures
        self.backward_failures = backward_failures
        self.counterexample = counterexample
        self.max_steps = max_steps

    @property
    def inconclusive(self) -> bool:
        return self.samples == 0

    @property
    def passed(self) -> bool:
        return self.forward_failures == 0 and self.backward_failures == 0

    def to_dict(self):
        return dict(vars(self), passed=self.passed, inconclusive=self.inconclusive)


def _seeds(theta_prev, band: Tuple[float, float], samples: int):
    radii_count = min(C1_RADII, samples)
    if radii_count == 0:
        return np.empty(0), np.empty(0)
    angles = (np.arange(math.ceil(samples / radii_count)) + 0.5) / math.ceil(samples / radii_count)
    angles = angles[theta_prev.contains(angles)]
    radii = np.geomspace(band[0], band[1], radii_count)
    theta0, r0 = np.meshgrid(angles, radii, indexing="ij")
    return theta0.ravel(), r0.ravel()


def _walk(ladder: ScaleLadder, n: int, params, theta0, r0, forward: bool, step_cap: int):
    """Iterates the seeds until they enter I_n; returns (failures, counterexample, steps)."""
    bands = params.bands
    interval = ladder.level(n).interval.to_set()
    previous = ladder.region_set(n - 1)
    allowed_set, in_band = (previous.xi_u, bands.in_Bu) if forward else (previous.xi_s, bands.in_Bs)
    offsets = rotation_offsets(params.omega, step_cap)
    if not forward:
        offsets = np.mod(-offsets, 1.0)

    theta, r = theta0.copy(), r0.copy()
    active = np.ones(theta0.shape, dtype=bool)
    failures, counterexample = 0, None
    for k in range(step_cap + 1):
        idx = np.nonzero(active)[0]
        theta[idx] = np.mod(theta0[idx] + offsets[k], 1.0)
        arrived = interval.contains(theta[idx])
        # the backward value at an angle of I_n is built from a(theta) on I_n itself
        checked = idx if forward else idx[~arrived]
        bad = ~(bands.in_B(r[checked]) & (in_band(r[checked]) | allowed_set.contains(theta[checked])))
        if np.any(bad):
            failures += int(bad.sum())
            if counterexample is None:
                i = int(checked[np.argmax(bad)])
                counterexample = {"direction": "forward" if forward else "backward", "theta0": float(theta0[i]),
                                  "r0": float(r0[i]), "step": k, "theta": float(theta[i]), "r": float(r[i]),
                                  "reason": "left B" if not bands.in_B(r[i]) else "outside the sub-band"}
            active[checked[bad]] = False
        active[idx[arrived]] = False
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            return failures, counterexample, k
        if k == step_cap:
            break
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            if forward:
                r[idx] = params.a(theta[idx]) - 1.0 / r[idx]
            else:
                following = np.mod(theta0[idx] + offsets[k + 1], 1.0)
                r[idx] = 1.0 / (params.a(following) - r[idx])
    raise HorizonExceeded(f"{int(active.sum())} seeds did not reach I_{n} within {step_cap} steps",
                          step_cap=step_cap, level=n)


def check_condition_C1(ladder: ScaleLadder, n: int, E: float, samples: int = 1000,
                       step_cap: int = 1_000_000) -> C1Report:
    """Sampled (C1)_n at energy E.

    Forward seeds (theta0, r0) in Theta_{n-1} x B^u are iterated until theta
    enters I_n; every r_k must stay in B, and r_k outside B^u is allowed only
    for theta_k in Xi^u_{n-1}. Backward seeds in Theta_{n-1} x B^s are checked
    the same way against B^s and Xi^s_{n-1}.

    Raises:
        HorizonExceeded: Some seed did not reach I_n within step_cap steps.
    """
    params = ladder.params.with_energy(E)
    theta_prev = ladder.region_set(n - 1).theta
    bands = params.bands
    forward_seeds = _seeds(theta_prev, bands.u, samples)
    backward_seeds = _seeds(theta_prev, bands.s, samples)
    total = int(forward_seeds[0].size + backward_seeds[0].size)
    if total == 0:
        logger.warning(f"(C1)_{n} at E={E!r}: no samples, the check is inconclusive")
        return C1Report(n, E, 0, 0, 0, None, 0)
    forward_failures, counterexample, forward_steps = _walk(ladder, n, params, *forward_seeds, True, step_cap)
    backward_failures, backward_example, backward_steps = _walk(ladder, n, params, *backward_seeds, False, step_cap)
    report = C1Report(n, E, total, forward_failures, backward_failures, counterexample or backward_example,
                      max(forward_steps, backward_steps))
    logger.info(f"(C1)_{n} at E={E!r}: {'pass' if report.passed else 'FAIL'} over {total} seeds "
                f"({report.max_steps} steps)")
    return report


class BoxImage:
    """Lower and upper boundary images of a box, sampled over I_n + omega."""

    def __init__(self, n: int, side: str, thetas: np.ndarray, lower: np.ndarray, upper: np.ndarray):
        self.n = n
        self.side = side
        self.thetas = thetas
        self.lower = lower
        self.upper = upper

    @property
    def ordered(self) -> bool:
        return bool(np.all(self.lower <= self.upper))

    def to_dict(self):
        return {"n": self.n, "side": self.side, "thetas": self.thetas.tolist(), "lower": self.lower.tolist(),
                "upper": self.upper.tolist()}


def box_images(ladder: ScaleLadder, n: int, E: float, points: int = 257) -> Tuple[BoxImage, BoxImage]:
    """A^u_n and A^s_n over I_n + omega.

    The sections r = lambda, lambda^2 over I_n - M_n omega go forward M_n + 1
    steps; r = lambda^-2, lambda^-1 over I_n + M_n omega go backward M_n - 1.

    Raises:
        PoleHit: A boundary orbit went through a pole of the projective map.
        HorizonExceeded: M_n is too large to iterate.
    """
    level = ladder.level(n)
    params = ladder.params.with_energy(E)
    M = level.M
    if M is None or M + 1 > BOX_STEP_CAP:
        raise HorizonExceeded(f"box images of level {n} need M_{n} + 1 steps (cap {BOX_STEP_CAP})", level=n)
    omega, lam = params.omega, params.lam
    half = float(level.interval.half_length)
    thetas = np.mod(level.center + omega.offset(1) + np.linspace(-half, half, points), 1.0)
    offsets = rotation_offsets(omega, M + 1)

    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        r = np.stack([np.full(points, lam), np.full(points, lam ** 2)])
        for j in range(M + 1):
            r = params.a(np.mod(thetas - offsets[M + 1 - j], 1.0)) - 1.0 / r
        s = np.stack([np.full(points, lam ** -2), np.full(points, lam ** -1)])
        for j in range(M - 1):
            s = 1.0 / (params.a(np.mod(thetas + offsets[M - 2 - j], 1.0)) - s)
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(s))):
        raise PoleHit(f"box boundary orbit of level {n} hit a pole at E={E!r}", level=n, E=E)
    return BoxImage(n, "u", thetas, r[0], r[1]), BoxImage(n, "s", thetas, s[0], s[1])


def box_separation(image_u: BoxImage, image_s: BoxImage) -> float:
    """min over the samples of phi^{u,-} - phi^{s,+}; positive means A^u_n and A^s_n are disjoint."""
    return float(np.min(image_u.lower - image_s.upper))


def boxes_disjoint(image_u: BoxImage, image_s: BoxImage) -> bool:
    return box_separation(image_u, image_s) > 0


def box_touching_energy(ladder: ScaleLadder, n: int, bracket: Tuple[float, float], points: int = 257,
                        xtol: float = 1e-13) -> float:
    """E_n^-: the energy where A^u_n and A^s_n start to intersect.

    Raises:
        BracketInvalid: The boxes are not disjoint at bracket[0], or still disjoint at bracket[1].
    """
    lo, hi = bracket

    def separation(E):
        return box_separation(*box_images(ladder, n, E, points))

    try:
        f_lo, f_hi = separation(lo), separation(hi)
    except PoleHit as e:
        raise BracketInvalid(f"box images undefined at a bracket end: {e}", lo=lo, hi=hi)
    if not (f_lo > 0 > f_hi):
        raise BracketInvalid(f"box separation does not change sign on [{lo}, {hi}]: {f_lo!r}, {f_hi!r}",
                             lo=lo, hi=hi)
    E_minus = brentq(separation, lo, hi, xtol=xtol)
    logger.info(f"Boxes of level {n} touch at E={E_minus!r}")
    return float(E_minus)
