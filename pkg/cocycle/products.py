"""Log-space products along coupled orbits.

Two forward orbits r, s over the same base angles are "coupled". Their gap
evolves as r_{k+1} - s_{k+1} = D_{j,k} (r_j - s_j) with
D_{j,k} = 1 / (r_j s_j ... r_k s_k), and Pi_{j,k}(s, z) = prod s_i / z_i
compares two such gaps. Every product here is returned as a natural log,
summed pairwise by numpy.
"""
import logging
import math
from typing import Optional

import numpy as np

from cocycle.main import ProjectiveOrbit
from errors import FibreMismatch, ValidationError

logger = logging.getLogger(__name__)


def _check_coupled(first: ProjectiveOrbit, second: ProjectiveOrbit, j: int, k: int) -> None:
    if j < 0 or j > k:
        raise ValidationError(f"need 0 <= j <= k, got j={j}, k={k}")
    if first.theta0 != second.theta0 or first.direction != second.direction:
        raise FibreMismatch("Orbits do not share a base orbit", theta0=(first.theta0, second.theta0))
    if not first.params.same_cocycle(second.params):
        raise FibreMismatch("Orbits belong to different cocycles")
    if min(first.length, second.length) < k:
        raise FibreMismatch(f"Orbits recorded through step {min(first.length, second.length)}, need {k}",
                            k=k)


def distance_product(orbit_r: ProjectiveOrbit, orbit_s: ProjectiveOrbit, j: int, k: int) -> float:
    """log D_{j,k} = -sum_{i=j..k} log|r_i s_i|."""
    _check_coupled(orbit_r, orbit_s, j, k)
    r = orbit_r.values[j: k + 1]
    s = orbit_s.values[j: k + 1]
    return -float(np.sum(np.log(np.abs(r)) + np.log(np.abs(s))))


def distortion_product(orbit_s: ProjectiveOrbit, orbit_z: ProjectiveOrbit, j: int, k: int) -> float:
    """log Pi_{j,k}(s_0, z_0) = sum_{i=j..k} log|s_i / z_i|."""
    _check_coupled(orbit_s, orbit_z, j, k)
    s = orbit_s.values[j: k + 1]
    z = orbit_z.values[j: k + 1]
    return float(np.sum(np.log(np.abs(s)) - np.log(np.abs(z))))


def distortion_lower_bound(orbit_r: ProjectiveOrbit, orbit_s: ProjectiveOrbit, k: int) -> float:
    """log of exp(-lambda^4 sum_{j<=k} 1/D_{j,k}), the lower bound of Pi_{0,k}(s, r).

    Returns -inf when the sum overflows.
    """
    _check_coupled(orbit_r, orbit_s, 0, k)
    lam4 = orbit_r.params.lambda_sq ** 2
    logs = np.log(np.abs(orbit_r.values[: k + 1])) + np.log(np.abs(orbit_s.values[: k + 1]))
    # L_j = log(1/D_{j,k}) = sum_{i=j..k} log(r_i s_i)
    tail_sums = np.cumsum(logs[::-1])[::-1]
    with np.errstate(over="ignore"):
        total = float(np.sum(np.exp(tail_sums)))
    if not math.isfinite(total):
        return -math.inf
    return -lam4 * total


class DerivativeDifference:
    """Decomposition of d/dtheta (r_{k+1} - s_{k+1}) into dominant term and remainder."""

    def __init__(self, k: int, direct: float, dominant: float, remainder: float, remainder_bound: float,
                 scale: float):
        self.k: int = k
        self.direct: float = direct
        self.dominant: float = dominant
        self.remainder: float = remainder
        self.remainder_bound: float = remainder_bound
        self.scale: float = scale

    @property
    def reconstructed(self) -> float:
        return self.dominant + self.remainder

    @property
    def mismatch(self) -> float:
        """|direct - reconstructed| relative to |d r_{k+1}| + |d s_{k+1}|."""
        return abs(self.direct - self.reconstructed) / max(self.scale, np.finfo(float).tiny)

    @property
    def within_bound(self) -> bool:
        return abs(self.remainder) <= self.remainder_bound * (1 + 1e-12)

    def to_dict(self):
        return {"k": self.k, "direct": self.direct, "dominant": self.dominant, "remainder": self.remainder,
                "remainder_bound": self.remainder_bound, "mismatch": self.mismatch,
                "within_bound": self.within_bound}


def theta_derivatives(orbit: ProjectiveOrbit, d0: float = 0.0) -> np.ndarray:
    """d/dtheta r_k along a forward orbit: d_{k+1} = lambda^2 v'(theta_k) + d_k / r_k^2."""
    params = orbit.params
    forcing = (params.lambda_sq * params.potential.dv(orbit.thetas[:-1])).tolist()
    r = orbit.values.tolist()
    d = [float(d0)]
    for k in range(orbit.length):
        d.append(forcing[k] + d[k] / (r[k] * r[k]))
    return np.array(d)


def derivative_difference(orbit_r: ProjectiveOrbit, orbit_s: ProjectiveOrbit, k: int,
                          dr: Optional[np.ndarray] = None, ds: Optional[np.ndarray] = None) -> DerivativeDifference:
    """Reconstructs d(r_{k+1} - s_{k+1}) from stored products.

    d Delta_{k+1} = d Delta_0 prod_{i<=k} r_i^-2 + R_{0,k}, with
    R_{0,k} = -Delta_{k+1} sum_j Pi_{j+1,k}(s, r) d s_j (1/r_j + 1/s_j),
    and |R_{0,k}| <= 2 lambda^4 (k+1) max_j |d s_j|.

    Args:
        orbit_r (ProjectiveOrbit): Upper forward orbit.
        orbit_s (ProjectiveOrbit): Lower forward orbit over the same angles.
        k (int): Last step; both orbits must be recorded through k+1.
        dr (Optional[np.ndarray]): Theta-derivatives along orbit_r (zero seed when None).
        ds (Optional[np.ndarray]): Theta-derivatives along orbit_s.

    Returns:
        DerivativeDifference: The direct value, both terms and the bound.
    """
    _check_coupled(orbit_r, orbit_s, 0, k + 1)
    dr = theta_derivatives(orbit_r) if dr is None else np.asarray(dr, dtype=np.float64)
    ds = theta_derivatives(orbit_s) if ds is None else np.asarray(ds, dtype=np.float64)
    r = orbit_r.values[: k + 2]
    s = orbit_s.values[: k + 2]
    delta_next = r[k + 1] - s[k + 1]

    log_r2 = 2.0 * np.log(np.abs(r[: k + 1]))
    dominant = (dr[0] - ds[0]) * math.exp(-float(np.sum(log_r2))) if dr[0] != ds[0] else 0.0

    # log Pi_{j+1,k}(s, r) for j = 0..k; the j = k term is the empty product
    log_ratio = np.log(np.abs(s[: k + 1])) - np.log(np.abs(r[: k + 1]))
    tail = np.concatenate((np.cumsum(log_ratio[::-1])[::-1][1:], [0.0]))
    weights = np.exp(tail) * ds[: k + 1] * (1.0 / r[: k + 1] + 1.0 / s[: k + 1])
    remainder = -delta_next * float(np.sum(weights))

    lam4 = orbit_r.params.lambda_sq ** 2
    bound = 2.0 * lam4 * (k + 1) * float(np.max(np.abs(ds[: k + 1])))
    direct = float(dr[k + 1] - ds[k + 1])
    scale = abs(float(dr[k + 1])) + abs(float(ds[k + 1]))
    return DerivativeDifference(k, direct, dominant, remainder, bound, scale)


class GrowthDiagnostic:
    """min over alpha in [1, 2]^t of sum alpha_i log r_i against t (1 - 5 rho) log lambda.

    For the backward (contracting) form the max is compared against the negated bound.
    """

    def __init__(self, t: int, rho: float, log_product: float, log_bound: float, contracting: bool):
        self.t: int = t
        self.rho: float = rho
        self.log_product: float = log_product
        self.log_bound: float = log_bound
        self.contracting: bool = contracting

    @property
    def holds(self) -> bool:
        if self.contracting:
            return self.log_product <= self.log_bound
        return self.log_product >= self.log_bound

    def to_dict(self):
        return {"t": self.t, "rho": self.rho, "log_product": self.log_product, "log_bound": self.log_bound,
                "contracting": self.contracting, "holds": self.holds}


def growth_diagnostic(orbit: ProjectiveOrbit, t: Optional[int] = None, contracting: bool = False,
                      alphas: Optional[np.ndarray] = None) -> GrowthDiagnostic:
    """Exponent estimate along an orbit with bad-set frequency rho.

    Expanding form: steps with r_j < lambda (outside B^u from below) are bad.
    Contracting form: steps with r_j > 1/lambda (outside B^s from above) are bad.

    Without `alphas` the extremal weights in [1, 2] are used. With `alphas`
    (shape (t,) or (m, t), entries in [1, 2]) log_product is the worst
    weighted sum over the given rows.
    """
    t = orbit.length if t is None else t
    if t < 1:
        raise ValidationError("growth_diagnostic needs at least one step")
    bands = orbit.params.bands
    values = orbit.values[:t]
    logs = np.log(np.abs(values))
    log_lam = math.log(bands.lam)
    if alphas is not None:
        alphas = np.atleast_2d(np.asarray(alphas, dtype=np.float64))
        if alphas.shape[-1] != t or np.any(alphas < 1.0) or np.any(alphas > 2.0):
            raise ValidationError(f"alphas must have {t} columns with entries in [1, 2]")
        weighted = alphas @ logs
    if contracting:
        bad = ~bands.below_Bs_ceiling(values)
        if alphas is None:
            extreme = float(np.sum(np.where(logs > 0, 2.0 * logs, logs)))
        else:
            extreme = float(np.max(weighted))
        log_bound = -t * (1 - 5 * float(np.mean(bad))) * log_lam
    else:
        bad = ~bands.above_Bu_floor(values)
        if alphas is None:
            extreme = float(np.sum(np.where(logs < 0, 2.0 * logs, logs)))
        else:
            extreme = float(np.min(weighted))
        log_bound = t * (1 - 5 * float(np.mean(bad))) * log_lam
    return GrowthDiagnostic(t, float(np.mean(bad)), extreme, log_bound, contracting)


class SeparationFrequency:
    def __init__(self, t: int, frequency: float, separated: bool):
        self.t: int = t
        self.frequency: float = frequency
        self.bound: float = 2.0 / 3.0 + 3.0 / (2.0 * t)
        self.separated: bool = separated

    @property
    def holds(self) -> bool:
        return self.frequency <= self.bound

    def to_dict(self):
        return {"t": self.t, "frequency": self.frequency, "bound": self.bound,
                "separated": self.separated, "holds": self.holds}


def separation_frequency(orbit_r: ProjectiveOrbit, orbit_s: ProjectiveOrbit, t: Optional[int] = None) -> SeparationFrequency:
    """Fraction of j < t with r_j in B^s along a coupled pair.

    `separated` records whether r_0 - s_0 >= lambda^-7, the regime the
    2/3 + 3/(2t) bound speaks about.
    """
    t = min(orbit_r.length, orbit_s.length) if t is None else t
    _check_coupled(orbit_r, orbit_s, 0, max(t - 1, 0))
    bands = orbit_r.params.bands
    frequency = float(np.mean(bands.in_Bs(orbit_r.values[:t])))
    separated = orbit_r.r0 - orbit_s.r0 >= bands.lam ** -7
    return SeparationFrequency(t, frequency, separated)
