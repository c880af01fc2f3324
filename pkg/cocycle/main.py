import logging
import math
from typing import Callable, Optional, Tuple, Union

import numpy as np

from cocycle.potential import PotentialSpec
from cocycle.utils import Bands, compute_c0, initial_interval
from errors import InvalidSection, NoConvergence, PoleHit, ScaleOverflow, ValidationError
from rotation.main import RotationNumber, orbit_angles

logger = logging.getLogger(__name__)

RENORMALIZE_AT = 1e100
MAX_HORIZON = 1 << 24


class CocycleParams:
    """One Schrodinger cocycle A_E(theta) = [[0, 1], [-1, lambda^2 v(theta) - E]]
    over the rotation omega. E is measured in the potential's working frame."""

    def __init__(self, potential: PotentialSpec, lambda_sq: float, E: float, omega: RotationNumber):
        if not lambda_sq > 0:
            raise ValidationError(f"lambda_sq must be positive, got {lambda_sq}")
        self.potential: PotentialSpec = potential
        self.lambda_sq: float = float(lambda_sq)
        self.E: float = float(E)
        self.omega: RotationNumber = omega
        self.lam: float = math.sqrt(self.lambda_sq)
        self.bands: Bands = Bands(self.lam)

    def a(self, theta):
        """Trace entry lambda^2 v(theta) - E."""
        return self.lambda_sq * self.potential.v(theta) - self.E

    def with_energy(self, E) -> "CocycleParams":
        return CocycleParams(self.potential, self.lambda_sq, E, self.omega)

    @property
    def raw_energy(self) -> float:
        """E in the frame of the potential as given (before normalization)."""
        return self.E + self.lambda_sq * self.potential.v_min if self.potential.normalize else self.E

    def same_cocycle(self, other: "CocycleParams") -> bool:
        return (self.potential is other.potential and self.lambda_sq == other.lambda_sq
                and self.E == other.E and self.omega == other.omega)

    def to_dict(self):
        return {"lambda_sq": self.lambda_sq, "E": self.E, "raw_E": self.raw_energy,
                "omega": self.omega.omega, "omega_text": self.omega.text,
                "potential": self.potential.to_dict()}

    def __str__(self):
        return f"CocycleParams(lambda_sq={self.lambda_sq!r}, E={self.E!r}, omega={self.omega.text})"


def fibre_step(theta, r, params: CocycleParams):
    """Projective action r -> lambda^2 v(theta) - E - 1/r of the cocycle on the chart (1, r)."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(r == 0):
        raise PoleHit("Direction (0, 1) reached: r = 0 in fibre_step", theta=_first(theta, r == 0))
    result = params.a(theta) - 1.0 / r
    return float(result) if result.ndim == 0 else result


def fibre_unstep(theta, r_next, params: CocycleParams):
    """Inverse of fibre_step: r = 1 / (lambda^2 v(theta) - E - r_next)."""
    denominator = params.a(theta) - np.asarray(r_next, dtype=np.float64)
    if np.any(denominator == 0):
        raise PoleHit("Pole of the inverse fibre map", theta=_first(theta, denominator == 0))
    result = 1.0 / denominator
    return float(result) if np.ndim(result) == 0 else result


def _first(theta, mask):
    theta = np.broadcast_to(np.asarray(theta, dtype=np.float64), np.shape(mask))
    return float(theta[mask][0]) if theta.ndim else float(theta)


class ProjectiveOrbit:
    """Recorded orbit (theta_k, r_k), k = 0..length, of the projective map.

    Forward orbits have theta_k = theta0 + k omega; backward ones theta0 - k omega
    with r_k the direction at theta_k.
    """

    def __init__(self, theta0: float, values: np.ndarray, thetas: np.ndarray, params: CocycleParams,
                 direction: int = 1):
        self.theta0: float = theta0
        self.values: np.ndarray = values
        self.thetas: np.ndarray = thetas
        self.params: CocycleParams = params
        self.direction: int = direction

    @property
    def r0(self) -> float:
        return float(self.values[0])

    @property
    def length(self) -> int:
        return len(self.values) - 1

    @property
    def log_terms(self) -> np.ndarray:
        return np.log(np.abs(self.values))

    def replay_defects(self) -> np.ndarray:
        """Relative defect of each recorded step against the fibre map."""
        if self.direction > 0:
            expected = self.params.a(self.thetas[:-1]) - 1.0 / self.values[:-1]
            actual = self.values[1:]
        else:
            expected = self.params.a(self.thetas[1:]) - 1.0 / self.values[1:]
            actual = self.values[:-1]
        return np.abs(actual - expected) / np.maximum(np.abs(expected), 1.0)

    def truncated(self, length: int) -> "ProjectiveOrbit":
        return ProjectiveOrbit(self.theta0, self.values[: length + 1], self.thetas[: length + 1], self.params,
                               self.direction)

    def first_exit(self, inside: Callable) -> Optional[int]:
        """Index of the first value outside the given band predicate, or None."""
        outside = np.nonzero(~inside(self.values))[0]
        return int(outside[0]) if outside.size else None


def iterate_orbit(theta0: float, r0: float, n: int, params: CocycleParams, direction: int = 1,
                  fault_step: Optional[int] = None) -> ProjectiveOrbit:
    """Iterates the fibre map n steps forward (direction=1) or its inverse backward.

    Args:
        theta0 (float): Base angle.
        r0 (float): Initial direction.
        n (int): Number of steps.
        params (CocycleParams): The cocycle.
        direction (int): 1 forward, -1 backward.
        fault_step (Optional[int]): Test hook; corrupts the value produced at this step.

    Returns:
        ProjectiveOrbit: The recorded orbit.
    """
    if not 0 <= n <= MAX_HORIZON:
        raise ValidationError(f"orbit length must lie in [0, {MAX_HORIZON}], got {n}")
    thetas = orbit_angles(theta0, n, params.omega, direction)
    a = params.a(thetas).tolist()
    values = [float(r0)]
    r = float(r0)
    for k in range(n):
        if direction > 0:
            if r == 0.0:
                raise PoleHit("Orbit reached r = 0", theta=float(thetas[k]), step=k)
            r = a[k] - 1.0 / r
        else:
            denominator = a[k + 1] - r
            if denominator == 0.0:
                raise PoleHit("Backward orbit hit a pole", theta=float(thetas[k + 1]), step=k)
            r = 1.0 / denominator
        if fault_step is not None and k + 1 == fault_step:
            r *= 1.0 + 1e-6
        values.append(r)
    return ProjectiveOrbit(float(theta0), np.array(values), thetas, params, direction)


class RegionTransition:
    """One-step landing of B \\ B^s off I_0 (forward) or of B \\ B^u off I_0 + omega (backward).

    Forward the target is B^u = [lambda, lambda^2]; backward it is B^s = [lambda^-2, lambda^-1].
    `inner` counts landings on the wrong side of lambda (forward) or 1/lambda
    (backward); `outer` counts overshoots past lambda^2 or below lambda^-2,
    which happen whenever sup lambda^2 v exceeds lambda^2.
    """

    def __init__(self, direction: int, samples: int, inner: int, outer: int, margin: float,
                 counterexample: Optional[dict] = None):
        self.direction: int = direction
        self.samples: int = samples
        self.inner: int = inner
        self.outer: int = outer
        self.margin: float = margin
        self.counterexample: Optional[dict] = counterexample

    @property
    def holds(self) -> bool:
        return self.inner == 0

    def to_dict(self):
        return {"direction": self.direction, "samples": self.samples, "inner": self.inner, "outer": self.outer,
                "margin": self.margin, "holds": self.holds, "counterexample": self.counterexample}


def region_transition(params: CocycleParams, rng: np.random.Generator, samples: int = 10_000,
                      energies: Tuple[float, float] = (-1.0, 1.0), direction: int = 1) -> RegionTransition:
    """Samples (theta0, z0, E) and takes one fibre step forward, or one inverse step backward.

    theta0 is uniform off I_0 (off I_0 + omega backward), log z0 uniform in
    B \\ B^s (in B \\ B^u backward), E uniform in `energies`. params.E is ignored.

    Returns:
        RegionTransition: margin is min z1 / lambda forward and min 1 / (lambda z1) backward;
        it is >= 1 exactly when the inner inequality holds on every sample.
    """
    lam = params.lam
    bands = params.bands
    interval = initial_interval(compute_c0(params.potential, lam), lam)
    if direction < 0:
        interval = interval.shifted(params.omega.omega)
    thetas = np.empty(0)
    while thetas.size < samples:
        candidates = rng.uniform(0.0, 1.0, 2 * samples)
        thetas = np.concatenate([thetas, candidates[~interval.contains(candidates)]])
    thetas = thetas[:samples]
    energy = rng.uniform(energies[0], energies[1], samples)
    # E varies per sample, so it is applied to z rather than through params
    base = params.with_energy(0.0)
    if direction > 0:
        z0 = np.exp(rng.uniform(-math.log(lam), math.log(bands.upper), samples))
        z1 = fibre_step(thetas, z0, base) - energy
        ratio = z1 / lam
        outer = int(np.count_nonzero(z1 > bands.upper))
    else:
        z0 = np.exp(rng.uniform(math.log(bands.lower), math.log(lam), samples))
        z1 = fibre_unstep(np.mod(thetas - params.omega.omega, 1.0), z0 + energy, base)
        ratio = np.where(z1 > 0, 1.0 / (lam * np.abs(z1)), 0.0)
        outer = int(np.count_nonzero((z1 > 0) & (z1 < bands.lower)))
    bad = ratio < 1.0
    i = int(np.argmin(ratio))
    counterexample = None
    if np.any(bad):
        j = int(np.argmax(bad))
        counterexample = {"theta0": float(thetas[j]), "z0": float(z0[j]), "E": float(energy[j]), "z1": float(z1[j])}
    result = RegionTransition(direction, samples, int(np.count_nonzero(bad)), outer, float(ratio[i]), counterexample)
    logger.debug(f"Region transition ({'forward' if direction > 0 else 'backward'}): {result.to_dict()}")
    return result


def log_matrix_cocycle_norm(theta0: float, n: int, params: CocycleParams) -> float:
    """log ||A^n(theta0)||, renormalizing the running product.

    For n < 0 the product of inverses A(theta0 + n omega)^-1 ... A(theta0 - omega)^-1.
    """
    if abs(n) > MAX_HORIZON:
        raise ValidationError(f"|n| must not exceed {MAX_HORIZON}, got {n}")
    if n == 0:
        return 0.0
    steps = abs(n)
    if n > 0:
        a = params.a(orbit_angles(theta0, steps - 1, params.omega, 1)).tolist()
    else:
        a = params.a(orbit_angles(theta0, steps, params.omega, -1)[1:]).tolist()
    m00, m01, m10, m11 = 1.0, 0.0, 0.0, 1.0
    log_scale = 0.0
    for ak in a:
        if n > 0:
            # [[0, 1], [-1, a]] @ M
            m00, m01, m10, m11 = m10, m11, ak * m10 - m00, ak * m11 - m01
        else:
            # [[a, -1], [1, 0]] @ M
            m00, m01, m10, m11 = ak * m00 - m10, ak * m01 - m11, m00, m01
        size = max(abs(m00), abs(m01), abs(m10), abs(m11))
        if size > RENORMALIZE_AT:
            m00, m01, m10, m11 = m00 / size, m01 / size, m10 / size, m11 / size
            log_scale += math.log(size)
    if not math.isfinite(log_scale) or not all(map(math.isfinite, (m00, m01, m10, m11))):
        raise ScaleOverflow(f"Matrix product overflowed within one renormalization period", n=n)
    norm = float(np.linalg.norm(np.array([[m00, m01], [m10, m11]]), 2))
    return log_scale + math.log(norm)


def matrix_cocycle_norm(theta0: float, n: int, params: CocycleParams) -> float:
    """Operator norm ||A^n(theta0)||; ScaleOverflow when it exceeds binary64."""
    log_norm = log_matrix_cocycle_norm(theta0, n, params)
    try:
        return math.exp(log_norm)
    except OverflowError:
        raise ScaleOverflow(f"||A^{n}|| = exp({log_norm:.6g}) overflows binary64", n=n, log_norm=log_norm)


SectionLike = Union[Callable[[np.ndarray], np.ndarray], object]


def lyapunov_via_section(section: SectionLike, n_samples: int, burn_in: int = 0, theta0: float = 0.0,
                         omega: Optional[RotationNumber] = None) -> float:
    """Birkhoff average of log psi(theta_k) along a rotation orbit.

    A(theta)(1, psi(theta)) = psi(theta) (1, psi(theta + omega)) for an invariant
    section, so the average is the Lyapunov exponent.

    Args:
        section: An InvariantCurve (unstable) or a vectorised callable theta -> psi.
        n_samples (int): Number of averaged orbit points.
        burn_in (int): Orbit points skipped first.
        theta0 (float): Start of the orbit.
        omega (Optional[RotationNumber]): Needed when section is a bare callable.

    Returns:
        float: The estimate of L(E).
    """
    if n_samples < 1:
        raise ValidationError(f"n_samples must be >= 1, got {n_samples}")
    if hasattr(section, "evaluate"):
        if not getattr(section, "converged", True):
            raise NoConvergence("lyapunov_via_section needs a converged curve")
        omega = omega or section.params.omega
        evaluate = section.evaluate
    else:
        if omega is None:
            raise ValidationError("omega is required with a callable section")
        evaluate = section
    chunk = 1 << 16
    logs = []
    total = burn_in + n_samples
    for start in range(burn_in, total, chunk):
        count = min(chunk, total - start)
        thetas = np.mod(omega.shift(theta0, start) + orbit_angles(0.0, count - 1, omega), 1.0)
        values = np.asarray(evaluate(thetas), dtype=np.float64)
        if np.any(values <= 0) or not np.all(np.isfinite(values)):
            bad = int(np.nonzero((values <= 0) | ~np.isfinite(values))[0][0])
            raise InvalidSection("Section value is not positive", theta=float(thetas[bad]), value=float(values[bad]))
        logs.append(np.log(values))
    return float(np.sum(np.concatenate(logs))) / n_samples
