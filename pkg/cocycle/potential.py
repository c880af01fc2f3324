"""Circle potentials v with a unique non-degenerate minimum.

The working potential is the raw one shifted so that its minimum sits at
theta = 0 with value 0. Energies elsewhere in the lab live in that frame:
a raw energy is E + lambda_sq * v_min.
"""
import logging
import math

import numpy as np
import pandas as pd
from mpmath import mp
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from errors import InvalidPotential

logger = logging.getLogger(__name__)

MIN_SEARCH_POINTS = 4096
UNIQUENESS_RADIUS = 0.05


def _wrap(theta):
    """Reduces to [-1/2, 1/2)."""
    return np.mod(np.asarray(theta, dtype=np.float64) + 0.5, 1.0) - 0.5


class PotentialSpec:
    """v, v', v'' of a C^2 circle function.

    Use the constructors `cosine`, `tabulated` and `constant`. With
    `normalize=True` the functions below evaluate the working potential.
    """

    def __init__(self, kind: str, theta_min: float, v_min: float, normalize: bool):
        self.kind: str = kind
        self.theta_min: float = theta_min
        self.v_min: float = v_min
        self.normalize: bool = normalize

    # raw functions, overridden per kind
    def _raw(self, theta, order: int):
        raise NotImplementedError

    def v(self, theta):
        if self.normalize:
            return self._raw(np.asarray(theta) + self.theta_min, 0) - self.v_min
        return self._raw(theta, 0)

    def dv(self, theta):
        return self._raw(np.asarray(theta) + self.theta_min, 1) if self.normalize else self._raw(theta, 1)

    def d2v(self, theta):
        return self._raw(np.asarray(theta) + self.theta_min, 2) if self.normalize else self._raw(theta, 2)

    def v_mp(self, theta):
        """v at an mpmath angle; kinds without a closed form go through binary64."""
        return mp.mpf(float(self.v(float(mp.frac(theta)))))

    @property
    def frame_min(self) -> float:
        """Angle of the minimum in the frame v() is evaluated in."""
        return 0.0 if self.normalize else self.theta_min

    @property
    def curvature(self) -> float:
        """v''(theta_min)."""
        return float(self.d2v(self.frame_min))

    @property
    def is_even(self) -> bool:
        return self.kind == "cosine"

    def sup(self, points: int = MIN_SEARCH_POINTS) -> float:
        return float(np.max(self.v(np.arange(points) / points)))

    def verify(self, points: int = MIN_SEARCH_POINTS) -> None:
        """Checks the minimum is unique and non-degenerate on a probe grid."""
        if self.kind == "constant":
            return
        if self.curvature <= 0:
            raise InvalidPotential(f"v''(theta_min) = {self.curvature} is not positive", kind=self.kind)
        theta = np.arange(points) / points
        values = self.v(theta)
        v_at_min = float(self.v(self.frame_min))
        far = np.abs(_wrap(theta - self.frame_min)) > UNIQUENESS_RADIUS
        scale = max(1.0, float(values.max() - values.min()))
        j = np.nonzero(far)[0][np.argmin(values[far])]
        h = 1.0 / points
        rival = minimize_scalar(lambda t: float(self.v(t)), bounds=(theta[j] - h, theta[j] + h),
                                method="bounded", options={"xatol": 1e-12})
        if min(rival.fun, values[j]) <= v_at_min + 1e-9 * scale:
            raise InvalidPotential("Potential minimum is not unique", kind=self.kind,
                                   theta_min=self.theta_min, rival=float(theta[j]))

    def to_dict(self):
        return {"kind": self.kind, "theta_min": self.theta_min, "v_min": self.v_min,
                "normalize": self.normalize, "curvature": self.curvature}

    def __str__(self):
        return f"PotentialSpec({self.kind}, theta_min={self.theta_min!r}, v_min={self.v_min!r}, normalize={self.normalize})"

    # --- constructors ---

    @staticmethod
    def cosine(amplitude: float = 1.0, normalize: bool = True) -> "PotentialSpec":
        return CosinePotential(amplitude, normalize)

    @staticmethod
    def constant(value: float = 0.0) -> "PotentialSpec":
        return ConstantPotential(value)

    @staticmethod
    def tabulated(theta, values, normalize: bool = True) -> "PotentialSpec":
        return TabulatedPotential(theta, values, normalize)

    @staticmethod
    def from_table(path: str, normalize: bool = True) -> "PotentialSpec":
        """Reads a two-column (theta, v) table; comma or whitespace separated."""
        try:
            df = pd.read_csv(path, comment="#", header=None, sep=r"[,\s]+", engine="python")
        except (OSError, ValueError) as e:
            raise InvalidPotential(f"Cannot read potential table {path}: {e}")
        if df.shape[1] < 2:
            raise InvalidPotential(f"Potential table {path} needs two columns, found {df.shape[1]}")
        return TabulatedPotential(df.iloc[:, 0].to_numpy(float), df.iloc[:, 1].to_numpy(float), normalize)

    @staticmethod
    def from_settings(settings) -> "PotentialSpec":
        """Builds the potential of a RunConfig [potential] section."""
        if settings.kind == "cosine":
            potential = PotentialSpec.cosine(settings.amplitude, settings.normalize)
        elif settings.kind == "tabulated":
            if not settings.table_path:
                raise InvalidPotential("tabulated potential needs table_path")
            potential = PotentialSpec.from_table(settings.table_path, settings.normalize)
        else:
            if settings.normalize:
                raise InvalidPotential("A constant potential has no unique minimum and cannot be normalized; "
                                       "set normalize = false")
            potential = PotentialSpec.constant(settings.constant)
        logger.info(f"Using {potential}")
        return potential


class CosinePotential(PotentialSpec):
    """v = a cos(2 pi theta); minimum -a at theta = 1/2."""

    def __init__(self, amplitude: float, normalize: bool):
        if amplitude <= 0:
            raise InvalidPotential(f"cosine amplitude must be positive, got {amplitude}")
        super().__init__("cosine", 0.5, -amplitude, normalize)
        self.amplitude: float = amplitude

    def _raw(self, theta, order):
        x = 2 * math.pi * np.asarray(theta, dtype=np.float64)
        a = self.amplitude
        if order == 0:
            return a * np.cos(x)
        if order == 1:
            return -2 * math.pi * a * np.sin(x)
        return -4 * math.pi ** 2 * a * np.cos(x)

    # The working potential is written with sin(pi phi) so it has no
    # cancellation near the minimum: a(1 - cos 2 pi phi) = 2a sin^2(pi phi).
    def v(self, theta):
        if not self.normalize:
            return self._raw(theta, 0)
        s = np.sin(math.pi * np.asarray(theta, dtype=np.float64))
        return 2 * self.amplitude * s * s

    def dv(self, theta):
        if not self.normalize:
            return self._raw(theta, 1)
        phi = math.pi * np.asarray(theta, dtype=np.float64)
        return 4 * math.pi * self.amplitude * np.sin(phi) * np.cos(phi)

    def d2v(self, theta):
        if not self.normalize:
            return self._raw(theta, 2)
        s = np.sin(math.pi * np.asarray(theta, dtype=np.float64))
        return 4 * math.pi ** 2 * self.amplitude * (1 - 2 * s * s)

    def v_mp(self, theta):
        if not self.normalize:
            return self.amplitude * mp.cos(2 * mp.pi * theta)
        s = mp.sin(mp.pi * theta)
        return 2 * self.amplitude * s * s

    def to_dict(self):
        return {**super().to_dict(), "amplitude": self.amplitude}


class ConstantPotential(PotentialSpec):
    def __init__(self, value: float):
        super().__init__("constant", 0.0, value, False)
        self.value: float = value

    def _raw(self, theta, order):
        theta = np.asarray(theta, dtype=np.float64)
        return np.full(theta.shape, self.value if order == 0 else 0.0)

    @property
    def curvature(self) -> float:
        return 0.0


class TabulatedPotential(PotentialSpec):
    """Periodic cubic spline through (theta_i, v_i) samples of one period."""

    def __init__(self, theta, values, normalize: bool):
        theta = np.asarray(theta, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if theta.size < 8 or theta.shape != values.shape:
            raise InvalidPotential("tabulated potential needs at least 8 (theta, v) pairs")
        order = np.argsort(theta)
        theta, values = theta[order], values[order]
        if np.any(np.diff(theta) <= 0) or theta[-1] - theta[0] > 1:
            raise InvalidPotential("table angles must be distinct and span at most one period")
        if theta[-1] - theta[0] < 1:
            theta = np.append(theta, theta[0] + 1.0)
            values = np.append(values, values[0])
        elif values[-1] != values[0]:
            raise InvalidPotential("table endpoints one period apart must carry equal values")
        self._origin = float(theta[0])
        self._spline = CubicSpline(theta, values, bc_type="periodic")
        theta_min, v_min = self._locate_minimum()
        super().__init__("tabulated", theta_min, v_min, normalize)
        self.verify()

    def _raw(self, theta, order):
        x = self._origin + np.mod(np.asarray(theta, dtype=np.float64) - self._origin, 1.0)
        return self._spline(x, order) if order else self._spline(x)

    def _locate_minimum(self):
        grid = self._origin + np.arange(MIN_SEARCH_POINTS) / MIN_SEARCH_POINTS
        values = self._spline(grid)
        i = int(np.argmin(values))
        h = 1.0 / MIN_SEARCH_POINTS
        result = minimize_scalar(lambda t: float(self._raw(t, 0)), bounds=(grid[i] - h, grid[i] + h),
                                 method="bounded", options={"xatol": 1e-14})
        theta_min = float(np.mod(result.x, 1.0))
        return theta_min, float(self._raw(theta_min, 0))
