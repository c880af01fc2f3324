"""Shared fixtures. The reference cocycle is the cosine potential with
lambda^2 = 30 over the rotation (sqrt(5) - 1)/4."""
import os
import sys

_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, _ROOT)
os.environ.setdefault("COCYCLE_LAB_ENV", "testing")

import numpy as np
import pytest

from rotation import RotationNumber

REFERENCE_OMEGA = "(sqrt(5)-1)/4"
REFERENCE_LAMBDA_SQ = 30.0


@pytest.fixture(scope="session")
def omega():
    return RotationNumber.from_expression(REFERENCE_OMEGA)


@pytest.fixture(scope="session")
def golden():
    return RotationNumber.from_expression("(sqrt(5)-1)/2")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cosine():
    from cocycle import PotentialSpec
    return PotentialSpec.cosine(1.0)


@pytest.fixture(scope="session")
def reference_params(omega, cosine):
    """Reference cocycle at E = -2, well below the lowest spectral edge."""
    from cocycle import CocycleParams
    return CocycleParams(cosine, REFERENCE_LAMBDA_SQ, -2.0, omega)


@pytest.fixture(scope="session")
def collision_curves(reference_params):
    """Curves at an energy just below the edge, with min d below lambda^-3.

    Damped Newton steps on min d(E), using d_E at the argmin as the slope.
    """
    from curves import CurveSettings, compute_curves, gap_on_grid
    threshold = reference_params.lam ** -3
    E = -0.2
    for _ in range(12):
        params = reference_params.with_energy(E)
        curve_u, curve_s = compute_curves(params, CurveSettings.for_params(params, base_points=1024, refine_depth=2))
        gap = gap_on_grid(curve_u, curve_s)
        i = int(np.argmin(gap))
        if gap[i] < 0.5 * threshold:
            return curve_u, curve_s
        slope = abs(curve_u.d_E[i] - curve_s.d_E[i])
        E += 0.8 * gap[i] / slope
    raise RuntimeError("no energy with min d below lambda^-3 / 2")
