# This file makes Python treat the `cocycle` directory as a package.

# Expose the cocycle, its projective dynamics and the orbit products
from .potential import PotentialSpec
from .utils import Bands, compute_c0, initial_interval
from .main import (
    CocycleParams,
    ProjectiveOrbit,
    fibre_step,
    fibre_unstep,
    RegionTransition,
    iterate_orbit,
    matrix_cocycle_norm,
    log_matrix_cocycle_norm,
    lyapunov_via_section,
    region_transition,
)
from .products import (
    DerivativeDifference,
    GrowthDiagnostic,
    SeparationFrequency,
    distance_product,
    distortion_product,
    distortion_lower_bound,
    derivative_difference,
    growth_diagnostic,
    separation_frequency,
    theta_derivatives,
)

__version__ = "0.1.0"
