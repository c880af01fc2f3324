# This file makes Python treat the `rotation` directory as a package.

# Expose the rotation arithmetic used by the cocycle, curves and ladder packages
from .main import (
    RotationNumber,
    DiophantineConstants,
    continued_fraction,
    rotation_offsets,
    orbit_angles,
    estimate_diophantine,
    first_return_lower_bound,
    log_first_return_lower_bound,
    brute_force_first_return,
)
from .arcs import Arc, ArcSet, union_all, orbit_union
from .interval_systems import (
    IntervalSystem,
    VisitFrequency,
    empirical_visit_frequency,
    measure_system_constants,
    run_statistics,
    visit_mask,
)

__version__ = "0.1.0"
