# This file makes Python treat the `ladder` directory as a package.

# Expose the scale ladder, its regions, the condition checks and the stopping times
from .main import (
    LadderLevel,
    RegionMembership,
    RegionSet,
    ScaleLadder,
    build_ladder,
    region_membership,
    region_set,
)
from .conditions import (
    BoxImage,
    C1Report,
    box_images,
    box_separation,
    box_touching_energy,
    boxes_disjoint,
    check_condition_C1,
    check_condition_C2,
)
from .stopping import (
    GrowthCheck,
    SigmaStatistics,
    StoppingTimes,
    growth_check,
    inflated_region,
    return_separation,
    select_critical_interval,
    sigma_statistics,
    stopping_times,
)

__version__ = "0.1.0"
