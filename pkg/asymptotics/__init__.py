# This file makes Python treat the `asymptotics` directory as a package.

# Expose the edge search, the gap measurements and the fits of the two asymptotic laws
from .edge import EdgeEstimate, EdgePredicate, extrapolate_edge, find_edge
from .gap import GapProfile, WindowFit, fit_window, gap_profile, refine_minimum
from .fits import (
    LinearGapFit,
    NormExponentFit,
    SecondDifferenceCheck,
    epsilon_of_energy,
    epsilon_trace,
    fit_linear_gap,
    fit_norm_exponent,
    second_differences,
    trends_to_zero,
)
from .toy import ToyGrowth, toy_norm_growth
from .main import (
    EXTRA_COLUMNS,
    SWEEP_COLUMNS,
    AsymptoticsReport,
    DominantTermProfile,
    OffWindowFloor,
    build_report,
    collision_window,
    dominant_term_profile,
    energy_schedule,
    measure_energy,
    off_window_gap_floor,
)

__version__ = "0.1.0"
