# This file makes Python treat the `curves` directory as a package.

# Expose the invariant sections psi^u, psi^s and their checks
from .recursions import STABLE, UNSTABLE, Pullback, pullback, pullback_mp
from .main import (
    CURVE_COLUMNS,
    CurvePoint,
    CurveSettings,
    InvariantCurve,
    compute_curves,
    curve_frame,
    curve_norms,
    evaluate_points,
    evaluate_stable,
    evaluate_unstable,
    gap_at,
    gap_on_grid,
    is_ordered,
)
from .checks import (
    DerivativeBoundReport,
    DerivativeCheck,
    derivative_bound_check,
    derivative_recursion_check,
    mirror_identity_defect,
)

__version__ = "0.1.0"
