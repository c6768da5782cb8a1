"""Newton-type optimization of the LQR cost over linearly constrained stabilizing gains."""
from .config import DEFAULT_TOL, Tolerances
from .constraints import (
    Constraint,
    RestrictedGradient,
    frame_gram,
    restricted_gradient,
    restricted_hessian_matrix,
    tangential_projection,
)
from .errors import (
    ContractError,
    DimensionError,
    GenerationError,
    HessianNotPDError,
    InfeasibleStartError,
    NonConvergenceError,
    NotStabilizingError,
    NumericalError,
    RCNewtonError,
    UnstableMatrixError,
)
from .geometry import (
    ChristoffelTensor,
    PointData,
    christoffel,
    dY_table,
    gamma_contract,
    inverse_metric_coefficients,
    metric_coefficients,
    metric_inner,
    point_data,
)
from .kernels import (
    HewerResult,
    LyapunovSolver,
    Plant,
    dlyap,
    dlyap_differential,
    hewer_solve,
    is_stabilizing,
    pbh_controllable,
    pbh_stabilizable,
    spectral_radius,
    sym_extreme_eigs,
)
from .objective import Connection, cost, euclidean_hessian_matrix, gradient, hess_form, s_operator
from .optimizer import (
    IterationRecord,
    IterationTrace,
    Method,
    RunSettings,
    Status,
    hewer_trace,
    newton_direction,
    projected_gradient,
    qmap,
    rc_newton,
    run,
    stability_certificate,
)

__version__ = "0.1.0"
