"""Optimal safe feedback synthesis via barrier-constrained HJB equations."""

from .barriers import (
    BarrierSpec,
    CircleObstacle,
    ClassKappa,
    ConstraintData,
    HalfSpace,
    augmented_state_cost,
    constraint_data,
    constraint_value,
    in_safe_set,
    kkt_multiplier,
    min_norm_filter,
    projected_inverse_weight,
    psd_sqrt,
    psi_chain,
    safety_feedforward,
    weighted_normal,
)
from .basis import PolynomialBasis, make_poly_basis
from .controllers import (
    Controller,
    ExplicitController,
    LinearFeedbackController,
    MinNormController,
    SafeController,
    UnconstrainedController,
    ValueFunction,
    hjb_residual,
    min_norm_control,
    safe_control,
    unconstrained_control,
)
from .estimator import GalerkinHJBController, as_domain
from .exceptions import (
    ConfigError,
    DegenerateHOCBFError,
    DivergedError,
    InfeasibleFilterError,
    NonFiniteError,
    NonSPDError,
    NotPSDError,
    NotStabilizableError,
    SafeHJBError,
    SingularSystemError,
    UnsafeStartError,
)
from .galerkin import (
    GalerkinTensors,
    IterationConfig,
    IterationResult,
    NodeCache,
    assemble_controller_terms,
    assemble_safety_tensors,
    assemble_static,
    build_node_cache,
    lqr_gain,
    project_controller,
    riccati_solution,
    solve_constrained,
    solve_linear,
    solve_unconstrained,
    successive_approximation,
)
from .quadrature import QuadratureGrid, gauss_legendre_grid
from .simulate import (
    LyapunovReport,
    SafetyReport,
    SimConfig,
    Trajectory,
    lyapunov_report,
    rk4_step,
    safety_report,
    simulate,
)
from .systems import (
    ControlAffineSystem,
    DomainBox,
    LinearSystem,
    QuadraticStateCost,
    ScalarField,
    TwoInputBenchmark,
    lie_derivative,
    make_system,
    system_names,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
