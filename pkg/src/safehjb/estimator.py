"""Scikit-learn style front-end for controller synthesis.

``GalerkinHJBController`` packages the whole pipeline behind ``fit`` /
``predict`` / ``get_params`` so synthesized feedback laws compose with the
usual estimator tooling (cloning, parameter grids, pipelines that only
need ``predict``).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .basis import make_poly_basis
from .barriers import BarrierSpec
from .controllers import (
    Controller,
    LinearFeedbackController,
    MinNormController,
    SafeController,
    UnconstrainedController,
    ValueFunction,
)
from .galerkin import (
    IterationConfig,
    lqr_gain,
    solve_constrained,
    solve_unconstrained,
)
from .quadrature import gauss_legendre_grid
from .systems import (
    ControlAffineSystem,
    DomainBox,
    QuadraticStateCost,
    make_system,
)
from .validation import as_psd_weight_matrix, as_weight_matrix, check_states


def as_domain(value, n: int) -> DomainBox:
    """Coerce a half-width, an (lower, upper) pair, or a DomainBox."""
    if isinstance(value, DomainBox):
        if value.dim != n:
            raise ValueError(f"domain dimension {value.dim} does not match state dimension {n}")
        return value
    if np.isscalar(value):
        return DomainBox.cube(n, float(value))
    lower, upper = value
    if np.isscalar(lower):
        return DomainBox(float(lower) * np.ones(n), float(upper) * np.ones(n))
    return DomainBox(np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))


class GalerkinHJBController(BaseEstimator):
    """Synthesize an optimal (optionally barrier-constrained) feedback law.

    ``fit`` solves the infinite-horizon problem with running cost
    ``x^T Q x + u^T R u / 2`` over a box domain by Galerkin successive
    approximation. Without a barrier the result is the unconstrained
    optimal feedback; with one, the unconstrained solution is synthesized
    first, its min-norm filtering seeds the constrained iteration, and the
    fitted law enforces the barrier condition pointwise.

    Parameters
    ----------
    system : str or ControlAffineSystem, default="paper-example"
        Built-in system name or a model instance.
    state_weight : float or (n, n) array, default=1.0
        ``Q`` of the state cost ``x^T Q x``; scalars scale the identity.
    input_weight : float or (m, m) array, default=2.0
        ``R`` of the input cost ``u^T R u / 2``; must be positive definite.
    barrier : BarrierSpec or None, default=None
        Safety constraint; ``None`` synthesizes the unconstrained law.
    domain : float, pair or DomainBox, default=2.0
        Synthesis domain; a scalar means the centered cube of that half-width.
    d_min, d_max : int, default=2 and 6
        Total-degree range of the polynomial value-function basis.
    quad_order : int, default=8
        Gauss-Legendre points per dimension.
    max_iter : int, default=200
        Iteration cap of the successive-approximation loop.
    tol : float, default=1e-8
        Sup-norm coefficient change below which the iteration stops.
    activity_mode : {"per-iteration", "fixed"}, default="per-iteration"
        Whether the constraint-activity pattern is re-decided each pass or
        frozen from the initial controller.
    initial_control : Controller or None, default=None
        Stabilizing seed; defaults to the LQR law of the linearization.

    Attributes
    ----------
    coef_ : ndarray of shape (N,)
        Value-function coefficients of the fitted law.
    nominal_coef_ : ndarray of shape (N,)
        Coefficients of the unconstrained solution.
    controller_ : Controller
        The fitted feedback law (used by ``predict``).
    nominal_controller_, min_norm_controller_ : Controller
        Unconstrained law and its min-norm filtering (the latter only with
        a barrier).
    n_iter_ : int
        Iterations of the final (constrained, if any) solve.
    converged_ : bool
    history_ : ndarray
        Sup-norm coefficient change per iteration.
    active_fraction_ : ndarray
        Fraction of quadrature nodes with the constraint active, per iteration.
    """

    def __init__(self, system="paper-example", state_weight=1.0, input_weight=2.0,
                 barrier: BarrierSpec | None = None, domain=2.0, d_min=2, d_max=6,
                 quad_order=8, max_iter=200, tol=1e-8,
                 activity_mode="per-iteration",
                 initial_control: Controller | None = None):
        self.system = system
        self.state_weight = state_weight
        self.input_weight = input_weight
        self.barrier = barrier
        self.domain = domain
        self.d_min = d_min
        self.d_max = d_max
        self.quad_order = quad_order
        self.max_iter = max_iter
        self.tol = tol
        self.activity_mode = activity_mode
        self.initial_control = initial_control

    def fit(self, X=None, y=None):
        """Synthesize the feedback law. ``X`` and ``y`` are ignored.

        The problem is fully specified by the constructor parameters; the
        data arguments exist only for estimator-API compatibility.
        """
        system = self.system if isinstance(self.system, ControlAffineSystem) \
            else make_system(self.system)
        Q = as_psd_weight_matrix(self.state_weight, system.n, name="state_weight")
        R = as_weight_matrix(self.input_weight, system.m, name="input_weight")
        domain = as_domain(self.domain, system.n)
        basis = make_poly_basis(system.n, self.d_min, self.d_max)
        config = IterationConfig(self.quad_order, self.max_iter, self.tol,
                                 self.activity_mode)
        grid = gauss_legendre_grid(domain, self.quad_order)
        cost = QuadraticStateCost(Q)

        if self.initial_control is not None:
            u0 = self.initial_control
        else:
            u0 = LinearFeedbackController(lqr_gain(*system.linearize(), Q, R))

        nominal = solve_unconstrained(system, basis, cost, R, grid, u0, config)
        nominal_value = ValueFunction(basis, nominal.c)
        nominal_controller = UnconstrainedController(nominal_value, system, R)

        if self.barrier is None:
            result = nominal
            value = nominal_value
            controller: Controller = nominal_controller
            min_norm = None
        else:
            min_norm = MinNormController(nominal_controller, self.barrier, system)
            result = solve_constrained(system, basis, cost, R, grid, self.barrier,
                                       min_norm, config)
            value = ValueFunction(basis, result.c)
            controller = SafeController(value, self.barrier, system, R)

        self.system_ = system
        self.domain_ = domain
        self.basis_ = basis
        self.state_weight_ = Q
        self.input_weight_ = R
        self.state_cost_ = cost
        self.grid_ = grid
        self.coef_ = result.c
        self.nominal_coef_ = nominal.c
        self.value_ = value
        self.nominal_value_ = nominal_value
        self.controller_ = controller
        self.nominal_controller_ = nominal_controller
        self.min_norm_controller_ = min_norm
        self.result_ = result
        self.nominal_result_ = nominal
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        self.history_ = result.history
        self.active_fraction_ = result.active_fraction
        return self

    def predict(self, X) -> np.ndarray:
        """Evaluate the fitted feedback law at row states: (M, n) -> (M, m)."""
        check_is_fitted(self, "controller_")
        X = check_states(X, self.system_.n)
        return np.array([self.controller_.control(x) for x in X])

    def value(self, X) -> np.ndarray:
        """Evaluate the fitted cost-to-go at row states."""
        check_is_fitted(self, "value_")
        X = check_states(X, self.system_.n)
        return self.value_.value_batch(X)
