"""Feedback laws built from value functions and barrier data.

All controllers expose the same evaluator signature ``u = controller(x)``
so the simulator does not care which kind it drives, plus
``control_and_multiplier`` for logging the constraint multiplier.
"""
from __future__ import annotations

import numpy as np

from .barriers import (
    BarrierSpec,
    augmented_state_cost,
    constraint_data,
    min_norm_filter,
    projected_inverse_weight,
    psd_sqrt,
    safety_feedforward,
    weighted_normal,
)
from .basis import PolynomialBasis
from .systems import ControlAffineSystem
from .validation import as_weight_matrix, check_states, check_vector


class ValueFunction:
    """Polynomial value function ``V(x) = sum_j c_j phi_j(x)`` with ``V(0) = 0``."""

    def __init__(self, basis: PolynomialBasis, coefficients):
        self.basis = basis
        self.c = check_vector(coefficients, basis.size, name="coefficients")

    def value(self, x) -> float:
        return float(self.basis.eval_one(x) @ self.c)

    def gradient(self, x) -> np.ndarray:
        return self.basis.grad_one(x).T @ self.c

    def value_batch(self, X) -> np.ndarray:
        return self.basis.eval(X) @ self.c

    def gradient_batch(self, X) -> np.ndarray:
        return np.einsum("mjn,j->mn", self.basis.grad(X), self.c)

    def __call__(self, x) -> float:
        return self.value(x)


class Controller:
    """Base state-feedback law; concrete classes implement :meth:`control`."""

    kind = "explicit"
    safety_aware = False

    def control(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def control_and_multiplier(self, x: np.ndarray) -> tuple[np.ndarray, float]:
        return self.control(x), 0.0

    def __call__(self, x) -> np.ndarray:
        return self.control(np.asarray(x, dtype=float))


class ExplicitController(Controller):
    def __init__(self, fn, m: int, kind: str = "explicit"):
        self.fn = fn
        self.m = int(m)
        self.kind = kind

    def control(self, x):
        return check_vector(self.fn(x), self.m, name="u")


class LinearFeedbackController(Controller):
    """``u = -K x``; the usual seed for the synthesis iteration."""

    kind = "linear-feedback"

    def __init__(self, K):
        self.K = np.atleast_2d(np.asarray(K, dtype=float))

    def control(self, x):
        return -self.K @ x


class UnconstrainedController(Controller):
    """Gradient feedback ``u = -R^-1 g(x)^T grad V(x)``."""

    kind = "unconstrained"

    def __init__(self, value_fn: ValueFunction, system: ControlAffineSystem, input_weight):
        self.value_fn = value_fn
        self.system = system
        self.R = as_weight_matrix(input_weight, system.m, name="input_weight")
        self._Rinv = np.linalg.inv(self.R)

    def control(self, x):
        grad = self.value_fn.gradient(x)
        g = np.asarray(self.system.g(x), dtype=float).reshape(self.system.n, self.system.m)
        return -self._Rinv @ (grad @ g)


class SafeController(Controller):
    """Barrier-constrained optimal feedback.

    Where the constraint is inactive this is exactly the unconstrained
    gradient feedback; where it binds, the KKT correction ``lambda * eta``
    pushes the control onto the constraint boundary.
    """

    kind = "safe-optimal"
    safety_aware = True

    def __init__(self, value_fn: ValueFunction, barrier: BarrierSpec,
                 system: ControlAffineSystem, input_weight):
        self.value_fn = value_fn
        self.barrier = barrier
        self.system = system
        self.R = as_weight_matrix(input_weight, system.m, name="input_weight")
        self._Rinv = np.linalg.inv(self.R)

    def control_and_multiplier(self, x):
        grad = self.value_fn.gradient(x)
        g = np.asarray(self.system.g(x), dtype=float).reshape(self.system.n, self.system.m)
        u_free = -self._Rinv @ (grad @ g)
        data = constraint_data(self.barrier, self.system, x)
        slack = data.b + float(data.a @ u_free)
        if slack >= 0.0:
            return u_free, 0.0
        eta, H = weighted_normal(data, self.R)
        lam = -slack / H
        return u_free + lam * eta, lam

    def control(self, x):
        return self.control_and_multiplier(x)[0]


class MinNormController(Controller):
    """Pointwise projection of a nominal law onto the safe half-space."""

    kind = "min-norm"
    safety_aware = True

    def __init__(self, nominal: Controller, barrier: BarrierSpec, system: ControlAffineSystem):
        self.nominal = nominal
        self.barrier = barrier
        self.system = system

    def control_and_multiplier(self, x):
        u_nom = self.nominal.control(x)
        data = constraint_data(self.barrier, self.system, x)
        slack = data.b + float(data.a @ u_nom)
        if slack >= 0.0:
            return u_nom, 0.0
        u = min_norm_filter(data, u_nom)
        return u, -slack / float(data.a @ data.a)

    def control(self, x):
        return self.control_and_multiplier(x)[0]


def unconstrained_control(value_fn: ValueFunction, system: ControlAffineSystem,
                          input_weight, x) -> np.ndarray:
    x = check_vector(x, system.n, name="x")
    R = as_weight_matrix(input_weight, system.m, name="input_weight")
    grad = value_fn.gradient(x)
    g = np.asarray(system.g(x), dtype=float).reshape(system.n, system.m)
    return -np.linalg.inv(R) @ (grad @ g)


def safe_control(value_fn: ValueFunction, barrier: BarrierSpec,
                 system: ControlAffineSystem, input_weight, x) -> tuple[np.ndarray, float]:
    """Constrained-optimal control and its multiplier at one state.

    Algebraically identical on the active branch to
    ``-(Rbar g^T grad V + feedforward)``; the KKT form used here stays exact
    for inactive states as well.
    """
    return SafeController(value_fn, barrier, system, input_weight).control_and_multiplier(x)


def min_norm_control(nominal: Controller, barrier: BarrierSpec,
                     system: ControlAffineSystem, x) -> np.ndarray:
    return MinNormController(nominal, barrier, system).control(x)


def hjb_residual(value_fn: ValueFunction, system: ControlAffineSystem, state_cost,
                 input_weight, x, barrier: BarrierSpec | None = None,
                 form: str = "direct") -> float:
    """Pointwise residual of the (constrained) HJB equation at ``x``.

    ``form='direct'`` evaluates the generalized HJB at the safe control,
    which adds ``lambda^2 H / 2`` to the unconstrained residual on the
    active branch. ``form='transformed'`` evaluates the equivalent equation
    in the shifted drift / projected weight / augmented cost variables
    (scaled by one half so both forms agree identically). Off the active
    branch both reduce to the unconstrained residual.
    """
    if form not in ("direct", "transformed"):
        raise ValueError("form must be 'direct' or 'transformed'")
    x = check_vector(x, system.n, name="x")
    R = as_weight_matrix(input_weight, system.m, name="input_weight")
    grad = value_fn.gradient(x)
    f = np.asarray(system.f(x), dtype=float)
    g = np.asarray(system.g(x), dtype=float).reshape(system.n, system.m)
    LgV = grad @ g
    q = float(state_cost(x))
    unconstrained = float(grad @ f) - 0.5 * float(LgV @ np.linalg.solve(R, LgV)) + q
    if barrier is None:
        return unconstrained
    data = constraint_data(barrier, system, x)
    slack = data.b + float(data.a @ (-np.linalg.solve(R, LgV)))
    if slack >= 0.0:
        return unconstrained
    if form == "direct":
        _, H = weighted_normal(data, R)
        lam = -slack / H
        return unconstrained + 0.5 * lam * lam * H
    shifted_drift = f - g @ safety_feedforward(data, R)
    g_bar = g @ psd_sqrt(projected_inverse_weight(data, R))
    Lgbar = grad @ g_bar
    q_bar = augmented_state_cost(data, R, q)
    return float(grad @ shifted_drift) - 0.5 * float(Lgbar @ Lgbar) + 0.5 * q_bar


def value_eval(value_fn: ValueFunction, x) -> float:
    return value_fn.value(x)


def value_grad(value_fn: ValueFunction, x) -> np.ndarray:
    return value_fn.gradient(x)
