"""Control-affine system models and Lie-derivative evaluation.

Systems are ``dx/dt = f(x) + g(x) u`` with drift ``f`` and input map ``g``.
Everything here is pure and immutable after construction, so evaluators are
safe to share between threads and processes.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .validation import as_float_array, check_matrix, check_vector

FD_STEP_SCALE = 1e-5
NESTED_FD_WARN_ORDER = 2


def fd_step(x: np.ndarray) -> float:
    """Central-difference step: 1e-5 scaled by the sup-norm of the point."""
    return FD_STEP_SCALE * max(1.0, float(np.max(np.abs(x))))


def finite_difference_gradient(fn, x: np.ndarray, step: float | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = fd_step(x) if step is None else step
    if h <= 0.0 or x.size and not np.isfinite(h):
        raise ValueError("finite-difference step underflowed")
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (fn(xp) - fn(xm)) / (2.0 * h)
    return grad


class ScalarField:
    """A scalar function of the state with an optional analytic gradient.

    Subclasses override :meth:`value`; those that know their gradient also
    override :meth:`gradient` and set ``has_analytic_gradient``. The default
    gradient is a central finite difference of :meth:`value`.
    """

    has_analytic_gradient = False
    fd_depth = 0

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return finite_difference_gradient(self.value, np.asarray(x, dtype=float))

    def __call__(self, x) -> float:
        return self.value(np.asarray(x, dtype=float))


class CallableField(ScalarField):
    """Wrap plain callables as a field; ``grad_fn`` is optional."""

    def __init__(self, value_fn, grad_fn=None):
        self._value_fn = value_fn
        self._grad_fn = grad_fn
        self.has_analytic_gradient = grad_fn is not None

    def value(self, x):
        return float(self._value_fn(x))

    def gradient(self, x):
        if self._grad_fn is not None:
            return np.asarray(self._grad_fn(x), dtype=float)
        return super().gradient(x)


class ConstantField(ScalarField):
    def __init__(self, c: float):
        self.c = float(c)
        self.has_analytic_gradient = True
        self._zero = None

    def value(self, x):
        return self.c

    def gradient(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned box the synthesis integrates over; must contain the origin."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = check_vector(self.lower, name="lower")
        upper = check_vector(self.upper, len(lower), name="upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if not np.all(lower < upper):
            raise ValueError("domain box requires lower[i] < upper[i] for all i")
        if not (np.all(lower <= 0.0) and np.all(upper >= 0.0)):
            raise ValueError("domain box must contain the origin")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))

    @staticmethod
    def cube(n: int, half_width: float) -> "DomainBox":
        h = float(half_width)
        return DomainBox(-h * np.ones(n), h * np.ones(n))


class ControlAffineSystem:
    """Base class for ``dx/dt = f(x) + g(x) u`` models.

    Subclasses implement :meth:`f` and :meth:`g`. The constructor checks that
    the origin is an equilibrium of the drift and warns otherwise (regulation
    to the origin is the design goal throughout).
    """

    name = "custom"

    def __init__(self, n: int, m: int, check_equilibrium: bool = True):
        self.n = int(n)
        self.m = int(m)
        if self.n < 1 or self.m < 1:
            raise ValueError("state and input dimensions must be positive")
        if check_equilibrium:
            f0 = np.asarray(self.f(np.zeros(self.n)), dtype=float)
            if np.max(np.abs(f0)) > 1e-9:
                warnings.warn(
                    f"drift at the origin is {f0}, not zero; the origin is "
                    "assumed to be an equilibrium for stabilization",
                    stacklevel=2,
                )

    def f(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def g(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eval_f(self, x) -> np.ndarray:
        x = check_vector(x, self.n, name="x")
        return np.asarray(self.f(x), dtype=float)

    def eval_g(self, x) -> np.ndarray:
        x = check_vector(x, self.n, name="x")
        return np.asarray(self.g(x), dtype=float)

    def closed_loop(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.f(x) + self.g(x) @ u

    def linearize(self, x0=None) -> tuple[np.ndarray, np.ndarray]:
        """Jacobian pair (A, B) at ``x0`` (default: the origin), by central differences."""
        x0 = np.zeros(self.n) if x0 is None else check_vector(x0, self.n, name="x0")
        h = fd_step(x0)
        A = np.empty((self.n, self.n))
        for j in range(self.n):
            xp = x0.copy()
            xm = x0.copy()
            xp[j] += h
            xm[j] -= h
            A[:, j] = (np.asarray(self.f(xp)) - np.asarray(self.f(xm))) / (2.0 * h)
        B = np.asarray(self.g(x0), dtype=float).reshape(self.n, self.m)
        return A, B


class LinearSystem(ControlAffineSystem):
    """``dx/dt = A x + B u``."""

    name = "linear"

    def __init__(self, A, B):
        self.A = check_matrix(A, name="A")
        n = self.A.shape[0]
        if self.A.shape[1] != n:
            raise ValueError("A must be square")
        B = as_float_array(B, "B")
        self.B = B.reshape(n, -1)
        super().__init__(n, self.B.shape[1])

    def f(self, x):
        return self.A @ x

    def g(self, x):
        return self.B

    def linearize(self, x0=None):
        return self.A.copy(), self.B.copy()


class TwoInputBenchmark(ControlAffineSystem):
    """Two-input nonlinear benchmark with sinusoidal and cubic drift terms.

    dx1/dt = sin(x2) + 2 x1 + u1 + 0.5 u2
    dx2/dt = 0.5 x1^3 + x2 - u2

    Registered under the name ``paper-example``. The input map is constant.
    """

    name = "paper-example"
    _G = np.array([[1.0, 0.5], [0.0, -1.0]])

    def __init__(self):
        super().__init__(2, 2)

    def f(self, x):
        return np.array([math.sin(x[1]) + 2.0 * x[0], 0.5 * x[0] ** 3 + x[1]])

    def g(self, x):
        return self._G

    def linearize(self, x0=None):
        if x0 is None or not np.any(x0):
            return np.array([[2.0, 1.0], [0.0, 1.0]]), self._G.copy()
        return super().linearize(x0)


def scalar_integrator() -> LinearSystem:
    sys = LinearSystem([[0.0]], [[1.0]])
    sys.name = "scalar-integrator"
    return sys


def double_integrator() -> LinearSystem:
    sys = LinearSystem([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]])
    sys.name = "double-integrator"
    return sys


_SYSTEM_FACTORIES = {
    "paper-example": TwoInputBenchmark,
    "scalar-integrator": scalar_integrator,
    "double-integrator": double_integrator,
}


def make_system(name: str) -> ControlAffineSystem:
    """Instantiate a built-in system by registry name."""
    try:
        return _SYSTEM_FACTORIES[name]()
    except KeyError:
        known = ", ".join(sorted(_SYSTEM_FACTORIES))
        raise ValueError(f"unknown system {name!r}; known systems: {known}") from None


def system_names() -> tuple[str, ...]:
    return tuple(sorted(_SYSTEM_FACTORIES))


class LieDerivativeField(ScalarField):
    """The field ``x -> grad(field)(x) . direction(x)`` for nesting.

    ``along`` is ``"f"`` for the drift or an integer input column. The value
    uses the wrapped field's gradient (analytic when available); this field's
    own gradient falls back to finite differences, so deeply nested
    derivatives amplify rounding error. A warning is emitted past order
    ``NESTED_FD_WARN_ORDER``.
    """

    def __init__(self, system: ControlAffineSystem, field: ScalarField, along="f"):
        self.system = system
        self.field = field
        self.along = along
        self.fd_depth = getattr(field, "fd_depth", 0) + 1
        if self.fd_depth > NESTED_FD_WARN_ORDER:
            warnings.warn(
                f"Lie derivative of order {self.fd_depth} uses nested finite "
                "differences; expect amplified rounding error",
                stacklevel=2,
            )

    def _direction(self, x: np.ndarray) -> np.ndarray:
        if self.along == "f":
            return np.asarray(self.system.f(x), dtype=float)
        g = np.asarray(self.system.g(x), dtype=float).reshape(self.system.n, self.system.m)
        return g[:, int(self.along)]

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(self.field.gradient(x) @ self._direction(x))


def lie_derivative(system: ControlAffineSystem, field: ScalarField, x, along="f") -> float:
    """Directional derivative of ``field`` along the drift or an input column.

    Repeated application through :class:`LieDerivativeField` yields the
    higher-order derivatives needed by relative-degree-k barriers.
    """
    x = check_vector(x, system.n, name="x")
    return LieDerivativeField(system, field, along).value(x)


def iterated_lie_field(system: ControlAffineSystem, field: ScalarField, order: int) -> ScalarField:
    """The field ``L_f^order field``; ``order=0`` returns ``field`` itself."""
    out = field
    for _ in range(int(order)):
        out = LieDerivativeField(system, out, "f")
    return out


@dataclass(frozen=True)
class QuadraticStateCost:
    """State cost ``x^T Q x`` with ``Q`` symmetric positive semi-definite."""

    Q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Q", check_matrix(self.Q, name="Q"))

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.Q @ x)

    def batch(self, X: np.ndarray) -> np.ndarray:
        return np.einsum("mi,ij,mj->m", X, self.Q, X)
