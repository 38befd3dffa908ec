"""High-order control barrier function algebra.

Everything needed to turn a barrier ``h`` of relative degree ``k`` into a
pointwise affine constraint ``b + a . u >= 0`` on the control, and the
closed-form quantities built from it: the KKT multiplier, the safety
feedforward, the projected inverse input weight and the transformed state
cost, plus the pointwise min-norm filter used as a baseline.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateHOCBFError, InfeasibleFilterError, NotPSDError
from .systems import (
    ControlAffineSystem,
    LieDerivativeField,
    ScalarField,
    iterated_lie_field,
)
from .validation import as_weight_matrix, check_vector

DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class ClassKappa:
    """Class-K decay-rate function: linear gain or odd power.

    ``linear``: s -> gain * s.  ``odd-power``: s -> gain * s**power with
    ``power`` odd, so the function is strictly increasing on all of R.
    """

    kind: str = "linear"
    gain: float = 1.0
    power: int = 1

    def __post_init__(self):
        if self.kind not in ("linear", "odd-power"):
            raise ValueError(f"unknown class-K kind {self.kind!r}")
        if not self.gain > 0.0:
            raise ValueError("class-K gain must be positive")
        if self.kind == "odd-power" and (self.power < 1 or self.power % 2 == 0):
            raise ValueError("class-K power must be a positive odd integer")

    def __call__(self, s: float) -> float:
        if self.kind == "linear":
            return self.gain * s
        return self.gain * s ** self.power

    def derivative(self, s: float) -> float:
        if self.kind == "linear":
            return self.gain
        return self.gain * self.power * s ** (self.power - 1)

    @staticmethod
    def linear(gain: float) -> "ClassKappa":
        return ClassKappa("linear", gain)


class CircleObstacle(ScalarField):
    """Circular (spherical) obstacle: ``h(x) = |x - center|^2 - radius^2``.

    Safe outside, unsafe inside; the gradient is nonzero everywhere except
    the center, which lies strictly inside the unsafe region.
    """

    has_analytic_gradient = True

    def __init__(self, center, radius: float):
        self.center = check_vector(center, name="center")
        self.radius = float(radius)
        if not self.radius > 0.0:
            raise ValueError("obstacle radius must be positive")

    def value(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return float(d @ d - self.radius ** 2)

    def gradient(self, x):
        return 2.0 * (np.asarray(x, dtype=float) - self.center)


class HalfSpace(ScalarField):
    """Affine barrier ``h(x) = offset - normal . x`` (safe where h >= 0)."""

    has_analytic_gradient = True

    def __init__(self, normal, offset: float):
        self.normal = check_vector(normal, name="normal")
        self.offset = float(offset)
        if not np.any(self.normal):
            raise ValueError("half-space normal must be nonzero")

    def value(self, x):
        return float(self.offset - self.normal @ np.asarray(x, dtype=float))

    def gradient(self, x):
        return -self.normal.copy()


@dataclass(frozen=True)
class BarrierSpec:
    """Barrier ``h`` with relative degree ``k`` and one class-K function per level."""

    h: ScalarField
    k: int = 1
    alphas: tuple[ClassKappa, ...] = (ClassKappa.linear(1.0),)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("relative degree k must be a positive integer")
        alphas = tuple(self.alphas)
        if len(alphas) != self.k:
            raise ValueError(f"need exactly k={self.k} class-K functions, got {len(alphas)}")
        object.__setattr__(self, "alphas", alphas)

    @staticmethod
    def circle(center, radius: float, gain: float) -> "BarrierSpec":
        """Relative-degree-1 circular obstacle with a linear class-K gain."""
        return BarrierSpec(CircleObstacle(center, radius), 1, (ClassKappa.linear(gain),))

    def validate_boundary(self, domain, rng, samples: int = 2000, tol: float = 1e-8) -> None:
        """Sampled check that the gradient does not vanish near ``{h = 0}``.

        Draws points in ``domain``, keeps those with small ``|h|`` relative to
        the sampled spread, and requires a nonzero gradient at each.
        """
        pts = domain.sample(rng, samples)
        values = np.array([self.h.value(p) for p in pts])
        scale = max(np.percentile(np.abs(values), 10.0), 1e-6)
        near = pts[np.abs(values) <= scale]
        for p in near:
            if np.linalg.norm(self.h.gradient(p)) <= tol:
                raise ValueError(f"barrier gradient vanishes near the boundary at {p}")


@dataclass(frozen=True)
class ConstraintData:
    """Affine-in-control safety constraint at one state: ``b + a . u >= 0``.

    ``a`` is the constraint row ``L_g L_f^(k-1) h``, ``b`` collects the drift
    and class-K terms, and ``psi`` holds the barrier chain values whose signs
    decide membership in the safe set.
    """

    a: np.ndarray
    b: float
    psi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def degenerate(self) -> bool:
        return bool(np.max(np.abs(self.a), initial=0.0) <= DEGENERATE_TOL)


def psi_chain(spec: BarrierSpec, system: ControlAffineSystem, x) -> np.ndarray:
    """Values ``(psi_0, ..., psi_{k-1})`` of the barrier chain at ``x``.

    ``psi_0 = h`` and ``psi_i = L_f psi_{i-1} + alpha_i(psi_{i-1})``; the
    state is in the safe set iff every entry is nonnegative.
    """
    x = check_vector(x, system.n, name="x")
    values = np.empty(spec.k)
    current: ScalarField = spec.h
    values[0] = current.value(x)
    for i in range(1, spec.k):
        prev = current
        alpha = spec.alphas[i - 1]
        lie = LieDerivativeField(system, prev, "f")
        values[i] = lie.value(x) + alpha(values[i - 1])
        current = _ChainField(lie, alpha, prev)
    return values


class _ChainField(ScalarField):
    """psi_i as a field: L_f psi_{i-1} + alpha_i(psi_{i-1})."""

    def __init__(self, lie: LieDerivativeField, alpha: ClassKappa, prev: ScalarField):
        self.lie = lie
        self.alpha = alpha
        self.prev = prev
        self.fd_depth = lie.fd_depth

    def value(self, x):
        return self.lie.value(x) + self.alpha(self.prev.value(x))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return self.lie.gradient(x) + self.alpha.derivative(self.prev.value(x)) * self.prev.gradient(x)


def in_safe_set(spec: BarrierSpec, system: ControlAffineSystem, x, strict: bool = False) -> bool:
    psi = psi_chain(spec, system, x)
    return bool(np.all(psi > 0.0)) if strict else bool(np.all(psi >= 0.0))


def constraint_data(spec: BarrierSpec, system: ControlAffineSystem, x) -> ConstraintData:
    """Constraint row and offset so the barrier condition reads ``b + a.u >= 0``.

    ``a = L_g L_f^(k-1) h`` and ``b = L_f^k h + alpha_k(psi_{k-1})``. For
    relative degree 1 everything is a single analytic gradient; for higher
    degrees the intermediate fields are differentiated numerically.
    """
    x = check_vector(x, system.n, name="x")
    g = np.asarray(system.g(x), dtype=float).reshape(system.n, system.m)
    if spec.k == 1:
        grad = spec.h.gradient(x)
        h0 = spec.h.value(x)
        a = grad @ g
        b = float(grad @ np.asarray(system.f(x), dtype=float)) + spec.alphas[0](h0)
        return ConstraintData(a=a, b=b, psi=np.array([h0]))
    psi = psi_chain(spec, system, x)
    base = iterated_lie_field(system, spec.h, spec.k - 1)  # L_f^{k-1} h
    grad = base.gradient(x)
    a = grad @ g
    lfk = float(grad @ np.asarray(system.f(x), dtype=float))
    b = lfk + spec.alphas[-1](psi[-1])
    return ConstraintData(a=a, b=b, psi=psi)


def constraint_value(data: ConstraintData, u) -> float:
    """``C_s(u) = b + a . u``; nonnegative iff ``u`` satisfies the barrier condition."""
    u = check_vector(u, data.a.shape[0], name="u")
    return float(data.b + data.a @ u)


def _require_nondegenerate(data: ConstraintData) -> None:
    if data.degenerate:
        raise DegenerateHOCBFError(
            "constraint row L_g L_f^(k-1) h vanishes; the relative-degree "
            "assumption fails at this state"
        )


def weighted_normal(data: ConstraintData, R) -> tuple[np.ndarray, float]:
    """R-inverse-weighted constraint direction and its positive gain.

    Returns ``eta = R^-1 a^T`` and ``H = a R^-1 a^T``; ``H > 0`` whenever the
    constraint row is nonzero and ``R`` is positive definite.
    """
    _require_nondegenerate(data)
    R = as_weight_matrix(R, data.a.shape[0], name="R")
    eta = np.linalg.solve(R, data.a)
    H = float(data.a @ eta)
    return eta, H


def kkt_multiplier(data: ConstraintData, R, LgV) -> float:
    """Multiplier of the active barrier constraint; zero when inactive.

    Activity is decided at the unconstrained control ``-R^-1 LgV^T``: if the
    constraint value there is negative the multiplier is
    ``-(b - eta . LgV) / H``, which is positive; otherwise zero. Ties take
    the inactive branch, where both branches coincide.
    """
    m = data.a.shape[0]
    R = as_weight_matrix(R, m, name="R")
    LgV = check_vector(LgV, m, name="LgV")
    u_free = -np.linalg.solve(R, LgV)
    slack = data.b + float(data.a @ u_free)
    if slack >= 0.0:
        return 0.0
    _require_nondegenerate(data)
    eta = np.linalg.solve(R, data.a)
    H = float(data.a @ eta)
    return -slack / H


def safety_feedforward(data: ConstraintData, R) -> np.ndarray:
    """Feedforward ``eta H^-1 b``; the safe feedback subtracts it from the gradient term."""
    eta, H = weighted_normal(data, R)
    return eta * (data.b / H)


def min_norm_filter(data: ConstraintData, u_nom) -> np.ndarray:
    """Project a nominal control onto the safe half-space ``b + a.u >= 0``.

    Returns ``u_nom`` unchanged when it already satisfies the constraint,
    else the closest point of the half-space boundary.
    """
    u_nom = check_vector(u_nom, data.a.shape[0], name="u_nom")
    slack = data.b + float(data.a @ u_nom)
    if slack >= 0.0:
        return u_nom.copy()
    if data.degenerate:
        raise InfeasibleFilterError(
            "constraint row is zero and the constraint is violated; "
            "no control can restore it"
        )
    return u_nom + data.a * (-slack / float(data.a @ data.a))


def projected_inverse_weight(data: ConstraintData, R) -> np.ndarray:
    """``Rbar = R^-1 - eta H^-1 eta^T``: R-inverse projected off the constraint row.

    Symmetric positive semi-definite with ``Rbar a^T = 0``; identically zero
    for single-input systems.
    """
    eta, H = weighted_normal(data, R)
    R = as_weight_matrix(R, data.a.shape[0], name="R")
    out = np.linalg.inv(R) - np.outer(eta, eta) / H
    return 0.5 * (out + out.T)


def psd_sqrt(M, tol: float = 1e-10) -> np.ndarray:
    """Symmetric PSD square root; eigenvalues in ``[-tol, 0)`` are clamped to zero."""
    M = np.asarray(M, dtype=float)
    sym = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(sym)
    if w.min(initial=0.0) < -tol:
        raise NotPSDError(f"matrix has negative eigenvalue {w.min()}")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def augmented_state_cost(data: ConstraintData, R, q_of_x: float) -> float:
    """Transformed running cost ``2 q(x) + b^2 / H`` of the active-branch equation."""
    if q_of_x < 0.0:
        raise ValueError("state cost must be nonnegative")
    _, H = weighted_normal(data, R)
    return 2.0 * float(q_of_x) + data.b ** 2 / H
