"""Galerkin assembly and the successive-approximation iteration.

The value function is expanded in a polynomial basis and the generalized
HJB equation is projected onto that basis by quadrature over the domain.
The resulting fixed-point iteration solves one small linear system per
step. Where a barrier constraint is present, each quadrature node carries
two variants of its contribution (constraint active / inactive) and the
per-iteration activity indicator decides which one is summed, so the
expensive node quantities are computed once.

Assembly is vectorized over nodes with fixed-order reductions, so results
are deterministic and independent of any outer parallelism.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .barriers import BarrierSpec, constraint_data
from .basis import PolynomialBasis
from .exceptions import (
    DegenerateHOCBFError,
    DivergedError,
    NotStabilizableError,
    SingularSystemError,
)
from .quadrature import QuadratureGrid, gauss_legendre_grid
from .systems import ControlAffineSystem, DomainBox, QuadraticStateCost
from .validation import as_psd_weight_matrix, as_weight_matrix, check_vector

COND_LIMIT = 1e12
DIVERGENCE_LIMIT = 1e9
ACTIVITY_STABLE_FRACTION = 0.01


@dataclass(frozen=True)
class IterationConfig:
    """Knobs of the successive-approximation loop."""

    quad_order: int = 8
    max_iter: int = 200
    tol: float = 1e-8
    activity_mode: str = "per-iteration"

    def __post_init__(self):
        if self.quad_order < 1:
            raise ValueError("quad_order must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if self.activity_mode not in ("per-iteration", "fixed"):
            raise ValueError("activity_mode must be 'per-iteration' or 'fixed'")


@dataclass
class IterationResult:
    """Outcome of the fixed-point iteration."""

    c: np.ndarray
    iterations: int
    history: np.ndarray          # sup-norm coefficient change per iteration
    converged: bool
    active_fraction: np.ndarray  # fraction of nodes with the constraint active

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.history = np.asarray(self.history, dtype=float)
        self.active_fraction = np.asarray(self.active_fraction, dtype=float)


def solve_linear(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A c = b`` by LU with partial pivoting; reject ill-conditioned systems."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystemError(f"system matrix condition estimate {cond:.3e} exceeds {COND_LIMIT:.0e}")
    return np.linalg.solve(A, b)


def riccati_solution(A, B, Q, R) -> np.ndarray:
    """Stabilizing ``P`` of ``A^T P + P A - 2 P B R^-1 B^T P + Q = 0``.

    This is the algebraic Riccati equation for the value function
    ``V = x^T P x`` of the cost ``integral(x^T Q x + u^T R u / 2)`` with
    feedback ``u = -R^-1 B^T V_x``; it equals the standard CARE with input
    weight ``R/2``. Raises ``NotStabilizableError`` when no stabilizing
    solution exists.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    Q = as_psd_weight_matrix(Q, n, name="Q")
    R = as_weight_matrix(R, B.shape[1], name="R")
    if not np.any(B):
        # no input: the Riccati equation degenerates to a Lyapunov equation
        if np.max(np.linalg.eigvals(A).real) >= 0.0:
            raise NotStabilizableError("A is not Hurwitz and B is zero")
        return scipy.linalg.solve_continuous_lyapunov(A.T, -Q)
    try:
        P = scipy.linalg.solve_continuous_are(A, B, Q, 0.5 * R)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NotStabilizableError(f"Riccati solve failed: {exc}") from exc
    K = lqr_gain_from_solution(P, B, R)
    if np.max(np.linalg.eigvals(A - B @ K).real) >= 0.0:
        raise NotStabilizableError("Riccati solution is not stabilizing")
    return P


def lqr_gain_from_solution(P: np.ndarray, B: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Feedback gain of ``u = -K x`` for ``V = x^T P x``: ``K = 2 R^-1 B^T P``."""
    return 2.0 * np.linalg.solve(R, B.T @ P)


def lqr_gain(A, B, Q, R) -> np.ndarray:
    P = riccati_solution(A, B, Q, R)
    B = np.asarray(B, dtype=float).reshape(P.shape[0], -1)
    R = as_weight_matrix(R, B.shape[1], name="R")
    return lqr_gain_from_solution(P, B, R)


class NodeCache:
    """Per-quadrature-node values and contraction arrays for fast re-assembly.

    For a barrier problem every node stores both the active-branch and the
    inactive-branch curvature matrices, the feedforward contractions and the
    linear form deciding activity, so the iteration only re-weights sums.
    Nodes with a vanishing constraint row are flagged degenerate; they only
    raise if the iteration ever marks them active.
    """

    def __init__(self, grid: QuadratureGrid, system: ControlAffineSystem,
                 basis: PolynomialBasis, input_weight, state_cost,
                 barrier: BarrierSpec | None = None):
        if grid.dim != system.n or basis.n != system.n:
            raise ValueError("grid, system and basis dimensions disagree")
        self.grid = grid
        self.system = system
        self.basis = basis
        self.barrier = barrier
        self.R = as_weight_matrix(input_weight, system.m, name="input_weight")
        self.state_cost = state_cost

        X = grid.nodes
        M = grid.size
        self.weights = grid.weights
        self.phi = basis.eval(X)                       # (M, N)
        self.jac = basis.grad(X)                       # (M, N, n)
        self.f = np.array([system.f(x) for x in X])    # (M, n)
        self.g = np.array([np.asarray(system.g(x), dtype=float).reshape(system.n, system.m)
                           for x in X])                # (M, n, m)
        if isinstance(state_cost, QuadraticStateCost):
            self.q = state_cost.batch(X)
        else:
            self.q = np.array([float(state_cost(x)) for x in X])
        if np.any(self.q < 0.0):
            raise ValueError("state cost must be nonnegative on the domain")

        Rinv = np.linalg.inv(self.R)
        p_unc = np.einsum("mik,kl,mjl->mij", self.g, Rinv, self.g)
        self.S_unc = np.einsum("min,mnp,mjp->mij", self.jac, p_unc, self.jac)

        if barrier is None:
            self.a = self.b = self.degenerate = None
            self.eta = self.H = self.rbar = self.u_cbf = None
            self.S_act = self.Sb_act = self.d_ff = self.db_cross = None
            self.s_ff = self.act_lin = None
            return

        m = system.m
        data = [constraint_data(barrier, system, x) for x in X]
        self.a = np.array([d.a for d in data])         # (M, m)
        self.b = np.array([d.b for d in data])         # (M,)
        self.degenerate = np.array([d.degenerate for d in data])

        eta = np.zeros((M, m))
        H = np.ones(M)
        ok = ~self.degenerate
        eta[ok] = self.a[ok] @ Rinv.T
        H[ok] = np.einsum("mk,mk->m", self.a[ok], eta[ok])
        rbar = np.zeros((M, m, m))
        rbar[ok] = Rinv[None, :, :] - np.einsum("mk,ml->mkl", eta[ok], eta[ok]) / H[ok, None, None]
        u_cbf = np.zeros((M, m))
        u_cbf[ok] = eta[ok] * (self.b[ok] / H[ok])[:, None]
        self.eta, self.H, self.rbar, self.u_cbf = eta, H, rbar, u_cbf

        p_act = np.einsum("mik,mkl,mjl->mij", self.g, rbar, self.g)
        rbr = np.einsum("mkl,lo,mop->mkp", rbar, self.R, rbar)
        pb_act = np.einsum("mik,mkl,mjl->mij", self.g, rbr, self.g)
        self.S_act = np.einsum("min,mnp,mjp->mij", self.jac, p_act, self.jac)
        self.Sb_act = np.einsum("min,mnp,mjp->mij", self.jac, pb_act, self.jac)
        self.d_ff = np.einsum("min,mnk,mk->mi", self.jac, self.g, u_cbf)
        self.db_cross = np.einsum("min,mnk,mkl,lo,mo->mi", self.jac, self.g, rbar, self.R, u_cbf)
        self.s_ff = np.einsum("mk,kl,ml->m", u_cbf, self.R, u_cbf)
        self.act_lin = np.einsum("min,mnk,mk->mi", self.jac, self.g, eta)

    @property
    def size(self) -> int:
        return self.grid.size

    @property
    def has_barrier(self) -> bool:
        return self.barrier is not None


def build_node_cache(grid, system, basis, input_weight, state_cost,
                     barrier: BarrierSpec | None = None) -> NodeCache:
    return NodeCache(grid, system, basis, input_weight, state_cost, barrier)


def assemble_static(cache: NodeCache) -> tuple[np.ndarray, np.ndarray]:
    """Controller-independent Galerkin arrays: the drift matrix and the cost load."""
    fj = np.einsum("mjn,mn->mj", cache.jac, cache.f)
    A1 = np.einsum("m,mi,mj->ij", cache.weights, cache.phi, fj)
    b1 = -np.einsum("m,m,mi->i", cache.weights, cache.q, cache.phi)
    return A1, b1


def assemble_controller_terms(cache: NodeCache, controller) -> tuple[np.ndarray, np.ndarray]:
    """Galerkin arrays of an explicit controller, for the iteration's initialization."""
    U = np.array([check_vector(controller(x), cache.system.m, name="u")
                  for x in cache.grid.nodes])
    gu = np.einsum("mnk,mk->mn", cache.g, U)
    ju = np.einsum("mjn,mn->mj", cache.jac, gu)
    A2 = np.einsum("m,mi,mj->ij", cache.weights, cache.phi, ju)
    uRu = np.einsum("mk,kl,ml->m", U, cache.R, U)
    b2 = -np.einsum("m,m,mi->i", cache.weights, uRu, cache.phi)
    return A2, b2


class GalerkinTensors:
    """Assembled Galerkin arrays plus the node data needed to re-weight them.

    ``A1`` and ``b1`` never change. The safety-dependent sums are exposed as
    full-activity tensors (``GA1 .. Gb3``) and are re-summed from per-node
    contributions with the current activity indicator inside the iteration.
    """

    def __init__(self, cache: NodeCache):
        self.cache = cache
        self.A1, self.b1 = assemble_static(cache)
        self._full = {}

    @property
    def size(self) -> int:
        return self.cache.basis.size

    def _full_sum(self, key):
        if key in self._full:
            return self._full[key]
        c = self.cache
        N = self.size
        if not c.has_barrier:
            shapes = {"GA1": (N, N, N), "GA2": (N, N), "Gb1": (N, N, N),
                      "Gb2": (N, N), "Gb3": (N,)}
            value = np.zeros(shapes[key])
        else:
            w = c.weights * ~c.degenerate
            if key == "GA1":
                value = np.einsum("m,mi,mjl->ijl", w, c.phi, c.S_act)
            elif key == "GA2":
                value = np.einsum("m,mi,ml->il", w, c.phi, c.d_ff)
            elif key == "Gb1":
                value = np.einsum("m,mi,mjl->ijl", w, c.phi, c.Sb_act)
            elif key == "Gb2":
                value = 2.0 * np.einsum("m,mi,mj->ij", w, c.phi, c.db_cross)
            elif key == "Gb3":
                value = np.einsum("m,m,mi->i", w, c.s_ff, c.phi)
            else:  # pragma: no cover
                raise KeyError(key)
        self._full[key] = value
        return value

    GA1 = property(lambda self: self._full_sum("GA1"))
    GA2 = property(lambda self: self._full_sum("GA2"))
    Gb1 = property(lambda self: self._full_sum("Gb1"))
    Gb2 = property(lambda self: self._full_sum("Gb2"))
    Gb3 = property(lambda self: self._full_sum("Gb3"))

    def activity(self, c: np.ndarray) -> np.ndarray:
        """Nodes where the constraint binds at the unconstrained control of ``c``.

        Strictly negative slack marks a node active; a degenerate node that
        would be active is a hard error because no control can help there.
        """
        cache = self.cache
        if not cache.has_barrier:
            return np.zeros(cache.size, dtype=bool)
        slack = cache.b - cache.act_lin @ c
        chi = slack < 0.0
        if np.any(chi & cache.degenerate):
            raise DegenerateHOCBFError(
                "a quadrature node with vanishing constraint row lies in the active region"
            )
        return chi

    def system_matrices(self, c: np.ndarray, chi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Iteration matrices ``A(c)`` and ``b(c)`` under activity indicator ``chi``."""
        cache = self.cache
        w, phi = cache.weights, cache.phi
        if cache.has_barrier:
            sel = chi[:, None, None]
            S = np.where(sel, cache.S_act, cache.S_unc)
            Sb = np.where(sel, cache.Sb_act, cache.S_unc)
        else:
            S = Sb = cache.S_unc
        cS = np.einsum("j,mjl->ml", c, S)
        A = self.A1 - np.einsum("m,mi,ml->il", w, phi, cS)
        cSb = np.einsum("j,mjl->ml", c, Sb)
        scal = np.einsum("ml,l->m", cSb, c)
        if cache.has_barrier:
            A -= np.einsum("m,mi,ml->il", w * chi, phi, cache.d_ff)
            scal = scal + chi * (2.0 * cache.db_cross @ c + cache.s_ff)
        b = self.b1 - 0.5 * np.einsum("m,m,mi->i", w, scal, phi)
        return A, b


def assemble_safety_tensors(cache: NodeCache) -> GalerkinTensors:
    return GalerkinTensors(cache)


def project_controller(tensors: GalerkinTensors, controller) -> np.ndarray:
    """Galerkin projection of an explicit controller: the iteration's c0."""
    A2, b2 = assemble_controller_terms(tensors.cache, controller)
    return solve_linear(tensors.A1 + A2, tensors.b1 + 0.5 * b2)


def successive_approximation(tensors: GalerkinTensors, c0, config: IterationConfig) -> IterationResult:
    """Iterate the Galerkin fixed point from the projection of a stabilizing controller.

    Each pass re-decides node activity at the current coefficients (unless
    ``activity_mode='fixed'``, which freezes the indicator computed from
    ``c0``), assembles the linear system and solves it. Convergence requires
    the sup-norm coefficient change to fall below ``tol`` with the activity
    pattern essentially unchanged between passes.
    """
    c = check_vector(c0, tensors.size, name="c0")
    fixed_chi = tensors.activity(c) if config.activity_mode == "fixed" else None
    history: list[float] = []
    active_fraction: list[float] = []
    chi_prev = None
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iter + 1):
        chi = fixed_chi if fixed_chi is not None else tensors.activity(c)
        A, b = tensors.system_matrices(c, chi)
        c_new = solve_linear(A, b)
        if np.max(np.abs(c_new)) > DIVERGENCE_LIMIT:
            raise DivergedError(
                f"coefficient sup-norm exceeded {DIVERGENCE_LIMIT:.0e} at iteration {iterations}"
            )
        delta = float(np.max(np.abs(c_new - c)))
        history.append(delta)
        active_fraction.append(float(np.mean(chi)))
        if chi_prev is None:
            stable = not np.any(chi)
        else:
            stable = float(np.mean(chi != chi_prev)) < ACTIVITY_STABLE_FRACTION
        c = c_new
        chi_prev = chi
        if delta <= config.tol and stable:
            converged = True
            break
    return IterationResult(c, iterations, np.array(history), converged,
                           np.array(active_fraction))


def solve_unconstrained(system, basis, state_weight, input_weight, grid, u0,
                        config: IterationConfig) -> IterationResult:
    """Unconstrained synthesis: the fixed point with all safety terms absent.

    ``u0`` must stabilize the system on the domain; its Galerkin projection
    seeds the iteration.
    """
    cost = state_weight if callable(state_weight) else QuadraticStateCost(
        as_psd_weight_matrix(state_weight, system.n, name="state_weight"))
    cache = build_node_cache(grid, system, basis, input_weight, cost)
    tensors = GalerkinTensors(cache)
    c0 = project_controller(tensors, u0)
    return successive_approximation(tensors, c0, config)


def solve_constrained(system, basis, state_weight, input_weight, grid, barrier,
                      u0_safe, config: IterationConfig) -> IterationResult:
    """Barrier-constrained synthesis seeded by a safe stabilizing controller."""
    cost = state_weight if callable(state_weight) else QuadraticStateCost(
        as_psd_weight_matrix(state_weight, system.n, name="state_weight"))
    cache = build_node_cache(grid, system, basis, input_weight, cost, barrier)
    tensors = GalerkinTensors(cache)
    c0 = project_controller(tensors, u0_safe)
    return successive_approximation(tensors, c0, config)


def default_grid(domain: DomainBox, config: IterationConfig) -> QuadratureGrid:
    return gauss_legendre_grid(domain, config.quad_order)
