"""Runtime invariant suites behind the ``verify`` CLI command.

Each check draws seed-reproducible samples, so a failing run can be
replayed exactly. The same oracles are reused by the test suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .barriers import (
    constraint_data,
    constraint_value,
    min_norm_filter,
    projected_inverse_weight,
    safety_feedforward,
    weighted_normal,
)
from .config import ProblemConfig
from .controllers import hjb_residual
from .estimator import GalerkinHJBController
from .exceptions import InfeasibleFilterError
from .galerkin import GalerkinTensors, build_node_cache, solve_linear
from .basis import make_poly_basis
from .quadrature import gauss_legendre_grid
from .systems import CallableField, finite_difference_gradient, lie_derivative


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def min_norm_grid_oracle(a, b, u_nom, resolution: float = 1e-3, pad: float = 0.05) -> np.ndarray:
    """Exhaustive-grid solution of ``min |u - u_nom|  s.t.  b + a.u >= 0``.

    Brute force over a box around ``u_nom`` that provably contains the
    analytic projection; supports one and two inputs.
    """
    a = np.asarray(a, dtype=float)
    u_nom = np.asarray(u_nom, dtype=float)
    slack = b + float(a @ u_nom)
    if slack >= 0.0:
        return u_nom.copy()
    half = -slack / np.linalg.norm(a) + pad
    offsets = np.arange(-half, half + 0.5 * resolution, resolution)
    if a.size == 1:
        grid = u_nom[0] + offsets
        feasible = grid[b + a[0] * grid >= 0.0]
        return np.array([feasible[np.argmin(np.abs(feasible - u_nom[0]))]])
    if a.size != 2:
        raise ValueError("grid oracle supports m in {1, 2}")
    ax2 = u_nom[1] + offsets
    best = None
    best_d2 = np.inf
    for chunk in np.array_split(offsets, max(1, offsets.size // 256)):
        u1 = (u_nom[0] + chunk)[:, None]
        d2 = (u1 - u_nom[0]) ** 2 + (ax2[None, :] - u_nom[1]) ** 2
        d2 = np.where(b + a[0] * u1 + a[1] * ax2[None, :] >= 0.0, d2, np.inf)
        idx = np.unravel_index(np.argmin(d2), d2.shape)
        if d2[idx] < best_d2:
            best_d2 = d2[idx]
            best = np.array([u1[idx[0], 0], ax2[idx[1]]])
    return best


def sample_active_states(controller_bundle, rng, count: int, max_draws: int = 400_000):
    """States of the domain where the fitted controller's constraint binds."""
    est = controller_bundle
    system, barrier, R = est.system_, est.barrier, est.input_weight_
    Rinv = np.linalg.inv(R)
    found = []
    draws = 0
    batch = 2048
    while len(found) < count and draws < max_draws:
        X = est.domain_.sample(rng, batch)
        draws += batch
        grads = est.value_.gradient_batch(X)
        for x, grad in zip(X, grads):
            g = np.asarray(system.g(x), dtype=float).reshape(system.n, system.m)
            u_free = -Rinv @ (grad @ g)
            data = constraint_data(barrier, system, x)
            if data.b + float(data.a @ u_free) < 0.0:
                found.append(x)
                if len(found) == count:
                    break
    if len(found) < count:
        raise RuntimeError(f"found only {len(found)} active states in {draws} draws")
    return np.array(found)


def _check_lie_fd(cfg: ProblemConfig, rng, samples: int) -> CheckResult:
    system = cfg.system
    if cfg.barrier is not None and cfg.barrier.h.has_analytic_gradient:
        fld = cfg.barrier.h
    else:
        fld = CallableField(lambda x: float(x @ x) + float(np.sin(x).sum()),
                            lambda x: 2.0 * x + np.cos(x))
    worst = 0.0
    directions = ["f"] + list(range(system.m))
    for x in cfg.domain.sample(rng, samples):
        for along in directions:
            exact = lie_derivative(system, fld, x, along)
            if along == "f":
                def composite(y, _along=along):
                    return fld.value(y)
                direction = np.asarray(system.f(x), dtype=float)
            else:
                direction = np.asarray(system.g(x), dtype=float).reshape(
                    system.n, system.m)[:, along]
            fd = float(finite_difference_gradient(fld.value, x) @ direction)
            worst = max(worst, abs(exact - fd) / max(1.0, abs(exact)))
    return CheckResult("lie-derivative-fd", worst <= 1e-5,
                       f"worst relative deviation {worst:.2e} over {samples} states")


def _check_constant_input_map(cfg: ProblemConfig, rng) -> CheckResult:
    system = cfg.system
    g0 = np.asarray(system.g(np.zeros(system.n)), dtype=float)
    worst = 0.0
    for x in cfg.domain.sample(rng, 100):
        worst = max(worst, float(np.max(np.abs(np.asarray(system.g(x), dtype=float) - g0))))
    return CheckResult("constant-input-map", worst == 0.0,
                       f"max deviation of g(x) from g(0): {worst:.2e} over 100 states")


def _check_basis_fd(cfg: ProblemConfig, rng) -> CheckResult:
    basis = make_poly_basis(cfg.system.n, cfg.d_min, cfg.d_max)
    worst = 0.0
    for x in rng.uniform(-2.0, 2.0, size=(100, basis.n)):
        grad = basis.grad_one(x)
        for j in range(basis.size):
            fd = finite_difference_gradient(lambda y, j=j: basis.eval_one(y)[j], x)
            err = np.max(np.abs(grad[j] - fd) / np.maximum(1e-9 / 1e-6, np.maximum(1.0, np.abs(fd))))
            worst = max(worst, float(err))
    return CheckResult("basis-gradient-fd", worst <= 1e-5,
                       f"worst relative deviation {worst:.2e} at 100 points")


def _check_basis_coefficients() -> CheckResult:
    basis = make_poly_basis(2, 2, 6)
    expected = []
    for d in range(2, 7):
        for e1 in range(d, -1, -1):
            expected.append(math.sqrt(math.comb(d, e1)))
    ok = basis.size == 25 and np.allclose(basis.coefficients, expected, rtol=0.0, atol=0.0)
    return CheckResult("basis-coefficient-table", ok,
                       f"{basis.size} terms; exact match: {ok}")


def _check_quadrature(cfg: ProblemConfig, rng) -> CheckResult:
    order = cfg.iteration.quad_order
    grid = gauss_legendre_grid(cfg.domain, order)
    n = cfg.domain.dim
    worst = 0.0
    for _ in range(20):
        powers = rng.integers(0, 2 * order, size=n)
        values = np.prod(grid.nodes ** powers, axis=1)
        approx = grid.integrate(values)
        exact = 1.0
        for d in range(n):
            p = powers[d]
            lo, hi = cfg.domain.lower[d], cfg.domain.upper[d]
            exact *= (hi ** (p + 1) - lo ** (p + 1)) / (p + 1)
        worst = max(worst, abs(approx - exact) / max(1.0, abs(exact)))
    return CheckResult("quadrature-exactness", worst <= 1e-12,
                       f"worst relative error {worst:.2e} on 20 random monomials")


def _check_projection_psd(rng, instances: int = 500) -> CheckResult:
    from .barriers import ConstraintData
    worst_eig = 0.0
    worst_kernel = 0.0
    ok = True
    for _ in range(instances):
        m = int(rng.integers(1, 4))
        a = rng.normal(size=m)
        while np.linalg.norm(a) < 1e-6:
            a = rng.normal(size=m)
        L = rng.normal(size=(m, m))
        R = L @ L.T + 0.1 * np.eye(m)
        data = ConstraintData(a=a, b=float(rng.normal()))
        rbar = projected_inverse_weight(data, R)
        eigs = np.linalg.eigvalsh(rbar)
        bound = 1.0 / np.linalg.eigvalsh(R).min()
        ok &= np.allclose(rbar, rbar.T, rtol=0.0, atol=1e-12)
        ok &= eigs.min() >= -1e-10 and eigs.max() <= bound + 1e-10
        kernel = float(np.max(np.abs(rbar @ a)))
        ok &= kernel <= 1e-10
        if m == 1:
            ok &= float(abs(rbar[0, 0])) == 0.0
        worst_eig = max(worst_eig, float(-eigs.min()))
        worst_kernel = max(worst_kernel, kernel)
    return CheckResult("projection-psd", bool(ok),
                       f"{instances} instances; worst negative eigenvalue "
                       f"{worst_eig:.2e}, worst |Rbar a'| {worst_kernel:.2e}")


def _check_min_norm_oracle(rng, instances: int = 200) -> CheckResult:
    worst = 0.0
    worst_slack = 0.0
    for _ in range(instances):
        m = 1 if rng.random() < 0.5 else 2
        a = rng.normal(size=m)
        while np.linalg.norm(a) < 0.3:
            a = rng.normal(size=m)
        u_nom = rng.normal(size=m)
        b = float(rng.uniform(-0.8, 0.4))
        from .barriers import ConstraintData
        data = ConstraintData(a=a, b=b)
        u = min_norm_filter(data, u_nom)
        ref = min_norm_grid_oracle(a, b, u_nom)
        worst = max(worst, float(np.linalg.norm(u - ref)))
        worst_slack = min(worst_slack, constraint_value(data, u))
    ok = worst <= 2e-3 and worst_slack >= -1e-12
    return CheckResult("min-norm-grid-oracle", bool(ok),
                       f"{instances} instances; worst distance {worst:.2e}, "
                       f"worst slack {worst_slack:.2e}")


def _check_kkt(est, rng, samples: int) -> CheckResult:
    system, barrier, R = est.system_, est.barrier, est.input_weight_
    Rinv = np.linalg.inv(R)
    ok = True
    worst_cs = 0.0
    for x in est.domain_.sample(rng, samples):
        u, lam = est.controller_.control_and_multiplier(x)
        data = constraint_data(barrier, system, x)
        cs = constraint_value(data, u)
        ok &= lam >= 0.0
        ok &= abs(lam * cs) <= 1e-8
        if lam > 0.0:
            ok &= abs(cs) <= 1e-8
            worst_cs = max(worst_cs, abs(cs))
        else:
            grad = est.value_.gradient(x)
            g = np.asarray(system.g(x), dtype=float).reshape(system.n, system.m)
            u_free = -Rinv @ (grad @ g)
            ok &= np.array_equal(u, u_free)
    return CheckResult("kkt-conditions", bool(ok),
                       f"{samples} states; worst active |C_s| {worst_cs:.2e}")


def _check_controller_identity(est, rng, samples: int = 500) -> CheckResult:
    system, barrier, R = est.system_, est.barrier, est.input_weight_
    Rinv = np.linalg.inv(R)
    states = sample_active_states(est, rng, samples)
    worst_u = 0.0
    worst_res = 0.0
    for x in states:
        grad = est.value_.gradient(x)
        g = np.asarray(system.g(x), dtype=float).reshape(system.n, system.m)
        u_free = -Rinv @ (grad @ g)
        data = constraint_data(barrier, system, x)
        eta, H = weighted_normal(data, R)
        lam = -(data.b + float(data.a @ u_free)) / H
        kkt_form = u_free + lam * eta
        rbar = projected_inverse_weight(data, R)
        proj_form = -(rbar @ (g.T @ grad) + safety_feedforward(data, R))
        worst_u = max(worst_u, float(np.linalg.norm(kkt_form - proj_form)))
        direct = hjb_residual(est.value_, system, est.state_cost_, R, x,
                              barrier=barrier, form="direct")
        transformed = hjb_residual(est.value_, system, est.state_cost_, R, x,
                                   barrier=barrier, form="transformed")
        worst_res = max(worst_res, abs(direct - transformed))
    ok = worst_u <= 1e-10 and worst_res <= 1e-8
    return CheckResult("controller-form-identity", bool(ok),
                       f"{samples} active states; worst control gap {worst_u:.2e}, "
                       f"worst residual gap {worst_res:.2e}")


def _check_continuity(est, rng, segments: int = 20) -> CheckResult:
    active = sample_active_states(est, rng, segments)
    ok = True
    worst_ratio = np.inf
    made = 0
    tries = 0
    while made < segments and tries < 10 * segments:
        tries += 1
        xa = active[made % len(active)]
        xb = est.domain_.sample(rng, 1)[0]
        grad = est.value_.gradient(xb)
        g = np.asarray(est.system_.g(xb), dtype=float).reshape(est.system_.n, est.system_.m)
        u_free = -np.linalg.inv(est.input_weight_) @ (grad @ g)
        data = constraint_data(est.barrier, est.system_, xb)
        if data.b + float(data.a @ u_free) < 0.0:
            continue  # both endpoints active: no boundary crossing guaranteed
        jumps = []
        for steps in (64, 128):
            ts = np.linspace(0.0, 1.0, steps + 1)
            controls = np.array([est.controller_.control(xa + t * (xb - xa)) for t in ts])
            jumps.append(float(np.max(np.linalg.norm(np.diff(controls, axis=0), axis=1))))
        made += 1
        if jumps[1] <= 0.0:
            continue
        ratio = jumps[0] / jumps[1]
        worst_ratio = min(worst_ratio, ratio)
        ok &= ratio >= 1.8
    return CheckResult("activity-boundary-continuity", bool(ok and made == segments),
                       f"{made} segments; worst halving ratio {worst_ratio:.2f}")


def _check_fixed_point(est) -> CheckResult:
    cache = build_node_cache(est.grid_, est.system_, est.basis_, est.input_weight_,
                             est.state_cost_, est.barrier)
    tensors = GalerkinTensors(cache)
    c = est.coef_
    A, b = tensors.system_matrices(c, tensors.activity(c))
    delta = float(np.max(np.abs(solve_linear(A, b) - c)))
    return CheckResult("fixed-point-consistency", delta <= est.tol,
                       f"one extra iteration moves coefficients by {delta:.2e}")


def run_all(cfg: ProblemConfig, seed: int = 0, samples: int = 1000) -> list[CheckResult]:
    """Run every applicable invariant suite for the configured problem."""
    rng = np.random.default_rng(seed)
    results = [
        _check_lie_fd(cfg, rng, min(samples, 1000)),
        _check_basis_fd(cfg, rng),
        _check_basis_coefficients(),
        _check_quadrature(cfg, rng),
        _check_projection_psd(rng),
        _check_min_norm_oracle(rng),
    ]
    g0 = np.asarray(cfg.system.g(np.zeros(cfg.system.n)), dtype=float)
    g1 = np.asarray(cfg.system.g(cfg.domain.upper * 0.5), dtype=float)
    if np.array_equal(g0, g1):
        results.insert(1, _check_constant_input_map(cfg, rng))

    est = GalerkinHJBController(
        system=cfg.system, state_weight=cfg.state_weight, input_weight=cfg.input_weight,
        barrier=cfg.barrier, domain=cfg.domain, d_min=cfg.d_min, d_max=cfg.d_max,
        quad_order=cfg.iteration.quad_order, max_iter=cfg.iteration.max_iter,
        tol=cfg.iteration.tol, activity_mode=cfg.iteration.activity_mode).fit()
    results.append(_check_fixed_point(est))
    if cfg.barrier is not None:
        results.append(_check_kkt(est, rng, samples))
        try:
            results.append(_check_controller_identity(est, rng, min(samples, 500)))
            results.append(_check_continuity(est, rng))
        except RuntimeError as exc:
            results.append(CheckResult("controller-form-identity", False, str(exc)))
    return results
