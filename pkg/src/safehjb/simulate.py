"""Closed-loop simulation with cost accumulation and safety monitoring.

The running cost is integrated as an augmented state under the same
classical Runge-Kutta scheme as the dynamics, and the controller is
evaluated at every stage (continuous feedback, no hold).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .barriers import BarrierSpec, in_safe_set, psi_chain
from .controllers import Controller, ValueFunction
from .exceptions import NonFiniteError, UnsafeStartError
from .systems import ControlAffineSystem, DomainBox
from .validation import as_weight_matrix, check_vector


@dataclass(frozen=True)
class SimConfig:
    """Fixed-step integration horizon; stops early once the state is regulated."""

    dt: float = 1e-3
    t_final: float = 10.0
    stop_radius: float = 1e-4

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if not self.t_final > 0.0:
            raise ValueError("t_final must be positive")
        if self.stop_radius < 0.0:
            raise ValueError("stop_radius must be nonnegative")


@dataclass
class Trajectory:
    """Sampled closed-loop run; ``running_cost`` is cumulative and non-decreasing."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    h_values: np.ndarray
    psi_min: np.ndarray
    lambda_trace: np.ndarray
    running_cost: np.ndarray

    def __post_init__(self):
        lengths = {len(self.times), len(self.states), len(self.controls),
                   len(self.h_values), len(self.psi_min), len(self.lambda_trace),
                   len(self.running_cost)}
        if len(lengths) != 1:
            raise ValueError("trajectory arrays must have equal length")

    @property
    def total_cost(self) -> float:
        return float(self.running_cost[-1])

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.times)


def rk4_step(deriv, x: np.ndarray, dt: float) -> np.ndarray:
    """One classical 4th-order Runge-Kutta step of ``dx/dt = deriv(x)``."""
    k1 = np.asarray(deriv(x), dtype=float)
    k2 = np.asarray(deriv(x + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(deriv(x + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(deriv(x + dt * k3), dtype=float)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("integration produced a non-finite state")
    return out


def simulate(system: ControlAffineSystem, controller: Controller, x0, state_cost,
             input_weight, config: SimConfig, barrier: BarrierSpec | None = None,
             domain: DomainBox | None = None) -> Trajectory:
    """Run the closed loop from ``x0`` and accumulate the running cost.

    The cost integrand is ``state_cost(x) + u^T R u / 2``. When the
    controller is safety-aware the start must lie strictly inside the safe
    set. Leaving the synthesis domain is flagged once (the controller then
    extrapolates) but does not stop the run.
    """
    x0 = check_vector(x0, system.n, name="x0")
    R = as_weight_matrix(input_weight, system.m, name="input_weight")
    if domain is not None and not domain.contains(x0):
        raise UnsafeStartError(f"initial state {x0} is outside the synthesis domain")
    if barrier is not None and controller.safety_aware:
        if not in_safe_set(barrier, system, x0, strict=True):
            raise UnsafeStartError(
                f"initial state {x0} is not strictly inside the safe set"
            )

    n = system.n

    def z_deriv(z):
        x = z[:n]
        u = np.asarray(controller(x), dtype=float)
        if not np.all(np.isfinite(u)):
            raise NonFiniteError("controller produced a non-finite control")
        dx = np.asarray(system.f(x), dtype=float) + \
            np.asarray(system.g(x), dtype=float).reshape(system.n, system.m) @ u
        dc = float(state_cost(x)) + 0.5 * float(u @ R @ u)
        return np.concatenate([dx, [dc]])

    n_steps = max(1, int(round(config.t_final / config.dt)))
    times, states, controls = [], [], []
    h_values, psi_mins, lambdas, costs = [], [], [], []
    left_domain = False

    z = np.concatenate([x0, [0.0]])
    for step in range(n_steps + 1):
        t = step * config.dt
        x = z[:n]
        u, lam = controller.control_and_multiplier(x)
        times.append(t)
        states.append(x.copy())
        controls.append(np.asarray(u, dtype=float).copy())
        if barrier is not None:
            psi = psi_chain(barrier, system, x)
            h_values.append(float(barrier.h.value(x)))
            psi_mins.append(float(psi.min()))
        else:
            h_values.append(np.nan)
            psi_mins.append(np.nan)
        lambdas.append(float(lam))
        costs.append(float(z[n]))
        if domain is not None and not left_domain and not domain.contains(x):
            left_domain = True
            warnings.warn(
                f"trajectory left the synthesis domain at t={t:.6g}; "
                "the controller is extrapolating",
                stacklevel=2,
            )
        if float(np.linalg.norm(x)) < config.stop_radius or step == n_steps:
            break
        z = rk4_step(z_deriv, z, config.dt)

    return Trajectory(
        times=np.array(times),
        states=np.array(states),
        controls=np.array(controls),
        h_values=np.array(h_values),
        psi_min=np.array(psi_mins),
        lambda_trace=np.array(lambdas),
        running_cost=np.array(costs),
    )


@dataclass(frozen=True)
class SafetyReport:
    min_h: float
    min_psi: float
    violations: int


def safety_report(traj: Trajectory, tol_safety: float = 1e-6) -> SafetyReport:
    """Barrier minima over the samples and the count of real violations."""
    if len(traj) == 0:
        raise ValueError("trajectory is empty")
    h = traj.h_values
    psi = traj.psi_min
    if np.all(np.isnan(h)):
        return SafetyReport(min_h=np.nan, min_psi=np.nan, violations=0)
    min_h = float(np.nanmin(h))
    min_psi = float(np.nanmin(psi))
    violations = int(np.sum(h < -tol_safety))
    return SafetyReport(min_h=min_h, min_psi=min_psi, violations=violations)


@dataclass(frozen=True)
class LyapunovReport:
    max_excess: float
    residual_bound: float | None
    satisfied: bool | None


def lyapunov_report(traj: Trajectory, value_fn: ValueFunction,
                    system: ControlAffineSystem, state_cost,
                    residual_bound: float | None = None) -> LyapunovReport:
    """Largest violation of the decrease condition ``dV/dt <= -q(x)`` along a run.

    ``dV/dt`` is computed analytically as ``grad V . (f + g u)`` at each
    sample. For an approximate value function the excess is bounded by the
    achieved HJB residual; pass that bound to get a pass/fail verdict at
    twice its size.
    """
    excess = -np.inf
    for x, u in zip(traj.states, traj.controls):
        xdot = np.asarray(system.f(x), dtype=float) + \
            np.asarray(system.g(x), dtype=float).reshape(system.n, system.m) @ u
        dv = float(value_fn.gradient(x) @ xdot)
        excess = max(excess, dv + float(state_cost(x)))
    satisfied = None if residual_bound is None else bool(excess <= 2.0 * residual_bound)
    return LyapunovReport(max_excess=float(excess), residual_bound=residual_bound,
                          satisfied=satisfied)
