"""Flat key-value problem configuration.

Files are lines of ``key = value`` with ``#`` comments. Vectors separate
entries with commas or spaces; matrices and state lists separate rows with
semicolons. Unknown and duplicate keys are rejected. See the README for the
full schema.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .barriers import BarrierSpec, CircleObstacle, ClassKappa, HalfSpace
from .exceptions import ConfigError
from .galerkin import IterationConfig
from .simulate import SimConfig
from .systems import (
    ControlAffineSystem,
    DomainBox,
    LinearSystem,
    QuadraticStateCost,
    make_system,
    system_names,
)
from .validation import as_psd_weight_matrix, as_weight_matrix

_SCALAR_KEYS = {
    "state_weight", "input_weight",
    "barrier.radius", "barrier.offset",
    "solver.tol", "sim.dt", "sim.t_final", "sim.stop_radius",
}
_INT_KEYS = {"basis.min_degree", "basis.max_degree", "quadrature.order",
             "solver.max_iter", "barrier.degree"}
_VECTOR_KEYS = {"domain.lower", "domain.upper", "barrier.center",
                "barrier.normal", "barrier.gains", "barrier.powers"}
_MATRIX_KEYS = {"system.A", "system.B", "state_weight", "input_weight",
                "initial_conditions"}
_STRING_KEYS = {"system", "barrier.kind", "solver.activity_mode"}

KNOWN_KEYS = (_SCALAR_KEYS | _INT_KEYS | _VECTOR_KEYS | _MATRIX_KEYS | _STRING_KEYS)

_DEFAULTS = {
    "basis.min_degree": 2,
    "basis.max_degree": 4,
    "quadrature.order": 8,
    "solver.max_iter": 200,
    "solver.tol": 1e-8,
    "solver.activity_mode": "per-iteration",
    "sim.dt": 1e-3,
    "sim.t_final": 10.0,
    "sim.stop_radius": 1e-4,
}


@dataclass
class ProblemConfig:
    """A fully resolved synthesis/simulation problem."""

    system: ControlAffineSystem
    state_weight: np.ndarray
    input_weight: np.ndarray
    domain: DomainBox
    d_min: int
    d_max: int
    iteration: IterationConfig
    sim: SimConfig
    barrier: BarrierSpec | None = None
    initial_conditions: list = field(default_factory=list)
    source: str = "<memory>"

    @property
    def state_cost(self) -> QuadraticStateCost:
        return QuadraticStateCost(self.state_weight)


def _parse_vector(raw: str, key: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in raw.replace(",", " ").split()])
    except ValueError:
        raise ConfigError(f"key {key!r}: could not parse vector from {raw!r}") from None


def _parse_matrix(raw: str, key: str) -> np.ndarray:
    rows = [r for r in (part.strip() for part in raw.split(";")) if r]
    parsed = [_parse_vector(r, key) for r in rows]
    lengths = {len(r) for r in parsed}
    if len(lengths) != 1:
        raise ConfigError(f"key {key!r}: rows have unequal lengths")
    return np.array(parsed)


def parse_config_text(text: str, source: str = "<memory>") -> ProblemConfig:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {body!r}")
        key, _, raw = body.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if not raw:
            raise ConfigError(f"{source}:{lineno}: key {key!r} has no value")
        entries[key] = raw

    def take(key, default=None):
        return entries.pop(key, default)

    try:
        return _build(entries, take, source)
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def _build(entries, take, source) -> ProblemConfig:
    sys_name = take("system")
    if sys_name is None:
        raise ConfigError(f"{source}: missing required key 'system'")
    if sys_name == "linear":
        raw_A = take("system.A")
        raw_B = take("system.B")
        if raw_A is None or raw_B is None:
            raise ConfigError(f"{source}: linear systems require system.A and system.B")
        system: ControlAffineSystem = LinearSystem(_parse_matrix(raw_A, "system.A"),
                                                   _parse_matrix(raw_B, "system.B"))
    else:
        if sys_name not in system_names():
            raise ConfigError(
                f"{source}: unknown system {sys_name!r}; expected 'linear' or one of "
                f"{', '.join(system_names())}")
        system = make_system(sys_name)
        for key in ("system.A", "system.B"):
            if take(key) is not None:
                raise ConfigError(f"{source}: {key} is only valid with system = linear")

    def scalar(key, default=None):
        raw = take(key, None)
        if raw is None:
            if default is None and key not in _DEFAULTS:
                raise ConfigError(f"{source}: missing required key {key!r}")
            return _DEFAULTS.get(key, default)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{source}: key {key!r}: expected a number, got {raw!r}") from None

    def integer(key):
        raw = take(key, None)
        if raw is None:
            return _DEFAULTS[key]
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{source}: key {key!r}: expected an integer, got {raw!r}") from None

    raw_q = take("state_weight")
    raw_r = take("input_weight")
    if raw_q is None or raw_r is None:
        raise ConfigError(f"{source}: state_weight and input_weight are required")
    Q = _parse_matrix(raw_q, "state_weight") if ";" in raw_q else _parse_vector(raw_q, "state_weight")
    R = _parse_matrix(raw_r, "input_weight") if ";" in raw_r else _parse_vector(raw_r, "input_weight")
    if Q.size == 1:
        Q = float(Q.reshape(-1)[0])
    if R.size == 1:
        R = float(R.reshape(-1)[0])
    Q = as_psd_weight_matrix(Q, system.n, name="state_weight")
    R = as_weight_matrix(R, system.m, name="input_weight")

    raw_lo = take("domain.lower")
    raw_hi = take("domain.upper")
    if raw_lo is None or raw_hi is None:
        raise ConfigError(f"{source}: domain.lower and domain.upper are required")
    lower = _parse_vector(raw_lo, "domain.lower")
    upper = _parse_vector(raw_hi, "domain.upper")
    if lower.size == 1:
        lower = np.full(system.n, lower[0])
    if upper.size == 1:
        upper = np.full(system.n, upper[0])
    if lower.size != system.n or upper.size != system.n:
        raise ConfigError(f"{source}: domain bounds must have length {system.n}")
    domain = DomainBox(lower, upper)

    d_min = integer("basis.min_degree")
    d_max = integer("basis.max_degree")
    if d_min < 2:
        raise ConfigError(
            f"{source}: basis.min_degree must be >= 2 so the value function vanishes "
            "at the origin")
    if d_max < d_min:
        raise ConfigError(f"{source}: basis.max_degree must be >= basis.min_degree")

    mode = take("solver.activity_mode", _DEFAULTS["solver.activity_mode"])
    try:
        iteration = IterationConfig(
            quad_order=integer("quadrature.order"),
            max_iter=integer("solver.max_iter"),
            tol=scalar("solver.tol"),
            activity_mode=mode,
        )
        sim = SimConfig(dt=scalar("sim.dt"), t_final=scalar("sim.t_final"),
                        stop_radius=scalar("sim.stop_radius"))
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    barrier = _build_barrier(entries, take, system, source)

    ics = []
    raw_ics = take("initial_conditions")
    if raw_ics is not None:
        mat = _parse_matrix(raw_ics, "initial_conditions")
        if mat.shape[1] != system.n:
            raise ConfigError(
                f"{source}: initial conditions must have {system.n} entries per row")
        ics = [row for row in mat]
        for row in ics:
            if not domain.contains(row):
                raise ConfigError(f"{source}: initial condition {row} lies outside the domain")

    if entries:
        leftover = ", ".join(sorted(entries))
        raise ConfigError(f"{source}: keys not applicable to this problem: {leftover}")

    return ProblemConfig(system=system, state_weight=Q, input_weight=R, domain=domain,
                         d_min=d_min, d_max=d_max, iteration=iteration, sim=sim,
                         barrier=barrier, initial_conditions=ics, source=source)


def _build_barrier(entries, take, system, source) -> BarrierSpec | None:
    kind = take("barrier.kind")
    if kind is None:
        for key in list(entries):
            if key.startswith("barrier."):
                raise ConfigError(f"{source}: {key} requires barrier.kind")
        return None
    degree_raw = take("barrier.degree")
    k = int(degree_raw) if degree_raw is not None else 1
    gains_raw = take("barrier.gains")
    if gains_raw is None:
        raise ConfigError(f"{source}: barrier.gains is required with a barrier")
    gains = _parse_vector(gains_raw, "barrier.gains")
    powers_raw = take("barrier.powers")
    powers = (_parse_vector(powers_raw, "barrier.powers").astype(int)
              if powers_raw is not None else np.ones(len(gains), dtype=int))
    if len(gains) != k or len(powers) != k:
        raise ConfigError(f"{source}: barrier.gains/powers must list exactly k={k} entries")
    try:
        alphas = tuple(
            ClassKappa("linear" if p == 1 else "odd-power", float(g), int(p))
            for g, p in zip(gains, powers))
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    if kind == "circle":
        center_raw = take("barrier.center")
        radius = take("barrier.radius")
        if center_raw is None or radius is None:
            raise ConfigError(f"{source}: circle barriers require barrier.center and barrier.radius")
        center = _parse_vector(center_raw, "barrier.center")
        if center.size != system.n:
            raise ConfigError(f"{source}: barrier.center must have length {system.n}")
        h = CircleObstacle(center, float(radius))
    elif kind == "halfspace":
        normal_raw = take("barrier.normal")
        offset = take("barrier.offset")
        if normal_raw is None or offset is None:
            raise ConfigError(f"{source}: halfspace barriers require barrier.normal and barrier.offset")
        normal = _parse_vector(normal_raw, "barrier.normal")
        if normal.size != system.n:
            raise ConfigError(f"{source}: barrier.normal must have length {system.n}")
        h = HalfSpace(normal, float(offset))
    else:
        raise ConfigError(f"{source}: unknown barrier.kind {kind!r}")
    try:
        return BarrierSpec(h, k, alphas)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def bundled_config_names() -> tuple[str, ...]:
    pkg = resources.files("safehjb") / "configs"
    return tuple(sorted(p.name[:-4] for p in pkg.iterdir() if p.name.endswith(".cfg")))


def load_config(path_or_name: str) -> ProblemConfig:
    """Load a config file by path, or a bundled config by bare name."""
    p = Path(path_or_name)
    if p.exists():
        return parse_config_text(p.read_text(), source=str(p))
    bundle = resources.files("safehjb") / "configs" / f"{path_or_name}.cfg"
    if bundle.is_file():
        return parse_config_text(bundle.read_text(), source=f"bundled:{path_or_name}")
    raise ConfigError(
        f"config {path_or_name!r} is neither a file nor a bundled name "
        f"(bundled: {', '.join(bundled_config_names())})")
