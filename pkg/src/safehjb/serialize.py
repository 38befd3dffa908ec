"""Binary-free text serialization for controllers, tensors and trajectories.

Controller and tensor files are whitespace-tokenized: each block starts
with a tag and its dimensions, followed by the numbers in row-major order.
Floats are written with ``repr`` so round-trips are exact. Trajectory CSVs
carry 12 significant digits per the interface contract.
"""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .barriers import BarrierSpec, CircleObstacle, ClassKappa, HalfSpace
from .basis import make_poly_basis
from .controllers import (
    Controller,
    MinNormController,
    SafeController,
    UnconstrainedController,
    ValueFunction,
)
from .exceptions import ConfigError
from .simulate import Trajectory
from .systems import ControlAffineSystem, LinearSystem, make_system, system_names

CONTROLLER_MAGIC = "safehjb-controller"
TENSORS_MAGIC = "safehjb-tensors"
FORMAT_VERSION = 1


def _fmt(value: float) -> str:
    return repr(float(value))


def _write_matrix(out: io.TextIOBase, tag: str, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=float)
    dims = " ".join(str(d) for d in arr.shape)
    out.write(f"{tag} {dims}\n")
    flat = arr.reshape(-1)
    per_line = arr.shape[-1] if arr.ndim else 1
    for start in range(0, flat.size, per_line):
        out.write(" ".join(_fmt(v) for v in flat[start:start + per_line]) + "\n")


class _Tokens:
    """Sequential token reader with format-error reporting."""

    def __init__(self, text: str, what: str):
        self.tokens = [t for line in text.splitlines()
                       for t in (line.split("#", 1)[0].split())]
        self.pos = 0
        self.what = what

    def next(self) -> str:
        if self.pos >= len(self.tokens):
            raise ConfigError(f"unexpected end of {self.what}")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, literal: str) -> None:
        tok = self.next()
        if tok != literal:
            raise ConfigError(f"malformed {self.what}: expected {literal!r}, got {tok!r}")

    def next_int(self) -> int:
        tok = self.next()
        try:
            return int(tok)
        except ValueError:
            raise ConfigError(f"malformed {self.what}: expected integer, got {tok!r}") from None

    def next_float(self) -> float:
        tok = self.next()
        try:
            return float(tok)
        except ValueError:
            raise ConfigError(f"malformed {self.what}: expected number, got {tok!r}") from None

    def next_array(self, shape: tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape))
        values = [self.next_float() for _ in range(count)]
        return np.array(values).reshape(shape)


def _write_system(out: io.TextIOBase, system: ControlAffineSystem) -> None:
    if system.name in system_names():
        out.write(f"system {system.name}\n")
    elif isinstance(system, LinearSystem):
        out.write("system linear\n")
        _write_matrix(out, "A", system.A)
        _write_matrix(out, "B", system.B)
    else:
        raise ConfigError(
            f"system {system.name!r} is neither a registry name nor linear; it cannot be serialized"
        )


def _read_system(tok: _Tokens) -> ControlAffineSystem:
    tok.expect("system")
    name = tok.next()
    if name == "linear":
        tok.expect("A")
        n = tok.next_int()
        n2 = tok.next_int()
        A = tok.next_array((n, n2))
        tok.expect("B")
        rows = tok.next_int()
        cols = tok.next_int()
        B = tok.next_array((rows, cols))
        return LinearSystem(A, B)
    return make_system(name)


def _write_barrier(out: io.TextIOBase, barrier: BarrierSpec) -> None:
    h = barrier.h
    if isinstance(h, CircleObstacle):
        out.write(f"barrier circle {barrier.k}\n")
        _write_matrix(out, "center", h.center)
        out.write(f"radius {_fmt(h.radius)}\n")
    elif isinstance(h, HalfSpace):
        out.write(f"barrier halfspace {barrier.k}\n")
        _write_matrix(out, "normal", h.normal)
        out.write(f"offset {_fmt(h.offset)}\n")
    else:
        raise ConfigError("only circle and halfspace barriers can be serialized")
    out.write(f"alphas {barrier.k}\n")
    for alpha in barrier.alphas:
        out.write(f"{alpha.kind} {_fmt(alpha.gain)} {alpha.power}\n")


def _read_barrier(tok: _Tokens) -> BarrierSpec:
    kind = tok.next()
    k = tok.next_int()
    if kind == "circle":
        tok.expect("center")
        dim = tok.next_int()
        center = tok.next_array((dim,))
        tok.expect("radius")
        radius = tok.next_float()
        h = CircleObstacle(center, radius)
    elif kind == "halfspace":
        tok.expect("normal")
        dim = tok.next_int()
        normal = tok.next_array((dim,))
        tok.expect("offset")
        offset = tok.next_float()
        h = HalfSpace(normal, offset)
    else:
        raise ConfigError(f"unknown barrier kind {kind!r}")
    tok.expect("alphas")
    count = tok.next_int()
    alphas = []
    for _ in range(count):
        akind = tok.next()
        gain = tok.next_float()
        power = tok.next_int()
        alphas.append(ClassKappa(akind, gain, power))
    return BarrierSpec(h, k, tuple(alphas))


def write_controller(controller: Controller, path) -> None:
    """Serialize a value-function-backed controller to the text format."""
    if isinstance(controller, SafeController):
        kind, value, system, R, barrier = ("safe-optimal", controller.value_fn,
                                           controller.system, controller.R,
                                           controller.barrier)
    elif isinstance(controller, MinNormController):
        nominal = controller.nominal
        if not isinstance(nominal, UnconstrainedController):
            raise ConfigError("only min-norm controllers over an unconstrained "
                              "nominal can be serialized")
        kind, value, system, R, barrier = ("min-norm", nominal.value_fn,
                                           nominal.system, nominal.R,
                                           controller.barrier)
    elif isinstance(controller, UnconstrainedController):
        kind, value, system, R, barrier = ("unconstrained", controller.value_fn,
                                           controller.system, controller.R, None)
    else:
        raise ConfigError(f"controller kind {controller.kind!r} has no serial form")

    out = io.StringIO()
    out.write(f"{CONTROLLER_MAGIC} {FORMAT_VERSION}\n")
    out.write(f"kind {kind}\n")
    _write_system(out, system)
    _write_matrix(out, "R", R)
    basis = value.basis
    out.write(f"basis {basis.n} {basis.d_min} {basis.d_max}\n")
    _write_matrix(out, "coefficients", value.c)
    if barrier is not None:
        _write_barrier(out, barrier)
    out.write("end\n")
    Path(path).write_text(out.getvalue())


def read_controller(path) -> Controller:
    """Load a controller file written by :func:`write_controller`."""
    text = Path(path).read_text()
    tok = _Tokens(text, f"controller file {path}")
    tok.expect(CONTROLLER_MAGIC)
    version = tok.next_int()
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported controller format version {version}")
    tok.expect("kind")
    kind = tok.next()
    system = _read_system(tok)
    tok.expect("R")
    m = tok.next_int()
    m2 = tok.next_int()
    R = tok.next_array((m, m2))
    tok.expect("basis")
    n = tok.next_int()
    d_min = tok.next_int()
    d_max = tok.next_int()
    basis = make_poly_basis(n, d_min, d_max)
    tok.expect("coefficients")
    N = tok.next_int()
    if N != basis.size:
        raise ConfigError(f"coefficient count {N} does not match basis size {basis.size}")
    c = tok.next_array((N,))
    value = ValueFunction(basis, c)
    barrier = None
    nxt = tok.next()
    if nxt == "barrier":
        barrier = _read_barrier(tok)
        nxt = tok.next()
    if nxt != "end":
        raise ConfigError(f"malformed controller file: trailing token {nxt!r}")

    if kind == "unconstrained":
        return UnconstrainedController(value, system, R)
    if kind == "safe-optimal":
        if barrier is None:
            raise ConfigError("safe-optimal controller file lacks a barrier block")
        return SafeController(value, barrier, system, R)
    if kind == "min-norm":
        if barrier is None:
            raise ConfigError("min-norm controller file lacks a barrier block")
        nominal = UnconstrainedController(value, system, R)
        return MinNormController(nominal, barrier, system)
    raise ConfigError(f"unknown controller kind {kind!r}")


def write_tensors(tensors, path) -> None:
    """Dump the assembled Galerkin arrays (dimensions header + row-major numbers)."""
    out = io.StringIO()
    out.write(f"{TENSORS_MAGIC} {FORMAT_VERSION}\n")
    for tag in ("A1", "b1", "GA1", "GA2", "Gb1", "Gb2", "Gb3"):
        _write_matrix(out, tag, getattr(tensors, tag))
    out.write("end\n")
    Path(path).write_text(out.getvalue())


def read_tensors(path) -> dict[str, np.ndarray]:
    text = Path(path).read_text()
    tok = _Tokens(text, f"tensor file {path}")
    tok.expect(TENSORS_MAGIC)
    version = tok.next_int()
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported tensor format version {version}")
    ndims = {"A1": 2, "b1": 1, "GA1": 3, "GA2": 2, "Gb1": 3, "Gb2": 2, "Gb3": 1}
    out = {}
    for tag, nd in ndims.items():
        tok.expect(tag)
        shape = tuple(tok.next_int() for _ in range(nd))
        out[tag] = tok.next_array(shape)
    tok.expect("end")
    return out


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """CSV with header ``t,x1..xn,u1..um,h,psi_min,lambda,cost``, 12 significant digits."""
    n = traj.states.shape[1]
    m = traj.controls.shape[1]
    header = (["t"] + [f"x{i+1}" for i in range(n)] + [f"u{i+1}" for i in range(m)]
              + ["h", "psi_min", "lambda", "cost"])
    lines = [",".join(header)]
    for i in range(len(traj)):
        row = ([traj.times[i]] + list(traj.states[i]) + list(traj.controls[i])
               + [traj.h_values[i], traj.psi_min[i], traj.lambda_trace[i],
                  traj.running_cost[i]])
        lines.append(",".join(f"{v:.12g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory_csv(path) -> Trajectory:
    text = Path(path).read_text().strip()
    if not text:
        raise ConfigError(f"trajectory file {path} is empty")
    lines = text.splitlines()
    header = lines[0].split(",")
    if header[0] != "t" or header[-4:] != ["h", "psi_min", "lambda", "cost"]:
        raise ConfigError(f"trajectory file {path} has an unexpected header")
    n = sum(1 for name in header if name.startswith("x"))
    m = sum(1 for name in header if name.startswith("u"))
    if len(header) != 1 + n + m + 4 or n == 0:
        raise ConfigError(f"trajectory file {path} has an unexpected header")
    try:
        data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    except ValueError:
        raise ConfigError(f"trajectory file {path} contains non-numeric data") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ConfigError(f"trajectory file {path} has ragged rows")
    return Trajectory(
        times=data[:, 0],
        states=data[:, 1:1 + n],
        controls=data[:, 1 + n:1 + n + m],
        h_values=data[:, 1 + n + m],
        psi_min=data[:, 2 + n + m],
        lambda_trace=data[:, 3 + n + m],
        running_cost=data[:, 4 + n + m],
    )
