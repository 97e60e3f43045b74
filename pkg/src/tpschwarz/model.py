"""Continuous control problem, its space/time discretization and discrete norms.

The problem is the linear-quadratic tracking problem on ``Q = (0, L) x (0, T)``

    min 1/2 ||y - yhat||^2 + nu/2 ||u||^2   s.t.  y_t - y_xx = u,

with homogeneous Dirichlet data. Its reduced optimality system couples the
state ``y`` (forward in time) and the adjoint ``p`` (backward in time), and the
optimal control is ``u = p / nu``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

CONFIG_SCHEMA = "tpschwarz/problem-v1"
SCENARIOS = ("manufactured", "heatcool")
FIELD_ROLES = ("state", "adjoint", "control", "target")


class ConfigError(ValueError):
    """Invalid problem definition or configuration document."""


@dataclass(frozen=True)
class ProblemSpec:
    """Continuous problem data.

    ``target(x, t)`` and ``initial(x)`` must broadcast over numpy arrays.
    """

    length: float
    horizon: float
    nu: float
    target: Callable
    initial: Callable = field(default=lambda x: np.zeros_like(np.asarray(x, dtype=float)))

    def __post_init__(self):
        for name in ("length", "horizon", "nu"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid of ``M`` interior nodes on ``(0, length)``."""

    M: int
    length: float = 1.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ConfigError(f"M must be a positive integer, got {self.M!r}")
        if not self.length > 0:
            raise ConfigError(f"length must be positive, got {self.length!r}")

    @property
    def h(self) -> float:
        return self.length / (self.M + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.M + 1)


@dataclass(frozen=True)
class TimeDecomposition:
    """``N`` time subdomains of length ``dt_sub``, each with ``K`` steps."""

    N: int
    dt_sub: float
    K: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ConfigError(f"N must be an integer >= 2, got {self.N!r}")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"K must be a positive integer, got {self.K!r}")
        if not self.dt_sub > 0:
            raise ConfigError(f"dt_sub must be positive, got {self.dt_sub!r}")

    @property
    def h_t(self) -> float:
        return self.dt_sub / self.K

    @property
    def horizon(self) -> float:
        return self.N * self.dt_sub

    @property
    def n_levels(self) -> int:
        return self.N * self.K + 1

    @property
    def breakpoints(self) -> np.ndarray:
        return self.dt_sub * np.arange(self.N + 1)

    @property
    def times(self) -> np.ndarray:
        """All global time levels ``0, h_t, ..., N*K*h_t``."""
        return self.h_t * np.arange(self.n_levels)


@dataclass(frozen=True)
class SpaceTimeField:
    """Nodal values, time-major: ``values[k, j]`` at ``t_k`` and ``x_{j+1}``."""

    values: np.ndarray
    role: str = "state"

    def __post_init__(self):
        if self.role not in FIELD_ROLES:
            raise ValueError(f"unknown field role {self.role!r}")
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("field values must be a 2-d (time, space) array")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def check_shape(self, grid: SpatialGrid, decomp: TimeDecomposition) -> None:
        expected = (decomp.n_levels, grid.M)
        if self.values.shape != expected:
            raise ValueError(f"field has shape {self.values.shape}, expected {expected}")


def build_laplacian(grid: SpatialGrid) -> sp.csr_matrix:
    """3-point Dirichlet finite-difference approximation of ``-d^2/dx^2``."""
    h2 = grid.h ** 2
    main = np.full(grid.M, 2.0 / h2)
    off = np.full(grid.M - 1, -1.0 / h2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def trapezoid_weights(decomp: TimeDecomposition) -> np.ndarray:
    w = np.full(decomp.n_levels, decomp.h_t)
    w[0] = w[-1] = 0.5 * decomp.h_t
    return w


def l2q_norm(field: SpaceTimeField | np.ndarray, grid: SpatialGrid,
             decomp: TimeDecomposition) -> float:
    """Discrete L2(Q) norm: trapezoidal rule in time, weight ``h`` per node."""
    if not isinstance(field, SpaceTimeField):
        field = SpaceTimeField(np.asarray(field, dtype=float))
    field.check_shape(grid, decomp)
    v = field.values
    w = trapezoid_weights(decomp)
    return math.sqrt(grid.h * float(w @ np.einsum("kj,kj->k", v, v)))


def sample(func: Callable, grid: SpatialGrid, decomp: TimeDecomposition,
           role: str = "target") -> SpaceTimeField:
    """Evaluate ``func(x, t)`` on every (time level, node) pair."""
    t = decomp.times[:, None]
    x = grid.nodes[None, :]
    values = np.broadcast_to(func(x, t), (decomp.n_levels, grid.M))
    return SpaceTimeField(np.array(values, dtype=float), role)


def manufactured_solution(nu: float, T: float):
    """Closed-form ``(y, p, target)`` on ``(0, 1) x (0, T)`` with ``y0 = 0``.

    The target is the one that makes ``(y, p)`` satisfy the optimality system
    exactly. A variant with ``pi**2 * t`` in the last term
    leaves a residual; pass ``target_variant="pi2"`` to
    :func:`manufactured_target` to get that form.
    """
    return (_manufactured_y(T), _manufactured_p(nu, T),
            manufactured_target(nu, T))


def _manufactured_y(T):
    pi2 = np.pi ** 2
    a = math.exp(-pi2 * T) / (1.0 + pi2 * T)

    def y(x, t):
        x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
        return np.sin(np.pi * x) * (t * np.exp(-pi2 * t) - a * t)

    return y


def _manufactured_p(nu, T):
    pi2 = np.pi ** 2
    a = math.exp(-pi2 * T) / (1.0 + pi2 * T)

    def p(x, t):
        x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
        return nu * np.sin(np.pi * x) * (np.exp(-pi2 * t) - a * (1.0 + pi2 * t))

    return p


def manufactured_target(nu: float, T: float, target_variant: str = "exact") -> Callable:
    pi2 = np.pi ** 2
    a = math.exp(-pi2 * T) / (1.0 + pi2 * T)
    if target_variant == "exact":
        coef = pi2 ** 2
    elif target_variant == "pi2":
        coef = pi2
    else:
        raise ValueError(f"unknown target variant {target_variant!r}")

    def yhat(x, t):
        x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
        return nu * np.sin(np.pi * x) * (
            (t / nu + 2.0 * pi2) * np.exp(-pi2 * t) - a * (t / nu + coef * t))

    return yhat


def heatcool_target(L: float, dt_sub: float, N: int) -> Callable:
    """Periodic heating-cooling target: one Gaussian pulse per period."""
    if not (L > 0 and dt_sub > 0 and N >= 1):
        raise ValueError("heatcool_target needs L > 0, dt_sub > 0, N >= 1")
    centers = (2.0 * np.arange(1, N + 1) - 1.0) * dt_sub / 2.0

    def yhat(x, t):
        x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
        dx2 = (x - L / 2.0) ** 2
        out = np.zeros(np.broadcast(x, t).shape)
        for c in centers:
            out = out + np.exp(-50.0 * (dx2 + (t - c) ** 2))
        return 10.0 * out

    return yhat


_CONFIG_KEYS = {"schema", "L", "T", "nu", "N", "K", "M", "scenario"}
_REQUIRED_KEYS = {"L", "T", "nu", "N", "K", "M", "scenario"}


def problem_from_config(cfg: dict):
    """Build ``(ProblemSpec, SpatialGrid, TimeDecomposition)`` from a config dict."""
    if not isinstance(cfg, dict):
        raise ConfigError("problem config must be a JSON object")
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = _REQUIRED_KEYS - set(cfg)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    schema = cfg.get("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ConfigError(f"unsupported schema {schema!r} (expected {CONFIG_SCHEMA!r})")
    for key in ("N", "K", "M"):
        if isinstance(cfg[key], bool) or not isinstance(cfg[key], int):
            raise ConfigError(f"{key} must be an integer, got {cfg[key]!r}")
    for key in ("L", "T", "nu"):
        if isinstance(cfg[key], bool) or not isinstance(cfg[key], (int, float)):
            raise ConfigError(f"{key} must be a number, got {cfg[key]!r}")
    L, T, nu = float(cfg["L"]), float(cfg["T"]), float(cfg["nu"])
    N, K, M = cfg["N"], cfg["K"], cfg["M"]
    grid = SpatialGrid(M, L)
    decomp = TimeDecomposition(N, T / N if N else 0.0, K)
    scenario = cfg["scenario"]
    if scenario == "manufactured":
        if not math.isclose(L, 1.0):
            raise ConfigError("the manufactured scenario is defined on (0, 1); set L = 1")
        target = manufactured_target(nu, T)
    elif scenario == "heatcool":
        target = heatcool_target(L, decomp.dt_sub, N)
    else:
        raise ConfigError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    return ProblemSpec(L, T, nu, target), grid, decomp


def load_problem(path) -> tuple[ProblemSpec, SpatialGrid, TimeDecomposition, dict]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return (*problem_from_config(cfg), cfg)


def write_field_csv(field: SpaceTimeField, grid: SpatialGrid,
                    decomp: TimeDecomposition, path) -> None:
    """Dump a field as ``t,x,value`` rows, time-major."""
    field.check_shape(grid, decomp)
    x = grid.nodes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "value"])
        for t, row in zip(decomp.times, field.values):
            for xj, v in zip(x, row):
                w.writerow([f"{t:.17g}", f"{xj:.17g}", f"{v:.17g}"])
