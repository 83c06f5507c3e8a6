"""Implicit Euler state/adjoint solves of the heat equation and snapshot sets.

Time stepping for the state on the grid t_0 < ... < t_n::

    (M + dt_j A) y^j = M y^{j-1} + dt_j (F(t_j) + B u^j)

The adjoint mirrors it backwards in time with the data at the new level::

    p^n = 0,  (M + dt_{k+1} A) p^k = M p^{k+1} + dt_{k+1} (M y^k - Y_d(t_k))

``Y_d`` is the load vector of the desired state. On uniform grids this is the
exact discrete adjoint of the left-rectangle tracking cost, so
``alpha u^j + B^T p^j`` is then the exact gradient of the discrete cost. On
graded grids the exact discrete adjoint would mix dt_k and dt_{k+1} in one
step, which is inconsistent with the adjoint PDE; this scheme stays
consistent instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np

from .discretization import (
    SpatialGrid,
    TimeGrid,
    TridiagonalOperator,
    assemble_mass,
    assemble_stiffness,
    control_load,
    l2_norm_squared,
    load_vector,
)
from .problems import ProblemSpec


@dataclass(frozen=True)
class Trajectory:
    """Space-time field: one interior coefficient vector per time node."""

    grid: TimeGrid
    values: np.ndarray  # (dof, N)

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != self.grid.dof:
            raise ValueError(
                f"expected {self.grid.dof} time levels, got array of shape {self.values.shape}"
            )


@dataclass(frozen=True)
class ControlTrajectory:
    """m control intensities sampled at every time node."""

    grid: TimeGrid
    values: np.ndarray  # (dof, m)

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != self.grid.dof:
            raise ValueError(
                f"expected {self.grid.dof} time levels, got array of shape {self.values.shape}"
            )

    @classmethod
    def zeros(cls, grid: TimeGrid, m: int) -> "ControlTrajectory":
        return cls(grid, np.zeros((grid.dof, m)))

    def interpolate(self, grid: TimeGrid) -> "ControlTrajectory":
        """Piecewise-linear transfer onto another grid on the same horizon."""
        vals = np.stack(
            [np.interp(grid.nodes, self.grid.nodes, self.values[:, i])
             for i in range(self.values.shape[1])],
            axis=1,
        )
        return ControlTrajectory(grid, vals)


@dataclass(frozen=True)
class SnapshotSet:
    """State, adjoint and adjoint time-derivative snapshots on one time grid."""

    grid: TimeGrid
    state: np.ndarray
    adjoint: np.ndarray
    adjoint_dt: np.ndarray

    @property
    def groups(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.state, self.adjoint, self.adjoint_dt

    def columns(self) -> tuple[np.ndarray, np.ndarray]:
        """All snapshots as an (N, 3 * dof) matrix with matching weights."""
        Z = np.concatenate([g.T for g in self.groups], axis=1)
        w = np.tile(self.grid.weights, 3)
        return Z, w


class FullOrderModel:
    """P1 finite element semi-discretisation of a :class:`ProblemSpec`."""

    def __init__(self, spec: ProblemSpec, sgrid: SpatialGrid):
        self.spec = spec
        self.sgrid = sgrid
        self.M = assemble_mass(sgrid)
        self.A = assemble_stiffness(sgrid)
        self.B = np.stack([control_load(sgrid, chi) for chi in spec.shapes], axis=1)

    @cached_property
    def y0(self) -> np.ndarray:
        return np.asarray(self.spec.y0(self.sgrid.interior), dtype=float)

    def _loads(self, field, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        vals = load_vector(self.sgrid, lambda x: field(x[..., None], t))
        return vals.T  # (len(t), N)

    def source(self, t) -> np.ndarray:
        return self._loads(self.spec.f, t)

    def desired_load(self, t) -> np.ndarray:
        return self._loads(self.spec.yd, t)

    def desired_norm2(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return l2_norm_squared(self.sgrid, lambda x: self.spec.yd(x[..., None], t))

    def interpolate(self, field, t) -> np.ndarray:
        """Nodal interpolant of a space-time field at times ``t``: (len(t), N)."""
        t = np.asarray(t, dtype=float)
        return field(self.sgrid.interior[None, :], t[:, None])

    def shifted(self, dt: float) -> TridiagonalOperator:
        return self.M + self.A.scaled(dt)


@lru_cache(maxsize=32)
def full_model(spec: ProblemSpec, sgrid: SpatialGrid) -> FullOrderModel:
    return FullOrderModel(spec, sgrid)


# ------------------------------------------------------------ generic steppers

def march_forward(mass: Callable, shifted_solve: Callable, tgrid: TimeGrid,
                  x0: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Implicit Euler: shifted(dt_j) x^j = mass(x^{j-1}) + dt_j rhs[j]."""
    dt = tgrid.dt
    out = np.empty((tgrid.dof,) + np.shape(x0))
    out[0] = x0
    for j in range(1, tgrid.dof):
        out[j] = shifted_solve(dt[j - 1], mass(out[j - 1]) + dt[j - 1] * rhs[j])
    return out


def march_backward(mass: Callable, shifted_solve: Callable, tgrid: TimeGrid,
                   residual: np.ndarray) -> np.ndarray:
    """Discrete adjoint recursion; ``residual[k]`` is M y^k - Y_d(t_k)."""
    dt = tgrid.dt
    n = tgrid.n
    out = np.zeros((tgrid.dof,) + residual.shape[1:])
    for k in range(n - 1, -1, -1):
        out[k] = shifted_solve(dt[k], mass(out[k + 1]) + dt[k] * residual[k])
    return out


# ------------------------------------------------------------------ full order

def solve_state(spec: ProblemSpec, sgrid: SpatialGrid, tgrid: TimeGrid,
                u: ControlTrajectory) -> Trajectory:
    if u.grid != tgrid:
        raise ValueError("control must live on the solver's time grid")
    model = full_model(spec, sgrid)
    rhs = model.source(tgrid.nodes) + u.values @ model.B.T
    y = march_forward(model.M.matvec, lambda dt, b: model.shifted(dt).solve(b),
                      tgrid, model.y0, rhs)
    return Trajectory(tgrid, y)


def solve_adjoint(spec: ProblemSpec, sgrid: SpatialGrid, tgrid: TimeGrid,
                  y: Trajectory) -> Trajectory:
    if y.grid != tgrid:
        raise ValueError("state must live on the solver's time grid")
    model = full_model(spec, sgrid)
    residual = model.M.matvec(y.values.T).T - model.desired_load(tgrid.nodes)
    p = march_backward(model.M.matvec, lambda dt, b: model.shifted(dt).solve(b),
                       tgrid, residual)
    return Trajectory(tgrid, p)


def time_derivative_values(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Three-point nonuniform centred differences, one-sided at the ends."""
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    if t.size < 2:
        raise ValueError("need at least two time levels")
    out[0] = (v[1] - v[0]) / (t[1] - t[0])
    out[-1] = (v[-1] - v[-2]) / (t[-1] - t[-2])
    if t.size > 2:
        h1 = (t[1:-1] - t[:-2]).reshape((-1,) + (1,) * (v.ndim - 1))
        h2 = (t[2:] - t[1:-1]).reshape((-1,) + (1,) * (v.ndim - 1))
        out[1:-1] = (-h2 / (h1 * (h1 + h2)) * v[:-2]
                     + (h2 - h1) / (h1 * h2) * v[1:-1]
                     + h1 / (h2 * (h1 + h2)) * v[2:])
    return out


def time_derivative(traj: Trajectory) -> Trajectory:
    return Trajectory(traj.grid, time_derivative_values(traj.grid.nodes, traj.values))


def generate_snapshots(spec: ProblemSpec, sgrid: SpatialGrid, tgrid: TimeGrid,
                       u: ControlTrajectory) -> SnapshotSet:
    """State, adjoint and adjoint-derivative snapshots for the control ``u``.

    The first state snapshot is the initial condition itself.
    """
    y = solve_state(spec, sgrid, tgrid, u)
    p = solve_adjoint(spec, sgrid, tgrid, y)
    return SnapshotSet(tgrid, y.values, p.values, time_derivative(p).values)
