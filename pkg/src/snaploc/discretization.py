"""Uniform 1D P1 finite elements on (0, 1) and nonuniform time grids."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

# two-point Gauss rule on the reference interval [0, 1]
_GAUSS_X = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_GAUSS_W = np.array([0.5, 0.5])


class InvalidGridError(ValueError):
    """Raised for grids that cannot carry the requested operator."""


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid on [0, 1] with ``n_x`` subintervals.

    Only the ``n_x - 1`` interior nodes carry unknowns; the homogeneous
    Dirichlet nodes x=0 and x=1 are eliminated.
    """

    n_x: int

    def __post_init__(self):
        if int(self.n_x) != self.n_x or self.n_x < 1:
            raise InvalidGridError(f"n_x must be a positive integer, got {self.n_x}")

    @classmethod
    def from_spacing(cls, h: float) -> "SpatialGrid":
        n_x = int(round(1.0 / h))
        if n_x < 1 or abs(n_x * h - 1.0) > 1e-9:
            raise InvalidGridError(f"spacing {h} does not divide the unit interval")
        return cls(n_x)

    @property
    def h(self) -> float:
        return 1.0 / self.n_x

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_x + 1) / self.n_x

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    @property
    def n_interior(self) -> int:
        return self.n_x - 1

    def gauss_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Element-wise two-point Gauss nodes and weights, shape (n_x, 2)."""
        left = self.nodes[:-1, None]
        return left + self.h * _GAUSS_X[None, :], np.broadcast_to(
            self.h * _GAUSS_W, (self.n_x, 2)
        )


@dataclass(frozen=True)
class TridiagonalOperator:
    """Symmetric-or-not tridiagonal matrix stored by its three diagonals."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray

    @property
    def size(self) -> int:
        return self.diag.size

    def __add__(self, other: "TridiagonalOperator") -> "TridiagonalOperator":
        return TridiagonalOperator(self.sub + other.sub, self.diag + other.diag,
                                   self.sup + other.sup)

    def scaled(self, c: float) -> "TridiagonalOperator":
        return TridiagonalOperator(c * self.sub, c * self.diag, c * self.sup)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Apply to a vector, or column-wise to an (N, k) array."""
        v = np.asarray(v, dtype=float)
        out = self.diag.reshape((-1,) + (1,) * (v.ndim - 1)) * v
        if self.size > 1:
            out[1:] += self.sub.reshape((-1,) + (1,) * (v.ndim - 1)) * v[:-1]
            out[:-1] += self.sup.reshape((-1,) + (1,) * (v.ndim - 1)) * v[1:]
        return out

    __matmul__ = matvec

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        ab = np.zeros((3, self.size))
        ab[0, 1:] = self.sup
        ab[1] = self.diag
        ab[2, :-1] = self.sub
        return la.solve_banded((1, 1), ab, rhs)

    def to_sparse(self) -> sp.csr_matrix:
        return sp.diags([self.sub, self.diag, self.sup], [-1, 0, 1], format="csr")

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()


def _check(grid: SpatialGrid) -> None:
    if grid.n_x < 2:
        raise InvalidGridError("at least one interior node (n_x >= 2) is required")


def assemble_mass(grid: SpatialGrid) -> TridiagonalOperator:
    _check(grid)
    n, h = grid.n_interior, grid.h
    off = np.full(n - 1, h / 6.0)
    return TridiagonalOperator(off, np.full(n, 2.0 * h / 3.0), off.copy())


def assemble_stiffness(grid: SpatialGrid) -> TridiagonalOperator:
    _check(grid)
    n, h = grid.n_interior, grid.h
    off = np.full(n - 1, -1.0 / h)
    return TridiagonalOperator(off, np.full(n, 2.0 / h), off.copy())


def load_vector(grid: SpatialGrid, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Return b_j = integral of func * phi_j over (0, 1) for interior hats.

    Uses two-point Gauss on every element. ``func`` must accept arrays and may
    return an array with trailing dimensions (e.g. several time levels).
    """
    _check(grid)
    xg, wg = grid.gauss_points()
    vals = np.asarray(func(xg), dtype=float)
    if vals.shape[:2] != xg.shape:
        vals = np.broadcast_to(vals, xg.shape + vals.shape[2:])
    extra = vals.shape[2:]
    w = wg.reshape(wg.shape + (1,) * len(extra))
    # hat functions on element e: phi_e (left node) = 1 - s, phi_{e+1} = s
    s = _GAUSS_X.reshape((1, 2) + (1,) * len(extra))
    left = np.sum(w * vals * (1.0 - s), axis=1)   # contribution to node e
    right = np.sum(w * vals * s, axis=1)          # contribution to node e + 1
    full = np.zeros((grid.n_x + 1,) + extra)
    full[:-1] += left
    full[1:] += right
    return full[1:-1]


def control_load(grid: SpatialGrid, shape: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Load vector of a control shape function; doubles as the discrete B*."""
    return load_vector(grid, shape)


def l2_norm_squared(grid: SpatialGrid, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Integral of func**2 over (0, 1) with the element Gauss rule."""
    xg, wg = grid.gauss_points()
    vals = np.asarray(func(xg), dtype=float)
    if vals.shape[:2] != xg.shape:
        vals = np.broadcast_to(vals, xg.shape + vals.shape[2:])
    w = wg.reshape(wg.shape + (1,) * (vals.ndim - 2))
    return np.sum(w * vals**2, axis=(0, 1))


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time nodes t_0 = 0 < ... < t_n = T."""

    nodes: np.ndarray
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.array(self.nodes, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise InvalidGridError("a time grid needs at least two nodes")
        if np.any(np.diff(t) <= 0.0):
            raise InvalidGridError("time nodes must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "nodes", t)
        w = _trapezoid(t)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, n: int, T: float = 1.0) -> "TimeGrid":
        return cls(np.linspace(0.0, T, n + 1))

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def dt(self) -> np.ndarray:
        """Interval lengths; ``dt[j - 1]`` is the length of I_j."""
        return np.diff(self.nodes)

    @property
    def dof(self) -> int:
        return self.nodes.size

    @property
    def n(self) -> int:
        return self.nodes.size - 1

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.nodes, other.nodes)

    def __hash__(self):
        return hash(self.nodes.tobytes())


def _trapezoid(t: np.ndarray) -> np.ndarray:
    dt = np.diff(t)
    w = np.zeros_like(t)
    w[:-1] += dt / 2.0
    w[1:] += dt / 2.0
    return w


def trapezoidal_weights(grid: TimeGrid) -> np.ndarray:
    return np.array(grid.weights)


def bisect(grid: TimeGrid, marked: Iterable[int]) -> TimeGrid:
    """Split every marked interval I_j = [t_{j-1}, t_j] (1-based) at its midpoint."""
    marked = sorted(set(int(j) for j in marked))
    for j in marked:
        if not 1 <= j <= grid.n:
            raise IndexError(f"interval index {j} outside 1..{grid.n}")
    t = grid.nodes
    mids = [(t[j - 1] + t[j]) / 2.0 for j in marked]
    return TimeGrid(np.sort(np.concatenate([t, mids])))
