"""Discrete costs, gradients and the projected gradient method.

Full-order and POD models share one discrete problem class: they only differ
in the mass/stiffness operators and in how coefficients lift to nodal values.

The optimised functional is the discrete cost consistent with implicit Euler::

    J_h(u) = 1/2 sum_{k<n} dt_{k+1} |y^k - y_d(t_k)|^2 + alpha/2 sum_{j>=1} dt_j |u^j|^2

On uniform grids ``alpha u + B^T p`` is its exact gradient for the control
inner product weighted by dt_j. On graded grids the consistent adjoint makes
it an approximate gradient, and the line search measures decrease with the
quadratic model built from it.

The control value at t_0 does not enter the dynamics; it is set from the
adjoint through the projection formula after every solve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as la

from .discretization import SpatialGrid, TimeGrid
from .parabolic import (
    ControlTrajectory,
    Trajectory,
    full_model,
    march_backward,
    march_forward,
)
from .pod import ReducedModel
from .problems import ProblemSpec


class LineSearchError(RuntimeError):
    """Armijo backtracking failed; ``report`` holds the last iterate."""

    def __init__(self, message: str, report: "SolveReport"):
        super().__init__(message)
        self.report = report


class NotConvergedWarning(RuntimeWarning):
    pass


# -------------------------------------------------------------- discrete model

class DiscreteProblem:
    """Linear-quadratic problem after space and time discretisation."""

    def __init__(self, spec: ProblemSpec, tgrid: TimeGrid, *, mass: Callable,
                 shifted_solve: Callable, B: np.ndarray, x0: np.ndarray,
                 source: np.ndarray, desired: np.ndarray, desired_norm2: np.ndarray,
                 lift: Callable[[np.ndarray], np.ndarray]):
        self.spec = spec
        self.tgrid = tgrid
        self.mass = mass
        self.shifted_solve = shifted_solve
        self.B = B
        self.x0 = x0
        self.source = source          # (dof, k) loads F(t_j)
        self.desired = desired        # (dof, k) loads of y_d(t_j)
        self.desired_norm2 = desired_norm2
        self.lift = lift
        # weights of the control inner product implied by J_h
        self.control_weights = np.concatenate([[0.0], tgrid.dt])

    @property
    def alpha(self) -> float:
        return self.spec.alpha

    def state(self, u: np.ndarray) -> np.ndarray:
        rhs = self.source + u @ self.B.T
        return march_forward(self.mass, self.shifted_solve, self.tgrid, self.x0, rhs)

    def adjoint(self, x: np.ndarray) -> np.ndarray:
        residual = self.mass(x.T).T - self.desired
        return march_backward(self.mass, self.shifted_solve, self.tgrid, residual)

    def tracking(self, x: np.ndarray) -> np.ndarray:
        """|x(t_j) - y_d(t_j)|^2 at every node."""
        Mx = self.mass(x.T).T
        return np.einsum("jk,jk->j", x, Mx) - 2.0 * np.einsum("jk,jk->j", x, self.desired) \
            + self.desired_norm2

    def objective(self, u: np.ndarray, x: np.ndarray | None = None) -> float:
        if x is None:
            x = self.state(u)
        dt = self.tgrid.dt
        track = 0.5 * np.sum(dt * self.tracking(x)[:-1])
        return float(track + 0.5 * self.alpha * np.sum(self.control_weights * np.sum(u**2, axis=1)))

    def reported_cost(self, u: np.ndarray, x: np.ndarray) -> float:
        """Trapezoidal-in-time value of the continuous cost functional."""
        w = self.tgrid.weights
        return float(0.5 * np.sum(w * self.tracking(x))
                     + 0.5 * self.alpha * np.sum(w * np.sum(u**2, axis=1)))

    def gradient_from_adjoint(self, u: np.ndarray, q: np.ndarray) -> np.ndarray:
        return self.alpha * u + q @ self.B

    def projected_control(self, q: np.ndarray) -> np.ndarray:
        return self.spec.clamp(-(q @ self.B) / self.alpha, self.tgrid.nodes)

    def evaluate(self, u: np.ndarray) -> "_Evaluation":
        """State, adjoint, completed control and gradient at ``u``."""
        x = self.state(u)
        q = self.adjoint(x)
        u = u.copy()
        u[0] = self.projected_control(q[:1])[0]
        return _Evaluation(u, x, q, self.objective(u, x), self.gradient_from_adjoint(u, q))

    def change(self, g: np.ndarray, delta: np.ndarray) -> float:
        """Quadratic-model change of J_h along ``delta`` from a point with gradient g.

        Exact when g is the exact gradient (uniform grids). Only the homogeneous
        state response is needed, which avoids cancellation between large
        tracking terms.
        """
        zero = np.zeros_like(self.x0)
        dx = march_forward(self.mass, self.shifted_solve, self.tgrid, zero, delta @ self.B.T)
        track = np.einsum("jk,jk->j", dx, self.mass(dx.T).T)[:-1]
        curv = np.sum(self.tgrid.dt * track) + self.alpha * self.inner(delta, delta)
        return self.inner(g, delta) + 0.5 * curv

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(self.control_weights * np.sum(a * b, axis=1)))

    def norm(self, a: np.ndarray) -> float:
        """Trapezoidal control norm."""
        return float(np.sqrt(np.sum(self.tgrid.weights * np.sum(a * a, axis=1))))


@dataclass
class _Evaluation:
    u: np.ndarray
    x: np.ndarray
    q: np.ndarray
    J: float
    g: np.ndarray


def full_problem(spec: ProblemSpec, sgrid: SpatialGrid, tgrid: TimeGrid) -> DiscreteProblem:
    fom = full_model(spec, sgrid)
    t = tgrid.nodes
    return DiscreteProblem(
        spec, tgrid, mass=fom.M.matvec,
        shifted_solve=lambda dt, b: fom.shifted(dt).solve(b),
        B=fom.B, x0=fom.y0, source=fom.source(t), desired=fom.desired_load(t),
        desired_norm2=fom.desired_norm2(t), lift=lambda x: x)


def reduced_problem(rom: ReducedModel, tgrid: TimeGrid) -> DiscreteProblem:
    t = tgrid.nodes
    M, A = rom.M, rom.A
    cache: dict[float, tuple] = {}

    def shifted_solve(dt, b):
        f = cache.get(dt)
        if f is None:
            f = cache[dt] = la.cho_factor(M + dt * A)
        return la.cho_solve(f, b)

    return DiscreteProblem(
        rom.spec, tgrid, mass=lambda v: M @ v, shifted_solve=shifted_solve,
        B=rom.B, x0=la.solve(M, rom.y0, assume_a="pos"), source=rom.source(t),
        desired=rom.desired_load(t), desired_norm2=rom.desired_norm2(t), lift=rom.lift)


# ----------------------------------------------------------- public functions

def cost(spec: ProblemSpec, sgrid: SpatialGrid, tgrid: TimeGrid, y: Trajectory,
         u: ControlTrajectory) -> float:
    """Trapezoid-in-time, mass-in-space value of the tracking cost."""
    return full_problem(spec, sgrid, tgrid).reported_cost(u.values, y.values)


def gradient(spec: ProblemSpec, sgrid: SpatialGrid, tgrid: TimeGrid,
             u: ControlTrajectory) -> ControlTrajectory:
    """alpha u + B* p(u) at every time node of the full-order model."""
    prob = full_problem(spec, sgrid, tgrid)
    q = prob.adjoint(prob.state(u.values))
    return ControlTrajectory(tgrid, prob.gradient_from_adjoint(u.values, q))


def reduced_solve_state(rom: ReducedModel, tgrid: TimeGrid, u: ControlTrajectory) -> np.ndarray:
    """POD coefficients (dof, ell) of the reduced state."""
    return reduced_problem(rom, tgrid).state(u.values)


def reduced_solve_adjoint(rom: ReducedModel, tgrid: TimeGrid, w: np.ndarray) -> np.ndarray:
    return reduced_problem(rom, tgrid).adjoint(w)


@dataclass
class SolveReport:
    control: ControlTrajectory
    state: Trajectory
    adjoint: Trajectory
    J: float                      # trapezoidal cost
    objective: float              # discrete objective actually minimised
    residual_history: list = field(default_factory=list)
    # objective values tracked through quadratic-model increments
    cost_history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _report(prob: DiscreteProblem, ev: _Evaluation, res, costs, it, ok) -> SolveReport:
    tg = prob.tgrid
    return SolveReport(ControlTrajectory(tg, ev.u), Trajectory(tg, prob.lift(ev.x)),
                       Trajectory(tg, prob.lift(ev.q)), prob.reported_cost(ev.u, ev.x),
                       ev.J, list(res), list(costs), it, ok)


def projected_gradient(prob: DiscreteProblem, u_init: ControlTrajectory | None = None, *,
                       tau_r: float = 1e-3, tau_a: float = 1e-10, max_iter: int = 500,
                       c: float = 1e-4, s0: float = 1.0, max_backtracks: int = 40,
                       ) -> SolveReport:
    """Projected gradient descent with Armijo backtracking along the projection arc.

    Stops when ``|u - P(u - g)| <= tau_r |r_0| + tau_a`` where ``r_0`` is the
    first projected-gradient residual.
    """
    spec, t = prob.spec, prob.tgrid.nodes
    clamp = lambda v: spec.clamp(v, t)  # noqa: E731
    u = np.zeros((t.size, spec.m)) if u_init is None else np.array(u_init.values, dtype=float)
    if np.any(clamp(u) != u):
        raise ValueError("initial control violates the bounds")
    ev = prob.evaluate(u)
    res0 = prob.norm(ev.u - clamp(ev.u - ev.g))
    residuals, costs = [res0], [ev.J]
    stop = tau_r * res0 + tau_a
    it = 0
    while residuals[-1] > stop:
        if it >= max_iter:
            warnings.warn(f"projected gradient stopped after {max_iter} iterations",
                          NotConvergedWarning, stacklevel=2)
            return _report(prob, ev, residuals, costs, it, False)
        s = s0
        for _ in range(max_backtracks + 1):
            delta = clamp(ev.u - s * ev.g) - ev.u
            delta[0] = 0.0
            dJ = prob.change(ev.g, delta)
            if dJ < 0.0 and dJ <= c * prob.inner(ev.g, delta):
                break
            s *= 0.5
        else:
            raise LineSearchError("Armijo backtracking failed",
                                  _report(prob, ev, residuals, costs, it, False))
        ev = prob.evaluate(ev.u + delta)
        it += 1
        residuals.append(prob.norm(ev.u - clamp(ev.u - ev.g)))
        costs.append(costs[-1] + dJ)
    return _report(prob, ev, residuals, costs, it, True)
