"""Fast randomized self-checks of the core invariants, run by ``snaploc check``.

The pytest suite covers the same properties more thoroughly with hypothesis;
this module needs nothing beyond numpy so it can run in a bare install.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .discretization import SpatialGrid, TimeGrid, assemble_mass, assemble_stiffness
from .ocp import full_problem
from .parabolic import march_forward
from .pod import pod_from_columns, projection_error
from .problems import get_problem


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    limit: float

    @property
    def ok(self) -> bool:
        return bool(self.value <= self.limit)


def _random_pod(rng, n=30, k=12, ell=4):
    g = SpatialGrid(n + 1)
    W = assemble_mass(g).to_dense()
    Z = rng.standard_normal((n, k))
    w = rng.uniform(0.1, 1.0, k)
    return Z, w, W, pod_from_columns(Z, w, W, ell=ell)


def pod_orthonormality(rng) -> CheckResult:
    *_, basis = _random_pod(rng)
    G = basis.modes.T @ basis.gram @ basis.modes
    return CheckResult("POD orthonormality", float(np.abs(G - np.eye(basis.ell)).max()), 1e-10)


def pod_error_identity(rng) -> CheckResult:
    Z, w, _, basis = _random_pod(rng)
    err = projection_error(Z, w, basis)
    rel = abs(err - basis.tail) / max(basis.eigenvalues.sum(), 1e-300)
    return CheckResult("POD error identity", float(rel), 1e-8)


def trapezoid_sum(rng) -> CheckResult:
    nodes = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0.0, 1.0, 40)]))
    g = TimeGrid(np.unique(nodes))
    return CheckResult("trapezoid weights sum", float(abs(g.weights.sum() - g.T)), 1e-12)


def clamp_properties(rng) -> CheckResult:
    spec = get_problem(3)
    t = rng.uniform(0.0, 1.0, 50)
    a, b = rng.normal(0, 50, (50, spec.m)), rng.normal(0, 50, (50, spec.m))
    pa = spec.clamp(a, t)
    idem = np.abs(spec.clamp(pa, t) - pa).max()
    grow = np.abs(pa - spec.clamp(b, t)) - np.abs(a - b)
    return CheckResult("clamp idempotent, nonexpansive", float(max(idem, grow.max(), 0.0)), 0.0)


def energy_decay(rng) -> CheckResult:
    g = SpatialGrid(40)
    M, A = assemble_mass(g), assemble_stiffness(g)
    tg = TimeGrid(np.unique(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, 15)])))
    x0 = rng.standard_normal(g.n_interior)
    y = march_forward(M.matvec, lambda dt, b: (M + A.scaled(dt)).solve(b), tg, x0,
                      np.zeros((tg.dof, g.n_interior)))
    e = np.einsum("jk,jk->j", y, M.matvec(y.T).T)
    return CheckResult("implicit Euler energy decay", float(max(np.diff(e).max(), 0.0)), 0.0)


def gradient_fd(rng) -> CheckResult:
    spec = get_problem(1)
    prob = full_problem(spec, SpatialGrid(20), TimeGrid.uniform(12))
    u = rng.standard_normal((prob.tgrid.dof, spec.m))
    v = rng.standard_normal(u.shape)
    g = prob.gradient_from_adjoint(u, prob.adjoint(prob.state(u)))
    s = 1e-2  # exact for a quadratic up to cancellation
    fd = (prob.objective(u + s * v) - prob.objective(u - s * v)) / (2 * s)
    exact = prob.inner(g, v)
    return CheckResult("gradient vs central differences", float(abs(fd - exact) / abs(exact)), 1e-6)


CHECKS: tuple[Callable[[np.random.Generator], CheckResult], ...] = (
    pod_orthonormality, pod_error_identity, trapezoid_sum, clamp_properties,
    energy_decay, gradient_fd,
)


def run_checks(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [check(rng) for check in CHECKS]
