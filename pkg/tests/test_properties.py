"""Randomized invariants of the discretization, POD and optimization layers."""

import warnings

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from snaploc.discretization import (
    SpatialGrid,
    TimeGrid,
    assemble_mass,
    assemble_stiffness,
    bisect,
)
from snaploc.ocp import full_problem, reduced_problem
from snaploc.parabolic import ControlTrajectory, generate_snapshots, march_forward
from snaploc.pod import (
    assemble_reduced,
    compute_basis,
    inner_product_matrix,
    pod_from_columns,
    projection_error,
)
from snaploc.problems import get_problem

seeds = st.integers(0, 2**32 - 1)
SPEC3 = get_problem(3)


def _random_nodes(rng, n, T=1.0):
    inner = np.sort(rng.uniform(0.0, T, n))
    nodes = np.unique(np.r_[0.0, inner, T])
    return nodes[np.r_[True, np.diff(nodes) > 1e-9]]


@given(seed=seeds, n_x=st.integers(4, 60), k=st.integers(1, 25), ip=st.sampled_from(["l2", "h1"]),
       scale=st.floats(1e-3, 1e3))
def test_pod_modes_orthonormal(seed, n_x, k, ip, scale):
    rng = np.random.default_rng(seed)
    g = SpatialGrid(n_x)
    W = inner_product_matrix(g, ip)
    Z = scale * rng.standard_normal((g.n_interior, k))
    ell = int(rng.integers(1, min(k, g.n_interior) + 1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        b = pod_from_columns(Z, rng.uniform(0.01, 1.0, k), W, ell=ell, ip=ip)
    G = b.modes.T @ W @ b.modes
    assert np.abs(G - np.eye(b.ell)).max() <= 1e-10


@given(seed=seeds, n_x=st.integers(6, 60), k=st.integers(2, 25))
def test_pod_error_identity(seed, n_x, k):
    rng = np.random.default_rng(seed)
    g = SpatialGrid(n_x)
    W = assemble_mass(g).to_dense()
    Z = rng.standard_normal((g.n_interior, k))
    w = rng.uniform(0.01, 1.0, k)
    ell = int(rng.integers(1, min(k, g.n_interior)))
    b = pod_from_columns(Z, w, W, ell=ell)
    err = projection_error(Z, w, b)
    assert abs(err - b.tail) <= 1e-8 * b.tail + 1e-13 * b.eigenvalues.sum()


@settings(max_examples=100)
@given(seed=seeds)
def test_projection_is_monotone(seed):
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, 1.0, 30)
    a = rng.normal(0.0, rng.uniform(0.01, 200.0), (30, 2))
    b = rng.normal(0.0, rng.uniform(0.01, 200.0), (30, 2))
    inner = np.sum((SPEC3.clamp(a, t) - SPEC3.clamp(b, t)) * (a - b))
    assert inner >= -1e-12


@given(seed=seeds)
def test_clamp_idempotent_and_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, 1.0, 30)
    a = rng.normal(0.0, 100.0, (30, 2))
    b = rng.normal(0.0, 100.0, (30, 2))
    pa, pb = SPEC3.clamp(a, t), SPEC3.clamp(b, t)
    assert np.array_equal(SPEC3.clamp(pa, t), pa)
    assert np.all(np.abs(pa - pb) <= np.abs(a - b))
    lo, hi = SPEC3.bounds(t)
    assert np.all((pa >= lo) & (pa <= hi))


@given(seed=seeds, n=st.integers(1, 200), T=st.floats(0.1, 10.0))
def test_trapezoid_weights_sum_to_horizon(seed, n, T):
    g = TimeGrid(_random_nodes(np.random.default_rng(seed), n, T))
    assert abs(g.weights.sum() - g.T) <= 1e-12 * max(1.0, T)
    assert np.all(g.weights > 0.0)


@given(seed=seeds, n=st.integers(1, 40))
def test_bisect_all_halves_every_step(seed, n):
    g = TimeGrid(_random_nodes(np.random.default_rng(seed), n))
    fine = bisect(g, range(1, g.n + 1))
    assert fine.n == 2 * g.n
    assert np.allclose(fine.dt[::2], g.dt / 2) and np.allclose(fine.dt[1::2], g.dt / 2)


@given(seed=seeds, n_x=st.integers(3, 50), n=st.integers(1, 30))
def test_implicit_euler_energy_decays(seed, n_x, n):
    rng = np.random.default_rng(seed)
    g = SpatialGrid(n_x)
    M, A = assemble_mass(g), assemble_stiffness(g)
    tg = TimeGrid(_random_nodes(rng, n))
    y = march_forward(M.matvec, lambda dt, b: (M + A.scaled(dt)).solve(b), tg,
                      rng.standard_normal(g.n_interior), np.zeros((tg.dof, g.n_interior)))
    energy = np.einsum("jk,jk->j", y, M.matvec(y.T).T)
    assert np.all(np.diff(energy) <= 1e-14 * energy[0])


def _fd_check(prob, rng, m):
    u = rng.standard_normal((prob.tgrid.dof, m))
    v = rng.standard_normal(u.shape)
    g = prob.gradient_from_adjoint(u, prob.adjoint(prob.state(u)))
    # J_h is quadratic, so central differences have no truncation error; a larger
    # step only limits cancellation when J is large (unresolved layers on coarse grids)
    s = 1e-2
    fd = (prob.objective(u + s * v) - prob.objective(u - s * v)) / (2 * s)
    exact = prob.inner(g, v)
    return abs(fd - exact) / abs(exact)


@settings(max_examples=25)
@given(seed=seeds, test_id=st.sampled_from([1, 2]), n=st.integers(2, 30))
def test_full_gradient_matches_central_differences(seed, test_id, n):
    spec = get_problem(test_id)
    prob = full_problem(spec, SpatialGrid(16), TimeGrid.uniform(n))
    assert _fd_check(prob, np.random.default_rng(seed), spec.m) <= 1e-6


@settings(max_examples=25)
@given(seed=seeds, test_id=st.sampled_from([1, 2]), n=st.integers(2, 30), ell=st.integers(1, 4))
def test_reduced_gradient_matches_central_differences(seed, test_id, n, ell):
    spec = get_problem(test_id)
    sg, tg = SpatialGrid(16), TimeGrid.uniform(n)
    snaps = generate_snapshots(spec, sg, tg, ControlTrajectory.zeros(tg, spec.m))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        basis = compute_basis(snaps, sg, "l2", ell=ell)
    prob = reduced_problem(assemble_reduced(basis, spec, sg), tg)
    assert _fd_check(prob, np.random.default_rng(seed), spec.m) <= 1e-6
