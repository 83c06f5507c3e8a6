"""Weighted POD via the method of snapshots and Galerkin reduced models."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.linalg as la

from .discretization import SpatialGrid, assemble_mass, assemble_stiffness
from .parabolic import SnapshotSet, full_model
from .problems import ProblemSpec

InnerProduct = Literal["l2", "h1"]


class EmptyBasisError(ValueError):
    """All snapshots vanish, so no basis can be formed."""


class PODTruncationWarning(UserWarning):
    """More modes were requested than the snapshots support."""


@dataclass(frozen=True)
class PODBasis:
    modes: np.ndarray        # (N, ell), orthonormal in the ``ip`` inner product
    eigenvalues: np.ndarray  # full spectrum, descending
    ip: str
    gram: np.ndarray         # (N, N) dense matrix of the inner product

    @property
    def ell(self) -> int:
        return self.modes.shape[1]

    @property
    def tail(self) -> float:
        """Sum of the neglected eigenvalues."""
        return float(np.sum(self.eigenvalues[self.ell:]))

    def to_csv(self, path) -> None:
        """One mode per column, header row of the matching eigenvalues."""
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"{lam:.16e}" for lam in self.eigenvalues[: self.ell]])
            for row in self.modes:
                w.writerow([f"{v:.16e}" for v in row])


def inner_product_matrix(sgrid: SpatialGrid, ip: str) -> np.ndarray:
    ip = ip.lower()
    if ip == "l2":
        return assemble_mass(sgrid).to_dense()
    if ip == "h1":
        return assemble_stiffness(sgrid).to_dense()
    raise ValueError(f"unknown inner product {ip!r}; use 'l2' or 'h1'")


def _fix_signs(modes: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    out = modes.copy()
    for i in range(out.shape[1]):
        col = out[:, i]
        nz = np.flatnonzero(np.abs(col) > tol * max(np.abs(col).max(), 1e-300))
        if nz.size and col[nz[0]] < 0:
            out[:, i] = -col
    return out


def pod_from_columns(Z: np.ndarray, weights: np.ndarray, W: np.ndarray, *,
                     ell: int | None = None, tol: float | None = None,
                     ip: str = "l2") -> PODBasis:
    """Method of snapshots for columns ``Z`` with quadrature ``weights``.

    Exactly one of ``ell`` (number of modes) and ``tol`` (relative energy left
    out) must be given.
    """
    if (ell is None) == (tol is None):
        raise ValueError("give exactly one of ell and tol")
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0.0):
        raise ValueError("snapshot weights must be positive")
    sw = np.sqrt(weights)
    Zw = Z * sw[None, :]
    K = Zw.T @ W @ Zw
    K = 0.5 * (K + K.T)
    lam, V = la.eigh(K)
    lam, V = lam[::-1], V[:, ::-1]
    magnitude = float(np.abs(lam).max())
    if magnitude == 0.0:
        raise EmptyBasisError("all snapshots are zero")
    if lam.min() < -1e-12 * max(1.0, magnitude):
        raise np.linalg.LinAlgError(f"Gram matrix has eigenvalue {lam.min():.3e} < 0")
    lam = np.clip(lam, 0.0, None)
    scale = lam[0]
    rank = int(np.sum(lam > scale * lam.size * np.finfo(float).eps))
    if tol is not None:
        total = lam.sum()
        tails = total - np.cumsum(lam)
        ell = int(np.argmax(tails <= tol * total)) + 1
    if ell < 0:
        raise ValueError("ell must be non-negative")
    if ell > rank:
        warnings.warn(f"requested {ell} modes but the snapshots have numerical rank {rank}; "
                      f"using {rank}", PODTruncationWarning, stacklevel=2)
        ell = rank
    modes = Zw @ V[:, :ell] / np.sqrt(lam[:ell])[None, :]
    if ell:
        # re-orthonormalise against round-off for the small eigenvalues
        G = modes.T @ W @ modes
        L = np.linalg.cholesky(0.5 * (G + G.T))
        modes = la.solve_triangular(L, modes.T, lower=True).T
    modes = _fix_signs(modes)
    return PODBasis(modes, lam, ip, W)


def compute_basis(snapshots: SnapshotSet, sgrid: SpatialGrid, ip: str = "l2", *,
                  ell: int | None = None, tol: float | None = None) -> PODBasis:
    Z, w = snapshots.columns()
    return pod_from_columns(Z, w, inner_product_matrix(sgrid, ip), ell=ell, tol=tol, ip=ip)


def project(basis: PODBasis, field: np.ndarray) -> np.ndarray:
    """Coefficients <field, psi_i>; works column-wise on (N, k) arrays."""
    return basis.modes.T @ (basis.gram @ field)


def reconstruct(basis: PODBasis, coeffs: np.ndarray) -> np.ndarray:
    return basis.modes @ coeffs


def projection_error(Z: np.ndarray, weights: np.ndarray, basis: PODBasis) -> float:
    """Weighted squared projection residual of the snapshot columns."""
    R = Z - reconstruct(basis, project(basis, Z))
    return float(np.sum(weights * np.einsum("ij,ik,kj->j", R, basis.gram, R)))


@dataclass(frozen=True)
class ReducedModel:
    """Galerkin projection of the full-order model onto a POD basis."""

    basis: PODBasis
    spec: ProblemSpec
    sgrid: SpatialGrid
    M: np.ndarray
    A: np.ndarray
    B: np.ndarray    # (ell, m)
    y0: np.ndarray   # moments of the initial state against the modes

    def source(self, t) -> np.ndarray:
        return full_model(self.spec, self.sgrid).source(t) @ self.basis.modes

    def desired_load(self, t) -> np.ndarray:
        return full_model(self.spec, self.sgrid).desired_load(t) @ self.basis.modes

    def desired_norm2(self, t) -> np.ndarray:
        return full_model(self.spec, self.sgrid).desired_norm2(t)

    def lift(self, coeffs: np.ndarray) -> np.ndarray:
        """Coefficient trajectory (dof, ell) to nodal values (dof, N)."""
        return coeffs @ self.basis.modes.T


def assemble_reduced(basis: PODBasis, spec: ProblemSpec, sgrid: SpatialGrid) -> ReducedModel:
    fom = full_model(spec, sgrid)
    Psi = basis.modes
    M = Psi.T @ fom.M.matvec(Psi)
    A = Psi.T @ fom.A.matvec(Psi)
    return ReducedModel(basis, spec, sgrid, 0.5 * (M + M.T), 0.5 * (A + A.T),
                        Psi.T @ fom.B, Psi.T @ fom.M.matvec(fom.y0))
