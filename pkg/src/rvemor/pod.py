"""Strain-space POD of deformation-gradient fluctuation snapshots."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import DimensionMismatch, RankDeficient
from .store import read_bundle, write_bundle

RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ModeBasis:
    """Global mode matrix ``psi`` (9G x d, orthonormal columns).

    ``psi_g`` exposes the same data as a (G, 9, d) stack of per-Gauss-point
    slices; ``singular_values`` holds the full spectrum of the snapshot
    fluctuation matrix.
    """

    psi: np.ndarray
    singular_values: np.ndarray

    @property
    def d(self):
        return self.psi.shape[1]

    @property
    def n_gauss(self):
        return self.psi.shape[0] // 9

    @property
    def psi_g(self):
        return self.psi.reshape(self.n_gauss, 9, self.d)

    @property
    def numerical_rank(self):
        return numerical_rank(self.singular_values)

    def truncate(self, d):
        if d > self.d:
            raise RankDeficient(f"cannot extend a {self.d}-mode basis to {d}")
        return ModeBasis(self.psi[:, :d].copy(), self.singular_values)


def numerical_rank(sigma, tol=RANK_TOL):
    if len(sigma) == 0 or sigma[0] == 0:
        return 0
    return int(np.sum(sigma / sigma[0] >= tol))


def _fix_signs(U):
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def compute_basis(snapshots, d):
    """Leading ``d`` left singular vectors of the fluctuation matrix.

    Each column's largest-magnitude entry is made positive so that the
    basis is reproducible across LAPACK builds.
    """
    Ft = snapshots.fluctuations()
    U, S, _ = la.svd(Ft, full_matrices=False, lapack_driver="gesdd")
    rank = numerical_rank(S)
    if not 1 <= d <= rank:
        raise RankDeficient(f"requested d={d} but numerical rank is {rank}")
    return ModeBasis(psi=_fix_signs(U[:, :d]), singular_values=S)


def reduced_coords(basis, snapshots):
    """Y^s = psi^T F~^s (d x s)."""
    if basis.psi.shape[0] != snapshots.F.shape[0]:
        raise DimensionMismatch("basis and snapshots come from different meshes")
    return basis.psi.T @ snapshots.fluctuations()


def reconstruct_field(basis, y, Fbar):
    """F^g = Fbar + psi^g y for every Gauss point, shape (G, 9)."""
    y = np.asarray(y, dtype=float)
    if y.shape != (basis.d,):
        raise DimensionMismatch(f"expected {basis.d} coefficients, got {y.shape}")
    return np.asarray(Fbar, dtype=float) + basis.psi_g @ y


def projection_error(basis, snapshots):
    Ft = snapshots.fluctuations()
    R = Ft - basis.psi @ (basis.psi.T @ Ft)
    return np.linalg.norm(R) / np.linalg.norm(Ft)


def save_basis(basis, directory):
    write_bundle(directory, "basis", {"psi": basis.psi, "sigma": basis.singular_values}, {"d": basis.d})


def load_basis(directory):
    _, arrays, _ = read_bundle(directory, kind="basis")
    return ModeBasis(arrays["psi"], arrays["sigma"].reshape(-1))
