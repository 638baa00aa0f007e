"""Full-order periodic hyperelastic FE solver.

Unknowns are the periodic nodal displacement fluctuations on the
independent DOFs (one periodic node class pinned). Gauss-point
deformation gradients are ``F = Fbar + grad(u~)``, so compatibility and
periodicity hold by construction.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import NewtonDivergence, NonPositiveJacobian, SingularTangent
from .mesh import gauss_table, periodic_pairs
from .voigt import IDENTITY

log = logging.getLogger(__name__)


@dataclass
class FomState:
    Fbar: np.ndarray
    u: np.ndarray  # fluctuation on independent DOFs
    F: np.ndarray = None  # (G, 9)
    P: np.ndarray = None  # (G, 9)
    A: np.ndarray = field(default=None, repr=False)  # (G, 9, 9)
    converged: bool = False
    n_iter: int = 0
    residual_history: list = field(default_factory=list)
    solver: "FomSolver" = field(default=None, repr=False)


class FomSolver:
    """Assembly operators and Newton-Raphson driver for one mesh/material.

    Parameters
    ----------
    mesh : Mesh
    material : Material
    tol_rel, tol_abs_factor : float
        Converged when ``|R| <= tol_rel |R_0|`` or ``|R| <= tol_abs_factor E V``.
    max_iter : int
        Newton corrections allowed per increment.
    """

    def __init__(self, mesh, material, tol_rel=1e-9, tol_abs_factor=1e-11, max_iter=25):
        self.mesh = mesh
        self.material = material
        self.gauss = gauss_table(mesh)
        self.pmap = periodic_pairs(mesh)
        self.tol_rel = tol_rel
        self.tol_abs = tol_abs_factor * material.E * mesh.cell_volume
        self.max_iter = max_iter
        self.n_dofs = self.pmap.n_dofs
        self.volume = mesh.cell_volume

        node_dofs = self.pmap.node_dofs()
        self._node_dofs = node_dofs
        self._elem_dofs = node_dofs[mesh.elements].reshape(mesh.n_elements, 24)
        ed = self._elem_dofs
        rows = np.repeat(ed, 24, axis=1).reshape(-1)
        cols = np.tile(ed, (1, 24)).reshape(-1)
        self._kmask = (rows >= 0) & (cols >= 0)
        self._krows, self._kcols = rows[self._kmask], cols[self._kmask]
        self._rmask = ed.reshape(-1) >= 0
        self._rdofs = ed.reshape(-1)[self._rmask]
        g = self.gauss
        self._V = g.volume
        self._dNdX = g.dNdX
        self._gp_dofs = node_dofs[g.connectivity]  # (G, 8, 3)
        self._n_el = mesh.n_elements
        # element-local B^g (9 x 24): B[3i+j, 3a+i] = dN_a/dX_j
        Bg = np.zeros((g.n_points, 3, 3, 8, 3))
        for i in range(3):
            Bg[:, i, :, :, i] = np.swapaxes(self._dNdX, 1, 2)
        self._Bg = Bg.reshape(-1, 9, 24)
        self._BgT = np.ascontiguousarray(np.swapaxes(self._Bg, 1, 2))

    # kinematics -------------------------------------------------------------
    def expand(self, u):
        """Independent DOF vector -> (N, 3) nodal fluctuation."""
        full = np.append(u, 0.0)
        return full[self._node_dofs]  # -1 picks the appended zero

    def strains(self, u, Fbar):
        un = self.expand(u)[self.gauss.connectivity]  # (G, 8, 3)
        grad = np.einsum("gai,gaj->gij", un, self._dNdX)
        return np.asarray(Fbar, dtype=float) + grad.reshape(-1, 9)

    def B_matrix(self):
        """Sparse strain operator (9G x D) mapping u~ to stacked F~^g."""
        G = self.gauss.n_points
        i = np.arange(3)
        # entry [9g + 3i + j, dof(g, a, i)] = dNdX[g, a, j]
        r = 9 * np.arange(G)[:, None, None, None] + 3 * i[None, None, :, None] + i[None, None, None, :]
        r = np.broadcast_to(r, (G, 8, 3, 3))
        c = np.broadcast_to(self._gp_dofs[:, :, :, None], (G, 8, 3, 3))
        v = np.broadcast_to(self._dNdX[:, :, None, :], (G, 8, 3, 3))
        ok = c >= 0
        return sp.csr_matrix((v[ok], (r[ok], c[ok])), shape=(9 * G, self.n_dofs))

    # assembly ---------------------------------------------------------------
    def residual(self, P):
        re = np.einsum("gmk,gm->gk", self._Bg, P * self._V[:, None])
        re = re.reshape(self._n_el, 8, 24).sum(axis=1).reshape(-1)
        return np.bincount(self._rdofs, weights=re[self._rmask], minlength=self.n_dofs)

    def stiffness(self, A):
        BtA = np.matmul(self._BgT, A * self._V[:, None, None])
        ke = np.matmul(BtA, self._Bg)
        ke = ke.reshape(self._n_el, 8, 24, 24).sum(axis=1).reshape(-1)
        K = sp.coo_matrix((ke[self._kmask], (self._krows, self._kcols)), shape=(self.n_dofs,) * 2)
        return K.tocsc()

    def coupling(self, A):
        """L = sum_g B^gT A^g V^g as a dense (D, 9) matrix."""
        le = np.matmul(self._BgT, A * self._V[:, None, None])
        le = le.reshape(self._n_el, 8, 24, 9).sum(axis=1).reshape(-1, 9)
        out = np.zeros((self.n_dofs, 9))
        for m in range(9):
            out[:, m] = np.bincount(self._rdofs, weights=le[self._rmask, m], minlength=self.n_dofs)
        return out

    def _factorize(self, K):
        try:
            return splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                        options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise SingularTangent(str(exc)) from exc

    # driver -----------------------------------------------------------------
    def reference_state(self):
        G = self.gauss.n_points
        F = np.tile(IDENTITY, (G, 1))
        P, A = self.material.evaluate(F)
        return FomState(Fbar=IDENTITY.copy(), u=np.zeros(self.n_dofs), F=F, P=P, A=A,
                        converged=True, solver=self)

    def solve_increment(self, Fbar, prev=None):
        """Newton-Raphson for the periodic fluctuation at macro strain ``Fbar``."""
        Fbar = np.asarray(Fbar, dtype=float)
        if not np.linalg.det(Fbar.reshape(3, 3)) > 0:
            raise NonPositiveJacobian("det Fbar <= 0")
        u = np.zeros(self.n_dofs) if prev is None else prev.u.copy()
        history = []
        r0 = None
        for it in range(self.max_iter + 1):
            F = self.strains(u, Fbar)
            try:
                P, A = self.material.evaluate(F)
            except NonPositiveJacobian as exc:
                raise NewtonDivergence(f"element inverted at iteration {it}") from exc
            R = self.residual(P)
            rn = float(np.linalg.norm(R))
            history.append(rn)
            if not np.isfinite(rn):
                raise NewtonDivergence("non-finite residual")
            if r0 is None:
                r0 = rn
            if rn <= max(self.tol_rel * r0, self.tol_abs):
                return FomState(Fbar=Fbar.copy(), u=u, F=F, P=P, A=A, converged=True,
                                n_iter=it, residual_history=history, solver=self)
            if it == self.max_iter:
                break
            lu = self._factorize(self.stiffness(A))
            u = u - lu.solve(R)
        raise NewtonDivergence(f"no convergence after {self.max_iter} iterations (|R|={history[-1]:.3e})")

    def homogenize_stress(self, state):
        return (state.P * self._V[:, None]).sum(axis=0) / self.volume

    def macro_tangent(self, state):
        """Consistent tangent via 9 sensitivity solves on the converged system."""
        A = state.A
        Avoigt = np.einsum("gij,g->ij", A, self._V)
        L = self.coupling(A)
        lu = self._factorize(self.stiffness(A))
        X = -lu.solve(L)
        # sum_g V A^g B^g = L^T only for major-symmetric A; build it explicitly
        LT = self.coupling(np.swapaxes(A, -1, -2)).T
        return (Avoigt + LT @ X) / self.volume

    def solve_projected(self, U, Fbar, y0=None, tol=1e-12, max_iter=25):
        """Galerkin solve restricted to displacement modes ``U`` (D x d).

        Uses the full-order assembly, so it is an independent path to the
        full-integration strain-space reduced model.
        """
        Fbar = np.asarray(Fbar, dtype=float)
        y = np.zeros(U.shape[1]) if y0 is None else np.array(y0, dtype=float)
        r0 = None
        for _ in range(max_iter + 1):
            u = U @ y
            F = self.strains(u, Fbar)
            P, A = self.material.evaluate(F)
            r = U.T @ self.residual(P)
            rn = np.linalg.norm(r)
            r0 = rn if r0 is None else r0
            if rn <= max(tol * r0, self.tol_abs * 1e-3):
                return y, FomState(Fbar=Fbar.copy(), u=u, F=F, P=P, A=A, converged=True, solver=self)
            K = U.T @ (self.stiffness(A) @ U)
            y = y - np.linalg.solve(K, r)
        raise NewtonDivergence("projected solve did not converge")


def solve_increment(solver, Fbar, prev=None):
    return solver.solve_increment(Fbar, prev)


def homogenize_stress(state, gauss=None):
    s = state.solver
    V = s.gauss.volume if gauss is None else gauss.volume
    return (state.P * V[:, None]).sum(axis=0) / s.volume


def macro_tangent(state):
    return state.solver.macro_tangent(state)


def gauss_strains(state):
    """Concatenated 9|G| strain vector in Gauss-point order."""
    return state.F.reshape(-1).copy()
