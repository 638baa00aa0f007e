"""Empirically corrected cluster cubature (E3C).

Reduced points start as volume-weighted cluster centroids of the mode
slices ``psi^g``; their bases ``psi^c`` are then adjusted by L-BFGS so that
on every training snapshot ``j`` (with ``F^cj = Fbar^j + psi^c y^j``)

    r^j = sum_c xi^c psi^cT P(F^cj)                   -> 0
    h^j = sum_c xi^c P(F^cj) - V Pbar^j               -> 0
    e^j = sum_c xi^c psi^c y^j - sum_g F~^gj V^g      -> 0

The objective is ``(sum_j |r^j|^2 + |h^j|^2 + p_strain |e^j|^2) / V^2``.
Cluster volumes ``xi^c`` stay fixed.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveJacobian
from .lbfgs import lbfgs_minimize
from .pod import reduced_coords
from .rom import CubatureModel, cluster_partition

log = logging.getLogger(__name__)


@dataclass(eq=False)
class E3cObjectiveState:
    Y: np.ndarray  # (d, s) reduced coordinates of the training snapshots
    Fbar: np.ndarray  # (9, s)
    Pbar: np.ndarray  # (9, s)
    xi: np.ndarray  # (m,)
    volume: float
    p_strain: float
    target: np.ndarray  # (9, s) volume-integrated fluctuation per snapshot
    material: object

    @property
    def m(self):
        return len(self.xi)

    @property
    def d(self):
        return self.Y.shape[0]

    @property
    def n_design(self):
        return self.m * 9 * self.d


def objective_state(snapshots, basis, xi, material, p_strain=None, cell_volume=None):
    if snapshots.Pbar is None:
        raise ValueError("E3C training needs the homogenised stresses of the snapshots")
    V = float(cell_volume if cell_volume is not None else snapshots.meta["cell_volume"])
    return E3cObjectiveState(
        Y=reduced_coords(basis, snapshots), Fbar=snapshots.Fbar, Pbar=snapshots.Pbar,
        xi=np.asarray(xi, dtype=float), volume=V,
        p_strain=float(material.E ** 2 if p_strain is None else p_strain),
        target=snapshots.mean_fluctuation(), material=material,
    )


def e3c_terms(state, design):
    """Residual blocks (r, h, e) with shapes (s, d), (s, 9), (s, 9)."""
    m, d = state.m, state.d
    psi = np.asarray(design, dtype=float).reshape(m, 9, d)
    s = state.Y.shape[1]
    F = state.Fbar.T[None, :, :] + np.einsum("cia,as->csi", psi, state.Y)
    try:
        P, A = state.material.evaluate(F.reshape(-1, 9))
    except NonPositiveJacobian as exc:
        c, j = (None, None) if exc.index is None else divmod(int(np.atleast_1d(exc.index)[0]), s)
        raise NonPositiveJacobian(f"reduced point {c} inverted on snapshot {j}", (c, j)) from exc
    P = P.reshape(m, s, 9)
    A = A.reshape(m, s, 9, 9)
    r = np.einsum("c,cia,csi->sa", state.xi, psi, P)
    h = np.einsum("c,csi->si", state.xi, P) - state.volume * state.Pbar.T
    e = np.einsum("c,cia,as->si", state.xi, psi, state.Y) - state.target.T
    return psi, P, A, r, h, e


def e3c_objective(state, design):
    psi, P, A, r, h, e = e3c_terms(state, design)
    scale = 1.0 / state.volume ** 2
    p = state.p_strain
    value = scale * (np.sum(r * r) + np.sum(h * h) + p * np.sum(e * e))
    # d|r|^2: xi (P (x) r + (A^T psi r) (x) y); d|h|^2: xi (A^T h) (x) y; d|e|^2: xi e (x) y
    Apr = np.einsum("csji,cja,sa->csi", A, psi, r)
    Ah = np.einsum("csji,sj->csi", A, h)
    g = np.einsum("csi,sa->cia", P, r)
    g += np.einsum("csi,as->cia", Apr + Ah, state.Y)
    g += p * np.einsum("si,as->ia", e, state.Y)[None]
    g *= (2.0 * scale) * state.xi[:, None, None]
    return float(value), g.reshape(-1)


@dataclass
class E3cTrainingInfo:
    initial_value: float
    final_value: float
    n_iter: int
    converged: bool
    labels: np.ndarray


def build_e3c_model(basis, snapshots, m, material, seed=0, p_strain=None, memory=10, max_iter=500,
                    grad_tol=1e-8, cell_volume=None):
    """Cluster, then correct the centroid bases. Returns ``(model, info)``."""
    part = cluster_partition(basis, snapshots.volume, m, seed=seed)
    state = objective_state(snapshots, basis, part.xi, material, p_strain, cell_volume)
    x0 = part.psi_c.reshape(-1)
    f0, _ = e3c_objective(state, x0)
    res = lbfgs_minimize(lambda x: e3c_objective(state, x), x0, memory=memory, max_iter=max_iter,
                         grad_tol=grad_tol)
    x, f = (res.x, res.f) if res.f <= f0 else (x0, f0)
    log.info("E3C m=%d d=%d: objective %.4e -> %.4e in %d iterations", m, basis.d, f0, f, res.n_iter)
    model = CubatureModel(psi_c=x.reshape(part.psi_c.shape).copy(), xi=part.xi.copy(), volume=state.volume,
                          kind="E3C")
    return model, E3cTrainingInfo(f0, f, res.n_iter, res.converged, part.labels)
