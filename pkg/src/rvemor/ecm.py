"""Empirical cubature over the original Gauss points.

The weights solve a non-negative least-squares problem whose rows ask the
selected points to integrate, for every training snapshot ``j``,

* the reduced virtual work ``sum_g psi^gT P^gj V^g`` (d rows),
* the total volume (1 row, weighted by ``sqrt(p_vol)``),
* the homogenised stress ``V Pbar^j`` (9 rows).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import EmptySelection, MissingStressSnapshots, StalledActiveSet
from .rom import CubatureModel

log = logging.getLogger(__name__)


@dataclass(eq=False)
class NnlsSystem:
    matrix: np.ndarray  # (d*s + 1 + 9*s, G)
    rhs: np.ndarray
    p_vol: float
    n_work: int  # number of leading virtual-work rows
    meta: dict = field(default_factory=dict)

    @property
    def volume_row(self):
        return self.n_work

    @property
    def stress_rows(self):
        return slice(self.n_work + 1, None)


def default_p_vol(b_stress, volume):
    # the work rows vanish for converged snapshots, so the stress rows set the scale
    return float((np.linalg.norm(b_stress) / volume) ** 2)


def assemble_nnls_system(snapshots, basis, p_vol=None, cell_volume=None):
    if snapshots.P is None:
        raise MissingStressSnapshots("ECM training needs Gauss-point stress snapshots")
    G, s, d = snapshots.n_gauss, snapshots.n_snapshots, basis.d
    V = float(cell_volume if cell_volume is not None else snapshots.meta["cell_volume"])
    P = snapshots.P.reshape(G, 9, s)
    work = np.einsum("gia,gis->sag", basis.psi_g, P).reshape(s * d, G)
    stress = P.transpose(2, 1, 0).reshape(9 * s, G)
    b_work = work @ snapshots.volume
    b_stress = stress @ snapshots.volume  # = V Pbar^j stacked
    if p_vol is None:
        p_vol = default_p_vol(b_stress, V)
    sq = np.sqrt(p_vol)
    matrix = np.vstack([work, np.full((1, G), sq), stress])
    rhs = np.concatenate([b_work, [sq * snapshots.volume.sum()], b_stress])
    return NnlsSystem(matrix, rhs, float(p_vol), s * d, {"cell_volume": V})


@dataclass
class NnlsResult:
    x: np.ndarray
    residual_history: list
    converged: bool  # KKT satisfied or tolerance reached (vs. m_target cap)


def _ls(A, b, support):
    z, *_ = la.lstsq(A[:, support], b, lapack_driver="gelsy", check_finite=False)
    return z


def lawson_hanson_nnls(A, b, m_target=None, tol=1e-10, kkt_tol=None, max_iter=None):
    """Active-set NNLS (Lawson and Hanson) with an optional support cap.

    Iterates until the relative residual drops below ``tol``, the KKT
    conditions hold, or ``m_target`` columns are active. Columns are scaled
    to unit norm internally.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[1]
    m_target = n if m_target is None else int(m_target)
    if m_target < 1:
        raise ValueError("m_target must be >= 1")
    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0] = 1.0
    An = A / norms
    bnorm = np.linalg.norm(b)
    if kkt_tol is None:
        kkt_tol = 1e-12 * max(bnorm, 1.0)
    max_iter = 3 * n if max_iter is None else max_iter

    x = np.zeros(n)
    active = np.zeros(n, dtype=bool)
    r = b.copy()
    hist = [float(bnorm)]
    converged = False
    for _ in range(max_iter):
        if hist[-1] <= tol * bnorm:
            converged = True
            break
        w = An.T @ r
        w[active] = -np.inf
        j = int(np.argmax(w))
        if w[j] <= kkt_tol:
            converged = True
            break
        if active.sum() >= m_target:
            break
        active[j] = True
        while True:
            sup = np.flatnonzero(active)
            z = _ls(An, b, sup)
            if np.all(z > 0):
                x[:] = 0.0
                x[sup] = z
                break
            neg = z <= 0
            xs = x[sup]
            alpha = np.min(xs[neg] / (xs[neg] - z[neg]))
            x[sup] = xs + alpha * (z - xs)
            drop = sup[x[sup] <= 1e-14 * max(np.abs(x).max(), 1e-300)]
            x[drop] = 0.0
            active[drop] = False
            if not active.any():
                break
        if not active[j]:
            raise StalledActiveSet(f"column {j} left the active set immediately; no descent possible")
        r = b - An @ x
        hist.append(float(np.linalg.norm(r)))
    else:
        log.warning("Lawson-Hanson stopped after %d iterations", max_iter)
    return NnlsResult(x=x / norms, residual_history=hist, converged=converged)


def kkt_violation(A, b, x):
    """Largest violation of the NNLS optimality conditions, scaled by ``|A||b|``."""
    g = A.T @ (b - A @ x)  # negative gradient
    scale = max(np.linalg.norm(A) * np.linalg.norm(b), 1e-300)
    on = x > 0
    v_active = np.abs(g[on]).max(initial=0.0)
    v_inactive = g[~on].max(initial=0.0)
    return max(v_active, v_inactive, -x.min(initial=0.0)) / scale


def build_ecm_model(weights, basis, cell_volume, hom_weights=None):
    weights = np.asarray(weights, dtype=float)
    sel = np.flatnonzero(weights > 0)
    if len(sel) == 0:
        raise EmptySelection("NNLS returned no positive weights")
    return CubatureModel(psi_c=basis.psi_g[sel].copy(), xi=weights[sel].copy(), volume=float(cell_volume),
                         xi_hom=None if hom_weights is None else np.asarray(hom_weights, dtype=float)[sel],
                         kind="ECM", gauss_index=sel)


def train_ecm(snapshots, basis, m, p_vol=None, tol=1e-10, separate_homog_weights=False):
    """Assemble, solve and wrap. Returns ``(model, system, nnls_result)``."""
    sys_ = assemble_nnls_system(snapshots, basis, p_vol)
    V = sys_.meta["cell_volume"]
    if separate_homog_weights:
        rows = slice(0, sys_.n_work + 1)
        res = lawson_hanson_nnls(sys_.matrix[rows], sys_.rhs[rows], m, tol)
        sel = np.flatnonzero(res.x > 0)
        if len(sel) == 0:
            raise EmptySelection("NNLS returned no positive weights")
        hrows = slice(sys_.n_work, None)
        hres = lawson_hanson_nnls(sys_.matrix[hrows][:, sel], sys_.rhs[hrows], len(sel), tol)
        xh = np.zeros_like(res.x)
        xh[sel] = hres.x
        return build_ecm_model(res.x, basis, V, hom_weights=xh), sys_, res
    res = lawson_hanson_nnls(sys_.matrix, sys_.rhs, m, tol)
    return build_ecm_model(res.x, basis, V), sys_, res
