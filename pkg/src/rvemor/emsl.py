"""Empirical material sampling and linearisation (EMSL).

Offline, the Gauss points are clustered on their mode slices and every
cluster ``c`` receives a volume ``xi^c``, a centroid basis ``psi^c``, the
volume-integrated basis ``psi_bar^c = sum_g psi^g V^g`` and the Gram-type
operator ``gram^c[γ,α,δ,β] = sum_g psi^g[γ,α] psi^g[δ,β] V^g``. A linear
map ``M`` predicts reduced coordinates from the macro strain.

Online, each load step samples the material once per cluster at the
predicted strain ``F^c = Fbar + psi^c M Fbar`` and solves the resulting
affine d x d system; no Newton iterations are involved.
"""

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import (
    DimensionMismatch,
    FixedPointStall,
    NonPositiveJacobian,
    RankDeficientParameters,
    ReferenceInverted,
    SingularReducedSystem,
)
from .pod import reduced_coords
from .rom import cluster_partition
from .store import read_bundle, write_bundle
from .voigt import IDENTITY

log = logging.getLogger(__name__)


def fit_linear_map(Y, Fbar, origin=None):
    """Least-squares ``M`` minimising ``|Y - M (Fbar - origin)|_F``.

    Solved through an SVD-based least-squares routine rather than the
    explicit normal equations. A Tikhonov shift of ``1e-12 tr(G)`` is
    added when the Gram matrix ``G = Fbar Fbar^T`` has condition > 1e12.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    X = np.asarray(Fbar, dtype=float)
    if origin is not None:
        X = X - np.asarray(origin, dtype=float)[:, None]
    if X.shape[0] != 9 or X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"Y is {Y.shape}, Fbar is {X.shape}")
    if X.shape[1] < 9:
        raise RankDeficientParameters(f"only {X.shape[1]} parameter samples, need >= 9")
    sv = np.linalg.svd(X, compute_uv=False)
    if sv[-1] <= np.finfo(float).eps * max(X.shape) * sv[0]:
        raise RankDeficientParameters("sampled macro strains span fewer than 9 directions")
    cond = (sv[0] / sv[-1]) ** 2
    if cond > 1e12:
        Gm = X @ X.T
        shift = 1e-12 * np.trace(Gm)
        log.warning("macro strain Gram matrix ill-conditioned (cond=%.2e); Tikhonov shift %.3e", cond, shift)
        return la.solve(Gm + shift * np.eye(9), X @ Y.T, assume_a="pos").T
    Mt, *_ = la.lstsq(X.T, Y.T, lapack_driver="gelsd")
    return Mt.T


@dataclass(frozen=True, eq=False)
class EmslModel:
    psi_c: np.ndarray  # (m, 9, d)
    xi: np.ndarray  # (m,)
    psi_bar: np.ndarray  # (m, 9, d)
    gram: np.ndarray  # (m, 9, d, 9, d)
    M: np.ndarray  # (d, 9)
    volume: float
    map_origin: np.ndarray = field(default_factory=lambda: np.zeros(9))
    labels: np.ndarray = None  # Gauss point -> cluster, kept for diagnostics

    def __post_init__(self):
        m, _, d = self.psi_c.shape
        # (m*81, d*d) layout so that B = A_flat @ gram_flat is one product
        flat = np.ascontiguousarray(self.gram.transpose(0, 1, 3, 2, 4)).reshape(m * 81, d * d)
        object.__setattr__(self, "_gram_flat", flat)

    @property
    def m(self):
        return len(self.xi)

    @property
    def d(self):
        return self.psi_c.shape[2]


@dataclass
class EmslStepResult:
    ybar: np.ndarray
    y: np.ndarray
    Pbar: np.ndarray
    Abar: np.ndarray
    Fc: np.ndarray
    a: np.ndarray
    B: np.ndarray
    wall_time: float = 0.0
    passes: int = 1
    stalled: bool = False


def emsl_offline(basis, partition, gauss_volume, M, cell_volume, map_origin=None):
    """Precompute cluster operators from a partition of the Gauss points."""
    psi_g = basis.psi_g
    G, _, d = psi_g.shape
    V = np.asarray(gauss_volume, dtype=float)
    if len(partition.labels) != G:
        raise DimensionMismatch("partition does not cover the basis' Gauss points")
    m = partition.m
    flat = psi_g.reshape(G, 9 * d)
    gram = np.empty((m, 9 * d, 9 * d))
    order = np.argsort(partition.labels, kind="stable")
    bounds = np.searchsorted(partition.labels[order], np.arange(m + 1))
    for c in range(m):
        idx = order[bounds[c]:bounds[c + 1]]
        Xc = flat[idx]
        gram[c] = (Xc * V[idx, None]).T @ Xc
    return EmslModel(
        psi_c=partition.psi_c.copy(),
        xi=partition.xi.copy(),
        psi_bar=partition.psi_bar.copy(),
        gram=gram.reshape(m, 9, d, 9, d),
        M=np.asarray(M, dtype=float),
        volume=float(cell_volume),
        map_origin=np.zeros(9) if map_origin is None else np.asarray(map_origin, dtype=float),
        labels=partition.labels.copy(),
    )


def train_emsl(snapshots, basis, m, seed=0, map_origin=IDENTITY):
    """Cluster, fit the inference map and precompute operators.

    The map is fitted about ``map_origin`` (the undeformed state by
    default), so the reference strain is exact at ``Fbar = I``.
    """
    Y = reduced_coords(basis, snapshots)
    M = fit_linear_map(Y, snapshots.Fbar, origin=map_origin)
    part = cluster_partition(basis, snapshots.volume, m, seed=seed)
    V = float(snapshots.meta.get("cell_volume", 0.0)) or None
    if V is None:
        raise DimensionMismatch("snapshot set lacks the cell volume (meta['cell_volume'])")
    return emsl_offline(basis, part, snapshots.volume, M, V, map_origin)


def predict_reference(model, Fbar):
    """ybar = M (Fbar - origin) and the cluster reference strains."""
    Fbar = np.asarray(Fbar, dtype=float)
    ybar = model.M @ (Fbar - model.map_origin)
    Fc = Fbar + model.psi_c @ ybar
    if np.any(np.linalg.det(Fc.reshape(-1, 3, 3)) <= 0):
        raise ReferenceInverted("predicted cluster strain has det F <= 0")
    return ybar, Fc


def emsl_assemble(model, P, A, y_ref):
    """Affine system terms around reference strains ``F^c = Fbar + psi^c y_ref``.

    Returns ``(a, B, c_vec, D)`` with residual ``a + B y`` and homogenised
    stress ``(c_vec + D y) / V``.
    """
    P = np.asarray(P, dtype=float)
    A = np.asarray(A, dtype=float)
    if P.shape != (model.m, 9) or A.shape != (model.m, 9, 9):
        raise DimensionMismatch(f"expected samples for {model.m} clusters")
    Ft = model.psi_c @ y_ref
    Phat = P - np.einsum("cij,cj->ci", A, Ft)
    a = np.einsum("cia,ci->a", model.psi_bar, Phat)
    B = (A.reshape(-1) @ model._gram_flat).reshape(model.d, model.d)
    c_vec = model.xi @ Phat
    D = np.einsum("cij,cja->ia", A, model.psi_bar)
    return a, B, c_vec, D


def _affine_solve(model, material, Fbar, Fc, y_ref, y_prev):
    try:
        P, A = material.evaluate(Fc)
    except NonPositiveJacobian as exc:
        raise ReferenceInverted(str(exc)) from exc
    a, B, c_vec, D = emsl_assemble(model, P, A, y_ref)
    with warnings.catch_warnings():
        warnings.simplefilter("error", la.LinAlgWarning)
        try:
            lu = la.lu_factor(B, check_finite=True)
        except (la.LinAlgWarning, ValueError, np.linalg.LinAlgError) as exc:
            raise SingularReducedSystem(str(exc)) from exc
    if np.any(np.diag(lu[0]) == 0):
        raise SingularReducedSystem("reduced system matrix is singular")
    dy = la.lu_solve(lu, -(a + B @ y_prev))
    y = y_prev + dy
    Pbar = (c_vec + D @ y) / model.volume
    # curvature of the material law neglected; B is the reduced stiffness
    X = la.lu_solve(lu, -D.T)
    Abar = (np.einsum("cij,c->ij", A, model.xi) + D @ X) / model.volume
    return y, dy, Pbar, Abar, a, B


def emsl_step(model, material, Fbar, y_prev=None):
    """One load step: predict, sample the material |H| times, solve."""
    t0 = time.perf_counter()
    y_prev = np.zeros(model.d) if y_prev is None else np.asarray(y_prev, dtype=float)
    ybar, Fc = predict_reference(model, Fbar)
    y, _, Pbar, Abar, a, B = _affine_solve(model, material, Fbar, Fc, ybar, y_prev)
    return EmslStepResult(ybar=ybar, y=y, Pbar=Pbar, Abar=Abar, Fc=Fc, a=a, B=B,
                          wall_time=time.perf_counter() - t0)


def emsl_fixed_point(model, material, Fbar, y_prev=None, max_passes=1, tol=1e-10):
    """Repeat the affine solve, re-linearising around the current ``y``."""
    t0 = time.perf_counter()
    res = emsl_step(model, material, Fbar, y_prev)
    Fbar = np.asarray(Fbar, dtype=float)
    y = res.y
    passes, done = 1, max_passes <= 1
    while not done and passes < max_passes:
        Fc = Fbar + model.psi_c @ y
        if np.any(np.linalg.det(Fc.reshape(-1, 3, 3)) <= 0):
            raise ReferenceInverted("fixed-point reference strain inverted")
        y, dy, Pbar, Abar, a, B = _affine_solve(model, material, Fbar, Fc, y, y)
        passes += 1
        res = EmslStepResult(ybar=res.ybar, y=y, Pbar=Pbar, Abar=Abar, Fc=Fc, a=a, B=B, passes=passes)
        done = np.linalg.norm(dy) <= tol * max(np.linalg.norm(y), np.finfo(float).tiny)
    if max_passes > 1 and not done:
        warnings.warn(f"EMSL fixed point not converged after {max_passes} passes", FixedPointStall)
        res.stalled = True
    res.wall_time = time.perf_counter() - t0
    return res


def run_path(model, material, Fbars, max_passes=1):
    y = np.zeros(model.d)
    out = []
    for Fb in Fbars:
        r = emsl_step(model, material, Fb, y) if max_passes == 1 else \
            emsl_fixed_point(model, material, Fb, y, max_passes=max_passes)
        y = r.y
        out.append(r)
    return out


def save_emsl(model, directory, meta=None):
    arrays = {"psi_c": model.psi_c, "xi": model.xi, "psi_bar": model.psi_bar,
              "gram": model.gram.reshape(model.m, -1), "M": model.M, "map_origin": model.map_origin,
              "labels": None if model.labels is None else model.labels.astype(float)}
    m = {"V": float(model.volume), "m": model.m, "d": model.d}
    m.update(meta or {})
    write_bundle(directory, "EMSL", arrays, m)


def load_emsl(directory):
    _, a, meta = read_bundle(directory, kind="EMSL")
    m, _, d = a["psi_c"].shape
    labels = a.get("labels")
    return EmslModel(psi_c=a["psi_c"], xi=a["xi"].reshape(-1), psi_bar=a["psi_bar"],
                     gram=a["gram"].reshape(m, 9, d, 9, d), M=a["M"], volume=float(meta["V"]),
                     map_origin=a["map_origin"].reshape(-1),
                     labels=None if labels is None else labels.reshape(-1).astype(int))
