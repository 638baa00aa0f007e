"""Online machinery shared by cubature-type reduced models (ECM and E3C).

A :class:`CubatureModel` is a set of reduced integration points, each with
a 9 x d strain basis ``psi^c`` and a non-negative weight ``xi^c``. The
reduced residual and tangent are

    r = sum_c psi^cT P(Fbar + psi^c y) xi^c
    K = sum_c psi^cT A(F^c) psi^c xi^c

Volume-weighted k-means over the Gauss-point bases also lives here since
both E3C and EMSL start from it.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveJacobian, RomDivergence, SingularTangent
from .store import read_bundle, write_bundle

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CubatureModel:
    psi_c: np.ndarray  # (m, 9, d)
    xi: np.ndarray  # (m,)
    volume: float  # cell volume V including pores
    xi_hom: np.ndarray = None  # optional separate homogenisation weights
    kind: str = "ECM"
    gauss_index: np.ndarray = None  # selected Gauss points (ECM only)

    def __post_init__(self):
        if np.any(self.xi < 0):
            raise ValueError("cubature weights must be non-negative")

    @property
    def m(self):
        return len(self.xi)

    @property
    def d(self):
        return self.psi_c.shape[2]

    @property
    def hom_weights(self):
        return self.xi if self.xi_hom is None else self.xi_hom


@dataclass(frozen=True, eq=False)
class ClusterPartition:
    labels: np.ndarray  # (G,) cluster id per Gauss point
    xi: np.ndarray  # (m,) cluster volumes
    psi_c: np.ndarray  # (m, 9, d) volume-weighted centroids
    psi_bar: np.ndarray  # (m, 9, d) volume-integrated bases

    @property
    def m(self):
        return len(self.xi)


def cubature_from_partition(partition, volume, kind="E3C"):
    return CubatureModel(psi_c=partition.psi_c.copy(), xi=partition.xi.copy(), volume=volume, kind=kind)


def full_integration_model(basis, gauss_volume, cell_volume):
    """Every Gauss point with its own volume: plain POD-Galerkin."""
    return CubatureModel(psi_c=basis.psi_g.copy(), xi=np.asarray(gauss_volume, dtype=float).copy(),
                         volume=cell_volume, kind="ECM", gauss_index=np.arange(len(gauss_volume)))


# ---------------------------------------------------------------------------
# k-means


def _kmeanspp(X, w, m, rng):
    G = len(X)
    centers = np.empty((m, X.shape[1]))
    first = rng.choice(G, p=w / w.sum())
    centers[0] = X[first]
    d2 = np.einsum("ij,ij->i", X - centers[0], X - centers[0])
    chosen = np.zeros(G, dtype=bool)
    chosen[first] = True
    for k in range(1, m):
        p = w * d2
        p[chosen] = 0.0
        if p.sum() > 0:
            idx = rng.choice(G, p=p / p.sum())
        else:
            idx = rng.choice(np.flatnonzero(~chosen))
        chosen[idx] = True
        centers[k] = X[idx]
        diff = X - centers[k]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", diff, diff))
    return centers


def _sq_dist(X, C):
    d2 = np.einsum("ij,ij->i", X, X)[:, None] - 2.0 * X @ C.T + np.einsum("ij,ij->i", C, C)[None, :]
    return np.maximum(d2, 0.0)


def kmeans_objective(X, w, labels, centers):
    diff = X - centers[labels]
    return float(np.sum(w * np.einsum("ij,ij->i", diff, diff)))


def weighted_kmeans(points, weights, m, seed=0, max_iter=300, return_history=False):
    """Volume-weighted Lloyd iterations from k-means++ seeding.

    Parameters
    ----------
    points : array, shape (G, ...)
        Flattened per point before clustering (e.g. ``psi^g`` as 9d-vectors).
    weights : array, shape (G,)
    m : int
        Number of clusters, ``1 <= m <= G``.

    Returns
    -------
    labels : (G,) int array
    centers : (m, ...) weighted centroids
    history : list of objective values (only if ``return_history``)
    """
    pts = np.asarray(points, dtype=float)
    X = pts.reshape(len(pts), -1)
    w = np.asarray(weights, dtype=float)
    G = len(X)
    if not 1 <= m <= G:
        raise ValueError(f"m={m} must lie in [1, {G}]")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    rng = np.random.default_rng(seed)
    if m == G:
        labels = np.arange(G)
        centers = X.copy()
        hist = [0.0]
    else:
        centers = _kmeanspp(X, w, m, rng)
        labels = np.argmin(_sq_dist(X, centers), axis=1)
        hist = []
        for _ in range(max_iter):
            centers = _centroids(X, w, labels, m, centers)
            # re-seed empty clusters from the point farthest from its centroid
            counts = np.bincount(labels, minlength=m)
            for k in np.flatnonzero(counts == 0):
                diff = X - centers[labels]
                far = int(np.argmax(np.einsum("ij,ij->i", diff, diff)))
                labels[far] = k
                centers = _centroids(X, w, labels, m, centers)
            hist.append(kmeans_objective(X, w, labels, centers))
            new = np.argmin(_sq_dist(X, centers), axis=1)
            if np.array_equal(new, labels):
                break
            labels = new
        centers = _centroids(X, w, labels, m, centers)
    out = (labels, centers.reshape((m,) + pts.shape[1:]))
    return out + (hist,) if return_history else out


def _centroids(X, w, labels, m, previous):
    mass = np.bincount(labels, weights=w, minlength=m)
    sums = np.zeros((m, X.shape[1]))
    np.add.at(sums, labels, w[:, None] * X)
    out = previous.copy()
    nz = mass > 0
    out[nz] = sums[nz] / mass[nz, None]
    return out


def cluster_partition(basis, gauss_volume, m, seed=0):
    """Cluster the Gauss-point bases and build volumes/centroids."""
    psi_g = basis.psi_g
    V = np.asarray(gauss_volume, dtype=float)
    labels, _ = weighted_kmeans(psi_g, V, m, seed=seed)
    return partition_from_labels(psi_g, V, labels, m)


def partition_from_labels(psi_g, V, labels, m):
    xi = np.bincount(labels, weights=V, minlength=m)
    psi_bar = np.zeros((m,) + psi_g.shape[1:])
    np.add.at(psi_bar, labels, psi_g * V[:, None, None])
    psi_c = psi_bar / xi[:, None, None]
    return ClusterPartition(labels=labels, xi=xi, psi_c=psi_c, psi_bar=psi_bar)


# ---------------------------------------------------------------------------
# residual, tangent, Newton


def cluster_strains(model, y, Fbar):
    return np.asarray(Fbar, dtype=float) + model.psi_c @ np.asarray(y, dtype=float)


def reduced_residual(model, material, y, Fbar):
    P = material.stress(cluster_strains(model, y, Fbar))
    return np.einsum("cid,ci,c->d", model.psi_c, P, model.xi)


def reduced_tangent(model, material, y, Fbar):
    if model.m == 0:
        return np.zeros((model.d, model.d))
    A = material.tangent(cluster_strains(model, y, Fbar))
    return np.einsum("cia,cij,cjb,c->ab", model.psi_c, A, model.psi_c, model.xi, optimize=True)


@dataclass
class RomSolution:
    y: np.ndarray
    n_iter: int
    P: np.ndarray  # (m, 9) stresses at the reduced points
    A: np.ndarray  # (m, 9, 9)
    K: np.ndarray
    residual_norm: float


def newton_solve(model, material, Fbar, y0=None, tol=1e-9, abs_tol_factor=1e-12, max_iter=25):
    """Reduced Newton-Raphson; raises :class:`RomDivergence` on failure.

    Converged when ``|r| <= max(tol |r_0|, abs_tol_factor E V)``;
    ``n_iter`` counts Newton corrections.
    """
    Fbar = np.asarray(Fbar, dtype=float)
    y = np.zeros(model.d) if y0 is None else np.array(y0, dtype=float)
    psi, xi = model.psi_c, model.xi
    psi_w = psi * xi[:, None, None]
    abs_tol = abs_tol_factor * material.E * model.volume
    r0 = None
    for it in range(max_iter + 1):
        Fc = Fbar + psi @ y
        try:
            P, A = material.evaluate(Fc)
        except NonPositiveJacobian as exc:
            raise RomDivergence(f"reduced point inverted at iteration {it}") from exc
        r = np.einsum("cid,ci->d", psi_w, P)
        rn = float(np.linalg.norm(r))
        if not np.isfinite(rn):
            raise RomDivergence("non-finite reduced residual")
        r0 = rn if r0 is None else r0
        K = np.einsum("cia,cij,cjb->ab", psi_w, A, psi, optimize=True)
        if rn <= max(tol * r0, abs_tol):
            return RomSolution(y=y, n_iter=it, P=P, A=A, K=K, residual_norm=rn)
        if it == max_iter:
            break
        try:
            y = y - np.linalg.solve(K, r)
        except np.linalg.LinAlgError as exc:
            raise RomDivergence("singular reduced tangent") from exc
    raise RomDivergence(f"reduced Newton did not converge in {max_iter} iterations (|r|={rn:.3e})")


def rom_homogenize(model, material, y, Fbar, P=None):
    """P̄ = (1/V) sum_c xi_hom^c P(F^c)."""
    if P is None:
        P = material.stress(cluster_strains(model, y, Fbar))
    return model.hom_weights @ P / model.volume


def rom_macro_tangent(model, material, y, Fbar, A=None):
    """Consistent tangent (1/V)[sum xi A + (sum xi A psi) X] with K X = -L."""
    if A is None:
        A = material.tangent(cluster_strains(model, y, Fbar))
    psi, xi, xh = model.psi_c, model.xi, model.hom_weights
    K = np.einsum("cia,cij,cjb,c->ab", psi, A, psi, xi, optimize=True)
    L = np.einsum("cia,cij,c->aj", psi, A, xi)
    try:
        X = -np.linalg.solve(K, L)
    except np.linalg.LinAlgError as exc:
        raise SingularTangent("reduced tangent is singular") from exc
    Av = np.einsum("cij,c->ij", A, xh)
    AP = np.einsum("cij,cja,c->ia", A, psi, xh)
    return (Av + AP @ X) / model.volume


def run_path(model, material, Fbars, tangents=False):
    """Warm-started solves along a sequence of macro strains."""
    y = np.zeros(model.d)
    Pbar, Abar, ys, iters = [], [], [], []
    for Fb in Fbars:
        sol = newton_solve(model, material, Fb, y)
        y = sol.y
        ys.append(y)
        iters.append(sol.n_iter)
        Pbar.append(rom_homogenize(model, material, y, Fb, P=sol.P))
        if tangents:
            Abar.append(rom_macro_tangent(model, material, y, Fb, A=sol.A))
    return np.array(Pbar), (np.array(Abar) if tangents else None), np.array(ys), iters


def save_cubature(model, directory, meta=None):
    arrays = {"psi_c": model.psi_c, "xi": model.xi, "xi_hom": model.xi_hom,
              "gauss_index": None if model.gauss_index is None else model.gauss_index.astype(float)}
    m = {"V": float(model.volume), "m": model.m, "d": model.d}
    m.update(meta or {})
    write_bundle(directory, model.kind, arrays, m)


def load_cubature(directory):
    kind, arrays, meta = read_bundle(directory, kind=("ECM", "E3C"))
    gi = arrays.get("gauss_index")
    return CubatureModel(psi_c=arrays["psi_c"], xi=arrays["xi"].reshape(-1), volume=float(meta["V"]),
                         xi_hom=None if arrays.get("xi_hom") is None else arrays["xi_hom"].reshape(-1),
                         kind=kind, gauss_index=None if gi is None else gi.reshape(-1).astype(int))
