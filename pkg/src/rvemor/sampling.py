"""Randomised macroscopic load paths and full-order snapshot collection."""

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NewtonDivergence, NonPositiveJacobian
from .store import read_bundle, write_bundle
from .voigt import IDENTITY

log = logging.getLogger(__name__)

# reference protocol: 8 steps of 0.025 along a fixed direction plus 0.015 random
DEFAULT_STEPS = 8
DEFAULT_DF_LP = 0.025
DEFAULT_DF_LS = 0.015


@dataclass(frozen=True, eq=False)
class LoadPath:
    direction: np.ndarray  # N_LP, unit Frobenius norm
    perturbations: np.ndarray  # (n_steps, 9) N_LS^k
    dF_lp: float
    dF_ls: float

    @property
    def n_steps(self):
        return len(self.perturbations)

    @property
    def increments(self):
        return self.dF_lp * self.direction[None, :] + self.dF_ls * self.perturbations

    @property
    def Fbar(self):
        """(n_steps + 1, 9) macro deformation gradients, starting at I."""
        return IDENTITY + np.vstack([np.zeros(9), np.cumsum(self.increments, axis=0)])


def _unit(rng, shape):
    x = rng.standard_normal(shape)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def generate_load_paths(seed, n_paths, n_steps=DEFAULT_STEPS, dF_lp=DEFAULT_DF_LP, dF_ls=DEFAULT_DF_LS):
    """Directions are uniform on the Frobenius unit sphere in R^9."""
    if dF_lp < 0 or dF_ls < 0:
        raise ValueError("step lengths must be non-negative")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    rng = np.random.default_rng(seed)
    paths = []
    for _ in range(n_paths):
        n_lp = _unit(rng, 9)
        n_ls = _unit(rng, (n_steps, 9))
        paths.append(LoadPath(n_lp, n_ls, float(dF_lp), float(dF_ls)))
    return paths


@dataclass(eq=False)
class SnapshotSet:
    """Column ``j`` of every matrix belongs to the same converged load step."""

    F: np.ndarray  # (9G, s) Gauss-point deformation gradients
    Fbar: np.ndarray  # (9, s)
    volume: np.ndarray  # (G,)
    P: np.ndarray = None  # (9G, s)
    Pbar: np.ndarray = None  # (9, s)
    Abar: np.ndarray = None  # (s, 9, 9) consistent macro tangents
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = self.F.shape[1]
        for name in ("Fbar", "P", "Pbar"):
            a = getattr(self, name)
            if a is not None and a.shape[1] != s:
                raise DimensionMismatch(f"{name} has {a.shape[1]} columns, expected {s}")
        if self.F.shape[0] != 9 * len(self.volume):
            raise DimensionMismatch("strain rows do not match 9 x Gauss point count")

    @property
    def n_snapshots(self):
        return self.F.shape[1]

    @property
    def n_gauss(self):
        return len(self.volume)

    def fluctuations(self):
        """F~^s: the macro strain subtracted from every Gauss block."""
        G = self.n_gauss
        return (self.F.reshape(G, 9, -1) - self.Fbar[None, :, :]).reshape(9 * G, -1)

    def mean_fluctuation(self):
        """(9, s) volume-weighted sum over g of F~^g V^g."""
        G = self.n_gauss
        Ft = self.fluctuations().reshape(G, 9, -1)
        return np.einsum("gis,g->is", Ft, self.volume)

    def subset(self, cols):
        cols = np.asarray(cols)
        pick = lambda a: None if a is None else a[:, cols]
        return SnapshotSet(self.F[:, cols], self.Fbar[:, cols], self.volume, pick(self.P),
                           pick(self.Pbar), None if self.Abar is None else self.Abar[cols], dict(self.meta))


def collect_snapshots(paths, solver, with_stresses=False, with_tangents=False, strict=False):
    """Drive the FOM along every path; one column per converged step.

    A path whose solve fails is dropped with a warning (or re-raised when
    ``strict``). Column order is (path index, step index).
    """
    Fs, Fbars, Ps, Pbars, Abars, failed = [], [], [], [], [], []
    t0 = time.perf_counter()
    for ip, path in enumerate(paths):
        cols = []
        state = solver.reference_state()
        try:
            for k, Fb in enumerate(path.Fbar[1:]):
                state = solver.solve_increment(Fb, state)
                A = solver.macro_tangent(state) if with_tangents else None
                cols.append((state.F.reshape(-1), Fb, state.P.reshape(-1) if with_stresses else None,
                             solver.homogenize_stress(state), A))
        except (NewtonDivergence, NonPositiveJacobian) as exc:
            if strict:
                raise NewtonDivergence(f"path {ip}, step {k}: {exc}") from exc
            warnings.warn(f"load path {ip} failed at step {k} and is excluded: {exc}", RuntimeWarning)
            failed.append(ip)
            continue
        for F, Fb, P, Pb, A in cols:
            Fs.append(F)
            Fbars.append(Fb)
            Ps.append(P)
            Pbars.append(Pb)
            Abars.append(A)
    meta = {"mesh_hash": solver.mesh.digest(), "cell_volume": float(solver.mesh.cell_volume),
            "n_paths": len(paths), "n_steps": paths[0].n_steps if paths else 0, "failed_paths": failed,
            "fom_time": time.perf_counter() - t0}
    stack = lambda xs: np.stack(xs, axis=1) if xs else None
    return SnapshotSet(
        F=stack(Fs) if Fs else np.zeros((9 * solver.gauss.n_points, 0)),
        Fbar=stack(Fbars) if Fbars else np.zeros((9, 0)),
        volume=solver.gauss.volume.copy(),
        P=stack(Ps) if with_stresses and Ps else None,
        Pbar=stack(Pbars) if Pbars else None,
        Abar=np.stack(Abars) if with_tangents and Abars else None,
        meta=meta,
    )


def write_store(snapshots, directory):
    meta = {k: v for k, v in snapshots.meta.items()}
    meta["s"] = snapshots.n_snapshots
    meta["n_gauss"] = snapshots.n_gauss
    arrays = {"F": snapshots.F, "Fbar": snapshots.Fbar, "volume": snapshots.volume,
              "P": snapshots.P, "Pbar": snapshots.Pbar, "Abar": snapshots.Abar}
    write_bundle(directory, "snapshots", arrays, meta)


def read_store(directory):
    _, arrays, meta = read_bundle(directory, kind="snapshots")
    for key in ("format", "version", "kind", "arrays", "s", "n_gauss"):
        meta.pop(key, None)
    meta = {k: v for k, v in meta.items() if not k.startswith("shape.")}
    return SnapshotSet(F=arrays["F"], Fbar=arrays["Fbar"], volume=arrays["volume"], P=arrays.get("P"),
                       Pbar=arrays.get("Pbar"), Abar=arrays.get("Abar"), meta=meta)
