"""Validation harness: error metric, online timing, (d, m) sweeps and reports."""

import csv
import json
import logging
import os
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import emsl as emsl_mod
from . import rom
from .e3c import build_e3c_model
from .ecm import train_ecm
from .emsl import train_emsl
from .errors import NumericalError, ZeroReferenceNorm
from .pod import compute_basis
from .voigt import cauchy_stress, von_mises

log = logging.getLogger(__name__)

METHODS = ("ECM", "E3C", "EMSL")


def mean_relative_error(rom_stress, val_stress, skip_zero=True):
    """Mean of |Pbar_rom - Pbar_val| / |Pbar_val| over samples, in percent.

    Samples whose reference norm is zero (the unloaded state) are skipped,
    or rejected with :class:`ZeroReferenceNorm` when ``skip_zero`` is off.
    """
    return float(np.mean(relative_errors(rom_stress, val_stress, skip_zero)))


def relative_errors(rom_stress, val_stress, skip_zero=True):
    R = np.atleast_2d(np.asarray(rom_stress, dtype=float))
    V = np.atleast_2d(np.asarray(val_stress, dtype=float))
    if R.shape != V.shape:
        raise ValueError(f"shape mismatch {R.shape} vs {V.shape}")
    ref = np.linalg.norm(V, axis=1)
    zero = ref == 0
    if zero.any() and (not skip_zero or zero.all()):
        raise ZeroReferenceNorm(f"{int(zero.sum())} reference sample(s) have zero stress")
    keep = ~zero
    return 100.0 * np.linalg.norm(R[keep] - V[keep], axis=1) / ref[keep]


@dataclass
class Baseline:
    """FOM reference along the validation paths."""

    paths: list  # list of (n_steps, 9) macro strain sequences
    Pbar: list  # matching (n_steps, 9) FOM homogenised stresses
    fom_time: float = float("nan")
    mesh_hash: str = ""

    @property
    def n_samples(self):
        return sum(len(p) for p in self.paths)


def baseline_from_snapshots(*sets):
    """Split snapshot columns back into load paths (column order: path, step)."""
    paths, Pbar, t, mesh = [], [], 0.0, ""
    for ss in sets:
        n = int(ss.meta.get("n_steps", 0)) or ss.n_snapshots
        Fb, Pb = ss.Fbar.T, ss.Pbar.T
        for k in range(0, ss.n_snapshots, n):
            paths.append(Fb[k:k + n].copy())
            Pbar.append(Pb[k:k + n].copy())
        t += float(ss.meta.get("fom_time", "nan"))
        mesh = str(ss.meta.get("mesh_hash", mesh))
    return Baseline(paths, Pbar, t, mesh)


@dataclass
class ValidationRow:
    method: str
    d: int
    m: int
    mean_error: float = float("nan")
    failed: bool = False
    wall_time: float = float("nan")
    relative_runtime: float = float("nan")
    errors: list = field(default_factory=list)
    note: str = ""


@dataclass
class ValidationReport:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def find(self, method, d, m):
        for r in self.rows:
            if (r.method, r.d, r.m) == (method, d, m):
                return r
        return None

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"meta": self.meta, "rows": [asdict(r) for r in self.rows]}, f, indent=1)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        return cls([ValidationRow(**r) for r in raw["rows"]], raw.get("meta", {}))


def online_run(model, material, paths, max_passes=1):
    """All validation paths through the model's online phase; (n, 9) stresses."""
    out = []
    if isinstance(model, emsl_mod.EmslModel):
        for p in paths:
            out.extend(r.Pbar for r in emsl_mod.run_path(model, material, p, max_passes=max_passes))
    else:
        for p in paths:
            out.extend(rom.run_path(model, material, p)[0])
    return np.array(out)


def run_validation(model, material, baseline, method=None, d=None, m=None, reps=3):
    """One report row. Failures are recorded in the row, never raised."""
    method = method or ("EMSL" if isinstance(model, emsl_mod.EmslModel) else model.kind)
    row = ValidationRow(method, int(d if d is not None else model.d), int(m if m is not None else model.m))
    ref = np.vstack(baseline.Pbar)
    times = []
    try:
        for _ in range(reps):
            t0 = time.perf_counter()
            P = online_run(model, material, baseline.paths)
            times.append(time.perf_counter() - t0)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        row.failed, row.note = True, f"{type(exc).__name__}: {exc}"
        return row
    row.wall_time = float(np.median(times))
    row.relative_runtime = 100.0 * row.wall_time / baseline.fom_time if baseline.fom_time > 0 else float("nan")
    if not np.all(np.isfinite(P)):
        row.failed, row.note = True, "non-finite stress"
        return row
    errs = relative_errors(P, ref)
    row.errors = errs.tolist()
    row.mean_error = float(errs.mean())
    if row.mean_error > 100.0:
        row.failed, row.note = True, "mean error above 100%"
    return row


def train_model(method, train, basis, m, material, seed=0, **opts):
    if method == "ECM":
        return train_ecm(train, basis, m, p_vol=opts.get("p_vol"),
                         separate_homog_weights=opts.get("separate_homog_weights", False))[0]
    if method == "E3C":
        return build_e3c_model(basis, train, m, material, seed=seed, p_strain=opts.get("p_strain"),
                               max_iter=opts.get("max_iter", 500))[0]
    if method == "EMSL":
        return train_emsl(train, basis, m, seed=seed, **{k: v for k, v in opts.items() if k == "map_origin"})
    raise ValueError(f"unknown method {method!r}")


def sweep(methods, d_list, m_list, train, baseline, material, seed=0, reps=3, **opts):
    """Train and validate every (method, d, m) cell; failures are recorded."""
    report = ValidationReport(meta={"seed": seed, "mesh_hash": baseline.mesh_hash,
                                    "n_samples": baseline.n_samples, "fom_time": baseline.fom_time})
    G = train.n_gauss
    full = compute_basis(train, 1)
    rank = full.numerical_rank
    for d in d_list:
        if d > rank:
            log.info("skipping d=%d above the snapshot rank %d", d, rank)
            continue
        basis = compute_basis(train, d)
        for method in methods:
            for m in m_list:
                if m > G:
                    continue
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", RuntimeWarning)
                        model = train_model(method, train, basis, m, material, seed, **opts)
                except NumericalError as exc:
                    report.rows.append(ValidationRow(method, d, m, failed=True, note=f"training: {exc}"))
                    continue
                row = run_validation(model, material, baseline, method, d, m, reps)
                log.info("%s d=%d m=%d: %.4g%% (%s)", method, d, m, row.mean_error, "x" if row.failed else "ok")
                report.rows.append(row)
    return report


def dominates(a, b):
    return (a.mean_error <= b.mean_error and a.wall_time <= b.wall_time
            and (a.mean_error < b.mean_error or a.wall_time < b.wall_time))


def pareto(rows):
    ok = [r for r in rows if not r.failed and np.isfinite(r.mean_error) and np.isfinite(r.wall_time)]
    return [r for r in ok if not any(dominates(o, r) for o in ok if o is not r)]


def _g(x):
    return "" if x is None or (isinstance(x, float) and not np.isfinite(x)) else f"{x:.6g}"


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter=";", lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_report(report, out_dir, plot=False):
    """errors.csv, runtimes.csv, pareto.csv, summary.txt (+ SVG charts)."""
    os.makedirs(out_dir, exist_ok=True)
    rows = sorted(report.rows, key=lambda r: (r.method, r.d, r.m))
    _write_csv(os.path.join(out_dir, "errors.csv"), ["method", "d", "m", "mean_error_pct", "failed"],
               [[r.method, r.d, r.m, "" if r.failed else _g(r.mean_error), "x" if r.failed else ""] for r in rows])
    timing = lambda r: [r.method, r.d, r.m, _g(r.wall_time), _g(r.relative_runtime), _g(r.mean_error)]
    header = ["method", "d", "m", "wall_time_s", "relative_runtime_pct", "mean_error_pct"]
    _write_csv(os.path.join(out_dir, "runtimes.csv"), header, [timing(r) for r in rows if not r.failed])
    front = sorted(pareto(rows), key=lambda r: r.wall_time)
    _write_csv(os.path.join(out_dir, "pareto.csv"), header, [timing(r) for r in front])
    lines = [f"{k}: {v}" for k, v in sorted(report.meta.items())]
    lines.append(f"cells: {len(rows)}, failed: {sum(r.failed for r in rows)}")
    for method in METHODS:
        good = [r for r in rows if r.method == method and not r.failed]
        if good:
            best = min(good, key=lambda r: r.mean_error)
            lines.append(f"{method}: best {best.mean_error:.4g}% at d={best.d}, m={best.m}")
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    if plot:
        _plots(rows, front, out_dir)


def _plots(rows, front, out_dir):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    good = [r for r in rows if not r.failed]
    for d in sorted({r.d for r in good}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for method in METHODS:
            sel = sorted((r for r in good if r.method == method and r.d == d), key=lambda r: r.m)
            if sel:
                ax.plot([r.m for r in sel], [r.mean_error for r in sel], "o-", label=method)
        ax.set(xlabel="m", ylabel="mean error [%]", yscale="log", title=f"d = {d}")
        ax.legend()
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, f"error_vs_m_d{d}.svg"))
        plt.close(fig)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for method in METHODS:
        sel = [r for r in good if r.method == method]
        if sel:
            ax.scatter([r.wall_time for r in sel], [r.mean_error for r in sel], label=method, s=12)
    if front:
        ax.plot([r.wall_time for r in front], [r.mean_error for r in front], "k--", lw=0.8, label="Pareto")
    ax.set(xlabel="online time [s]", ylabel="mean error [%]", xscale="log", yscale="log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "pareto.svg"))
    plt.close(fig)


def local_stress_field(basis, material, Fbar, y):
    """Von Mises stress at every Gauss point from the reduced solution."""
    F = np.asarray(Fbar, dtype=float) + basis.psi_g @ np.asarray(y, dtype=float)
    P = material.stress(F)
    return von_mises(cauchy_stress(P, F))


def stress_field_error(vm_rom, vm_fom, top_fraction=0.1):
    """Pointwise relative error and its maximum over the top-stress decile."""
    vm_rom, vm_fom = np.asarray(vm_rom), np.asarray(vm_fom)
    ref = np.abs(vm_fom)
    err = np.divide(np.abs(vm_rom - vm_fom), ref, out=np.zeros(ref.shape), where=ref > 0)
    k = max(1, int(np.ceil(top_fraction * len(vm_fom))))
    top = np.argsort(vm_fom)[-k:]
    return err, float(err[top].max())
