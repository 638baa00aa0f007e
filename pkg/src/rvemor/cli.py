"""Command-line front end: ``rvemor <subcommand> ...``.

Exit codes: 0 success, 2 configuration/input error, 3 numerical failure.
"""

import argparse
import hashlib
import io
import logging
import os
import sys


def _floats(text, n=None):
    vals = [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers")
    return vals


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _macro_strain(text):
    return _floats(text, 9)


def build_parser():
    def global_flags(parser, default):
        parser.add_argument("--config", default=default, help="key=value configuration file")
        parser.add_argument("--seed", type=int, default=default, help="random seed (overrides the config)")
        parser.add_argument("--out", default=default, help="output directory or file")
        parser.add_argument("--threads", type=int, default=default, help="BLAS thread count")
        parser.add_argument("-v", "--verbose", action="store_true", default=default or False)

    p = argparse.ArgumentParser(prog="rvemor", description="Reduced-order RVE homogenisation toolkit")
    global_flags(p, None)
    # the same flags are accepted after the subcommand name
    common = argparse.ArgumentParser(add_help=False)
    global_flags(common, argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name, help):
        return sub.add_parser(name, help=help, parents=[common])

    s = cmd("mesh", help="build the RVE and write it as text")

    s = cmd("fom-solve", help="full-order solve along a straight path to F")
    s.add_argument("--F", type=_macro_strain, required=True, help="9 comma-separated components of Fbar")
    s.add_argument("--steps", type=int, default=1)

    s = cmd("sample", help="random load paths and FOM snapshots")
    s.add_argument("--paths", type=int, help="number of load paths (default from config)")
    s.add_argument("--steps", type=int, help="load steps per path (default from config)")
    s.add_argument("--dflp", type=float, help="step length along the path direction")
    s.add_argument("--dfls", type=float, help="random perturbation per step")
    s.add_argument("--with-stresses", action="store_true", help="store Gauss-point stresses (needed by ECM)")
    s.add_argument("--tangents", action="store_true", help="also store macro tangents")

    s = cmd("train-pod", help="POD basis from snapshots")
    s.add_argument("--snapshots", required=True)
    s.add_argument("--d", type=int, required=True)

    s = cmd("train-ecm", help="ECM cubature by NNLS")
    s.add_argument("--snapshots", required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--pvol", type=float)
    s.add_argument("--separate-homog-weights", action="store_true")

    s = cmd("train-e3c", help="clustered cubature with L-BFGS correction")
    s.add_argument("--snapshots", required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--pstrain", type=float)
    s.add_argument("--max-iter", type=int, default=500)

    s = cmd("train-emsl", help="EMSL offline phase")
    s.add_argument("--snapshots", required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--map-origin", choices=("identity", "zero"), default="identity",
                   help="fit ybar = M (Fbar - I) (default) or ybar = M Fbar")

    s = cmd("validate", help="validate one trained model against FOM snapshots")
    s.add_argument("--model", required=True)
    s.add_argument("--val", nargs="+", required=True, help="snapshot stores with the FOM reference")
    s.add_argument("--reps", type=int, default=3)

    s = cmd("sweep", help="train and validate a (method, d, m) grid")
    s.add_argument("--train", required=True)
    s.add_argument("--val", nargs="+", required=True)
    s.add_argument("--methods", default="ECM,E3C,EMSL")
    s.add_argument("--d-list", type=_ints, default=[9, 12, 20])
    s.add_argument("--m-list", type=_ints, default=[1, 5, 20, 50])
    s.add_argument("--reps", type=int, default=3)
    s.add_argument("--plot", action="store_true")

    s = cmd("report", help="rewrite CSV/plot files from a sweep's report.json")
    s.add_argument("--report", required=True)
    s.add_argument("--plot", action="store_true")

    s = cmd("stress-field", help="per-Gauss-point von Mises stress from a reduced model")
    s.add_argument("--model", required=True)
    s.add_argument("--basis", required=True)
    s.add_argument("--F", type=_macro_strain, required=True)
    s.add_argument("--steps", type=int, default=8)
    s.add_argument("--fom", action="store_true", help="also solve the FOM and report the error field")

    s = cmd("emsl-run", help="EMSL along a load path; CSV of Pbar, Abar, timing")
    s.add_argument("--model", required=True)
    s.add_argument("--path", required=True, help="text file with one Fbar (9 numbers) per line")
    s.add_argument("--passes", type=int, default=1)
    return p


def _out(args, default):
    return args.out or default


def _setup(args):
    from .config import load_config
    from .errors import ConfigError

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if cfg.n_steps < 1 or cfg.n_paths < 1:
        raise ConfigError("sampling.n_steps and sampling.n_paths must be positive")
    return cfg


def _solver(cfg):
    from .fom import FomSolver
    from .mesh import build_rve

    return FomSolver(build_rve(cfg.n_voxels, cfg.pores, cfg.L), cfg.material)


def _load_model(path):
    from .emsl import load_emsl
    from .errors import ConfigError
    from .rom import load_cubature
    from .store import read_manifest

    try:
        kind = read_manifest(os.path.join(path, "manifest.txt")).get("kind")
    except OSError as exc:
        raise ConfigError(f"{path}: not a model directory") from exc
    return load_emsl(path) if kind == "EMSL" else load_cubature(path)


def _basis(snap_dir, d):
    from .pod import compute_basis
    from .sampling import read_store

    ss = read_store(snap_dir)
    return ss, compute_basis(ss, d)


def _fmt_row(vals):
    return ";".join(f"{v:.10g}" for v in vals)


def run(args):
    import numpy as np

    from .voigt import IDENTITY

    cfg = _setup(args)
    mat = cfg.material
    cmd = args.command

    if cmd == "mesh":
        from .mesh import build_rve, export_mesh, gauss_table, periodic_pairs

        mesh = build_rve(cfg.n_voxels, cfg.pores, cfg.L)
        gt, pm = gauss_table(mesh), periodic_pairs(mesh)
        path = _out(args, "mesh.txt")
        export_mesh(mesh, path)
        print(f"elements={mesh.n_elements} nodes={mesh.n_nodes} gauss_points={gt.n_points} "
              f"matrix_volume={gt.matrix_volume():.6g} dofs={pm.n_dofs} hash={mesh.digest()} -> {path}")

    elif cmd == "fom-solve":
        solver = _solver(cfg)
        target = np.asarray(args.F)
        state = solver.reference_state()
        for k in range(1, args.steps + 1):
            state = solver.solve_increment(IDENTITY + k / args.steps * (target - IDENTITY), state)
        print("Pbar;" + _fmt_row(solver.homogenize_stress(state)))
        for i, row in enumerate(solver.macro_tangent(state)):
            print(f"Abar{i};" + _fmt_row(row))

    elif cmd == "sample":
        from .errors import ConfigError
        from .sampling import collect_snapshots, generate_load_paths, write_store

        n = args.paths or cfg.n_paths
        pick = lambda flag, default: default if flag is None else flag
        try:
            paths = generate_load_paths(cfg.seed, n, pick(args.steps, cfg.n_steps), pick(args.dflp, cfg.dF_lp),
                                        pick(args.dfls, cfg.dF_ls))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        ss = collect_snapshots(paths, _solver(cfg), with_stresses=args.with_stresses,
                               with_tangents=args.tangents)
        ss.meta["seed"] = cfg.seed
        out = _out(args, "snapshots")
        write_store(ss, out)
        print(f"{ss.n_snapshots} snapshots from {n - len(ss.meta['failed_paths'])}/{n} paths -> {out}")

    elif cmd == "train-pod":
        from .pod import save_basis

        _, b = _basis(args.snapshots, args.d)
        out = _out(args, "basis")
        save_basis(b, out)
        print(f"d={b.d} rank={b.numerical_rank} -> {out}")

    elif cmd == "train-ecm":
        from .ecm import train_ecm
        from .rom import save_cubature

        ss, b = _basis(args.snapshots, args.d)
        model, sys_, res = train_ecm(ss, b, args.m, p_vol=args.pvol,
                                     separate_homog_weights=args.separate_homog_weights)
        out = _out(args, "ecm_model")
        save_cubature(model, out, {"p_vol": sys_.p_vol})
        print(f"ECM m={model.m} sum(xi)={model.xi.sum():.6g} residual={res.residual_history[-1]:.3e} -> {out}")

    elif cmd == "train-e3c":
        from .e3c import build_e3c_model
        from .rom import save_cubature

        ss, b = _basis(args.snapshots, args.d)
        model, info = build_e3c_model(b, ss, args.m, mat, seed=cfg.seed, p_strain=args.pstrain,
                                      max_iter=args.max_iter)
        out = _out(args, "e3c_model")
        save_cubature(model, out, {"seed": cfg.seed, "objective": info.final_value})
        print(f"E3C m={model.m} objective {info.initial_value:.4e} -> {info.final_value:.4e} -> {out}")

    elif cmd == "train-emsl":
        from .emsl import save_emsl, train_emsl

        ss, b = _basis(args.snapshots, args.d)
        origin = IDENTITY if args.map_origin == "identity" else np.zeros(9)
        model = train_emsl(ss, b, args.m, seed=cfg.seed, map_origin=origin)
        out = _out(args, "emsl_model")
        save_emsl(model, out, {"seed": cfg.seed})
        print(f"EMSL m={model.m} d={model.d} -> {out}")

    elif cmd == "validate":
        from .bench import baseline_from_snapshots, run_validation
        from .sampling import read_store

        model = _load_model(args.model)
        base = baseline_from_snapshots(*[read_store(v) for v in args.val])
        row = run_validation(model, mat, base, reps=args.reps)
        status = "x" if row.failed else f"{row.mean_error:.6g}%"
        print(f"{row.method};d={row.d};m={row.m};error={status};time={row.wall_time:.6g}s;{row.note}")
        return 3 if row.failed else 0

    elif cmd == "sweep":
        from .bench import baseline_from_snapshots, sweep, write_report
        from .sampling import read_store

        train = read_store(args.train)
        base = baseline_from_snapshots(*[read_store(v) for v in args.val])
        methods = [m.strip().upper() for m in args.methods.split(",") if m.strip()]
        rep = sweep(methods, args.d_list, args.m_list, train, base, mat, seed=cfg.seed, reps=args.reps)
        rep.meta["config_hash"] = hashlib.sha256(repr(cfg).encode()).hexdigest()[:16]
        out = _out(args, "sweep")
        os.makedirs(out, exist_ok=True)
        rep.to_json(os.path.join(out, "report.json"))
        write_report(rep, out, plot=args.plot)
        print(f"{len(rep.rows)} cells -> {out}")

    elif cmd == "report":
        from .bench import ValidationReport, write_report

        rep = ValidationReport.from_json(args.report)
        out = _out(args, os.path.dirname(os.path.abspath(args.report)))
        write_report(rep, out, plot=args.plot)
        print(f"report -> {out}")

    elif cmd == "stress-field":
        from .bench import local_stress_field, stress_field_error
        from .emsl import EmslModel, run_path as emsl_path
        from .pod import load_basis
        from .rom import run_path

        model, basis = _load_model(args.model), load_basis(args.basis)
        target = np.asarray(args.F)
        path = [IDENTITY + k / args.steps * (target - IDENTITY) for k in range(1, args.steps + 1)]
        if isinstance(model, EmslModel):
            y = emsl_path(model, mat, path)[-1].y
        else:
            y = run_path(model, mat, path)[2][-1]
        vm = local_stress_field(basis, mat, target, y)
        cols, header = [vm], "gauss_point;von_mises"
        if args.fom:
            from .voigt import cauchy_stress, von_mises

            solver = _solver(cfg)
            state = solver.reference_state()
            for Fb in path:
                state = solver.solve_increment(Fb, state)
            vm_fom = von_mises(cauchy_stress(state.P, state.F))
            err, hot = stress_field_error(vm, vm_fom)
            cols += [vm_fom, err]
            header += ";von_mises_fom;relative_error"
            print(f"max relative error in the top-stress decile: {100 * hot:.3g}%", file=sys.stderr)
        out = _out(args, "stress_field.csv")
        with open(out, "w", encoding="utf-8", newline="\n") as f:
            f.write(header + "\n")
            for g, vals in enumerate(zip(*cols)):
                f.write(f"{g};" + ";".join(f"{v:.6g}" for v in vals) + "\n")
        print(f"{len(vm)} Gauss points -> {out}")

    elif cmd == "emsl-run":
        from .emsl import load_emsl, run_path as emsl_path
        from .errors import ConfigError

        model = load_emsl(args.model)
        try:
            with open(args.path, encoding="utf-8") as f:
                text = f.read().replace(",", " ").replace(";", " ")
            path = np.loadtxt(io.StringIO(text), ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read load path {args.path}: {exc}") from exc
        if path.shape[1] != 9:
            raise ConfigError("load path rows need 9 components")
        results = emsl_path(model, mat, path, max_passes=args.passes)
        lines = ["step;" + ";".join(f"P{i}" for i in range(9)) + ";" + ";".join(f"A{i}{j}" for i in range(9)
                                                                         for j in range(9)) + ";wall_time_s"]
        for k, r in enumerate(results):
            lines.append(f"{k};" + _fmt_row(r.Pbar) + ";" + _fmt_row(r.Abar.ravel()) + f";{r.wall_time:.6g}")
        text = "\n".join(lines) + "\n"
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
        else:
            sys.stdout.write(text)
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    from .errors import ConfigError, NumericalError

    try:
        return run(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
