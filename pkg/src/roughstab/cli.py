"""Command-line experiment runner.

Commands: sample, lift, norms, greedy, solve, stability, verify.  Every
stochastic command requires --seed; outputs are byte-identical across
reruns with the same flags (exit 0 for findings, 2 for config/usage
errors, 3 for trajectory blow-up).  Each run writes a manifest.json
carrying the command, config hash, code version, master seed, and
output-file hashes.  Thread count is read from ROUGHSTAB_THREADS.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._serialize import config_hash, read_csv, write_csv, write_json
from .greedy import greedy_times, greedy_times_augmented, verify_count_bounds
from .norms import check_control, ControlValues, holder_seminorm, p_variation, rough_seminorm
from .paths import RoughLift, SampledPath, TimeGrid, chen_defect, lift_piecewise_linear, sample_fbm
from .rough import RoughLinearSystem, solve_linear_rde, verify_supnorm_bound
from .stability import run_stability_experiment
from .young import BlowupError, YoungSystem, check_apriori, default_h, solve_yde

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3


class CliError(RuntimeError):
    pass


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ROUGHSTAB_THREADS", "1")))
    except ValueError:
        return 1


def _manifest(out: Path, command: str, config: dict, seed, hashes: dict) -> None:
    write_json(
        out / "manifest.json",
        {
            "command": command,
            "config_hash": config_hash(config),
            "version": __version__,
            "master_seed": seed,
            "outputs": hashes,
            "config": config,
        },
    )


def _sample_path(args) -> SampledPath:
    if not 0.0 < args.hurst < 1.0:
        raise CliError(f"--hurst must lie in (0,1), got {args.hurst}")
    if args.n < 2:
        raise CliError("--n must be >= 2")
    grid = TimeGrid.uniform(0.0, args.t, args.n)
    return sample_fbm(args.hurst, grid, dim=args.dim, seed=args.seed)


def _load_path(fname: str) -> SampledPath:
    header, data = read_csv(Path(fname))
    if header[0] != "t":
        raise CliError(f"{fname}: first column must be t")
    return SampledPath(TimeGrid(data[:, 0]), data[:, 1:])


def _path_csv(out: Path, path: SampledPath, name: str = "path.csv") -> dict:
    header = ["t"] + [f"x{i + 1}" for i in range(path.dim)]
    cols = [path.grid.points] + [path.values[:, i] for i in range(path.dim)]
    return {name: write_csv(out / name, header, cols)}


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_sample(args) -> int:
    out = _outdir(args)
    path = _sample_path(args)
    hashes = _path_csv(out, path)
    cfg = {"hurst": args.hurst, "n": args.n, "t": args.t, "dim": args.dim, "seed": args.seed}
    _manifest(out, "sample", cfg, args.seed, hashes)
    return EXIT_OK


def cmd_lift(args) -> int:
    out = _outdir(args)
    path = _sample_path(args)
    lift = lift_piecewise_linear(path)
    hashes = _path_csv(out, path)
    m = path.dim
    header = ["t"] + [f"X{j + 1}{k + 1}" for j in range(m) for k in range(m)]
    pref = np.concatenate([np.zeros((1, m, m)), lift.prefix()[1:]])
    cols = [path.grid.points] + [pref[:, j, k] for j in range(m) for k in range(m)]
    hashes.update({"levy.csv": write_csv(out / "levy.csv", header, cols)})
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(min(args.chen_triples, 10**4)):
        i, k, j = np.sort(rng.choice(path.grid.n + 1, size=3, replace=False))
        if i < k < j:
            worst = max(worst, float(np.abs(chen_defect(lift, int(i), int(k), int(j))).max()))
    hashes.update(
        {"chen.json": write_json(out / "chen.json", {"worst_defect": worst, "passed": worst <= 1e-12})}
    )
    cfg = {"hurst": args.hurst, "n": args.n, "t": args.t, "dim": args.dim, "seed": args.seed}
    _manifest(out, "lift", cfg, args.seed, hashes)
    return EXIT_OK


def cmd_norms(args) -> int:
    out = _outdir(args)
    path = _load_path(args.infile) if args.infile else _sample_path(args)
    report = {
        "p": args.p,
        "alpha": args.alpha,
        "p_variation": p_variation(path, args.p),
        "holder": holder_seminorm(path, min(args.alpha, 1.0)),
    }
    if args.rough:
        lift = lift_piecewise_linear(path)
        report["rough_seminorm"] = rough_seminorm(lift, args.alpha)
    omega = ControlValues(lambda s, t: p_variation(path, args.p, s, t) ** args.p if t > s else 0.0)
    coarse = TimeGrid(path.grid.points[:: max(1, path.grid.n // 16)])
    report["control_check"] = check_control(omega, coarse)
    hashes = {"norms.json": write_json(out / "norms.json", report)}
    cfg = {"p": args.p, "alpha": args.alpha, "seed": args.seed, "infile": args.infile}
    _manifest(out, "norms", cfg, args.seed, hashes)
    return EXIT_OK


def cmd_greedy(args) -> int:
    out = _outdir(args)
    path = _load_path(args.infile) if args.infile else _sample_path(args)
    lift = lift_piecewise_linear(path)
    build = greedy_times_augmented if args.augmented else greedy_times
    seq = build(lift, args.gamma, args.alpha)
    report = verify_count_bounds(seq, lift, args.nu)
    hashes = {
        "times.csv": write_csv(out / "times.csv", ["tau"], [seq.times]),
        "report.json": write_json(out / "report.json", report),
    }
    cfg = {"gamma": args.gamma, "alpha": args.alpha, "nu": args.nu, "augmented": args.augmented, "seed": args.seed}
    _manifest(out, "greedy", cfg, args.seed, hashes)
    return EXIT_OK


def _load_system(fname: str, mode: str):
    import json

    spec = json.loads(Path(fname).read_text())
    A = np.atleast_2d(np.asarray(spec["A"], dtype=np.float64))
    C = np.asarray(spec["C"], dtype=np.float64)
    if C.ndim == 0:
        C = float(C) * np.eye(A.shape[0])[None]
    elif C.ndim == 2:
        C = C[None]
    fspec = spec.get("f")
    if fspec:
        c0, c1 = float(fspec.get("c0", 0.0)), float(fspec.get("c1", 0.0))
        h = default_h(c0, c1)

        def f(y):
            r = np.linalg.norm(y)
            return c1 * y * r / (1.0 + r)

        C_f = c0 + c1
    else:
        f, h, C_f = None, None, 0.0
    if mode == "rough":
        return RoughLinearSystem(A=A, C=C, f=f, C_f=C_f, h=h), spec
    Cn = float(np.sqrt(sum(np.linalg.norm(Cj, 2) ** 2 for Cj in C)))

    def g(y):
        return np.einsum("jab,b->aj", C, y)

    def dg(y):
        return np.transpose(C, (1, 0, 2))

    return YoungSystem(A=A, f=f, g=g, C_f=C_f, C_g=Cn, h=h, dg=dg, m=C.shape[0]), spec


def cmd_solve(args) -> int:
    out = _outdir(args)
    path = _load_path(args.driver) if args.driver else _sample_path(args)
    sys_obj, sys_spec = _load_system(args.config, "rough" if args.mode == "rough" else "young")
    y0 = np.asarray([float(v) for v in args.y0.split(",")])
    try:
        if args.mode == "rough":
            lift = lift_piecewise_linear(path)
            traj = solve_linear_rde(sys_obj, lift, y0, stepping="grid")["trajectory"]
            report = verify_supnorm_bound(sys_obj, lift, y0, args.alpha)
        else:
            traj = solve_yde(sys_obj, path, y0, scheme=args.scheme)
            report = check_apriori(sys_obj, path, traj, args.p)
    except BlowupError as exc:
        write_json(out / "report.json", {"blow_up": True, "step": exc.index})
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    header = ["t"] + [f"y{i + 1}" for i in range(traj.dim)]
    cols = [traj.grid.points] + [traj.values[:, i] for i in range(traj.dim)]
    hashes = {
        "trajectory.csv": write_csv(out / "trajectory.csv", header, cols),
        "report.json": write_json(out / "report.json", report),
    }
    cfg = {
        "system": sys_spec,
        "mode": args.mode,
        "scheme": args.scheme,
        "y0": args.y0,
        "p": args.p,
        "alpha": args.alpha,
        "seed": args.seed,
        "driver": args.driver,
    }
    _manifest(out, "solve", cfg, args.seed, hashes)
    return EXIT_OK


def cmd_stability(args) -> int:
    import json

    out = _outdir(args)
    cfg = json.loads(Path(args.config).read_text())
    try:
        report = run_stability_experiment(cfg)
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    exps = report.per_seed_exponents
    hashes = {
        "report.json": write_json(out / "report.json", report.to_dict()),
        "exponents.csv": write_csv(
            out / "exponents.csv", ["rank", "exponent"], [np.arange(exps.size, dtype=float), exps]
        ),
    }
    rows = []
    for name, entry in sorted(report.thresholds.items()):
        rows.append((name, entry.get("bound"), entry.get("satisfied")))
    if rows:
        lines = ["criterion,bound,satisfied"]
        for name, bound, sat in rows:
            btxt = "" if bound is None else ("%.17g" % bound)
            lines.append(f"{name},{btxt},{int(bool(sat))}")
        text = "\n".join(lines) + "\n"
        (out / "thresholds.csv").write_text(text)
        import hashlib

        hashes["thresholds.csv"] = hashlib.sha256(text.encode()).hexdigest()
    _manifest(out, "stability", cfg, cfg.get("seeds", {}).get("master"), hashes)
    return EXIT_OK


def cmd_verify(args) -> int:
    out = _outdir(args)
    rng_seed = args.seed
    findings: dict = {"suite": args.suite}
    if args.suite == "chen":
        grid = TimeGrid.uniform(0.0, 1.0, 512)
        worst = 0.0
        for s in range(4):
            path = sample_fbm(0.4, grid, dim=2, seed=rng_seed + s)
            lift = lift_piecewise_linear(path)
            rng = np.random.default_rng(rng_seed + s)
            for _ in range(500):
                i, k, j = np.sort(rng.choice(grid.n + 1, size=3, replace=False))
                if i < k < j:
                    worst = max(worst, float(np.abs(chen_defect(lift, int(i), int(k), int(j))).max()))
        findings.update({"worst_defect": worst, "passed": worst <= 1e-12})
    elif args.suite == "control":
        grid = TimeGrid.uniform(0.0, 1.0, 64)
        path = sample_fbm(0.7, grid, dim=1, seed=rng_seed)
        omega = ControlValues(lambda s, t: p_variation(path, 1.4, s, t) ** 1.4 if t > s else 0.0)
        findings.update(check_control(omega, grid))
    elif args.suite == "greedy":
        grid = TimeGrid.uniform(0.0, 1.0, 1024)
        path = sample_fbm(0.4, grid, dim=1, seed=rng_seed)
        lift = lift_piecewise_linear(path)
        seq = greedy_times(lift, 0.5, 0.35)
        findings.update(verify_count_bounds(seq, lift, 0.38))
    else:
        raise CliError(f"unknown suite {args.suite!r}")
    hashes = {"verify.json": write_json(out / "verify.json", findings)}
    _manifest(out, "verify", {"suite": args.suite, "seed": args.seed}, args.seed, hashes)
    return EXIT_OK


def _add_sampling_flags(sp, seed_required=True):
    sp.add_argument("--hurst", type=float, default=0.5)
    sp.add_argument("--n", type=int, default=1024)
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--dim", type=int, default=1)
    sp.add_argument("--seed", type=int, required=seed_required)
    sp.add_argument("--out", type=str, required=True)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="roughstab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sample", help="sample a fractional Brownian path")
    _add_sampling_flags(sp)
    sp.set_defaults(fn=cmd_sample)

    sp = sub.add_parser("lift", help="sample a path and build its rough lift")
    _add_sampling_flags(sp)
    sp.add_argument("--chen-triples", type=int, default=2000)
    sp.set_defaults(fn=cmd_lift)

    sp = sub.add_parser("norms", help="variation/Hölder seminorms and control check")
    _add_sampling_flags(sp)
    sp.add_argument("--in", dest="infile", type=str, default=None)
    sp.add_argument("--p", type=float, default=1.4)
    sp.add_argument("--alpha", type=float, default=0.45)
    sp.add_argument("--rough", action="store_true")
    sp.set_defaults(fn=cmd_norms)

    sp = sub.add_parser("greedy", help="greedy stopping times and counting bounds")
    _add_sampling_flags(sp)
    sp.add_argument("--in", dest="infile", type=str, default=None)
    sp.add_argument("--gamma", type=float, required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--nu", type=float, required=True)
    sp.add_argument("--augmented", action="store_true")
    sp.set_defaults(fn=cmd_greedy)

    sp = sub.add_parser("solve", help="solve a Young or rough linear system")
    _add_sampling_flags(sp)
    sp.add_argument("--config", type=str, required=True, help="system JSON: {A, C, f}")
    sp.add_argument("--driver", type=str, default=None, help="driver CSV instead of sampling")
    sp.add_argument("--mode", choices=["young", "rough"], default="young")
    sp.add_argument("--scheme", choices=["euler", "milstein"], default="euler")
    sp.add_argument("--y0", type=str, default="1.0")
    sp.add_argument("--p", type=float, default=1.4)
    sp.add_argument("--alpha", type=float, default=0.35)
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("stability", help="run a stability experiment from config JSON")
    sp.add_argument("--config", type=str, required=True)
    sp.add_argument("--out", type=str, required=True)
    sp.set_defaults(fn=cmd_stability)

    sp = sub.add_parser("verify", help="run a named invariant suite")
    sp.add_argument("--suite", type=str, required=True, choices=["chen", "control", "greedy"])
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", type=str, required=True)
    sp.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None) -> int:
    os.environ.setdefault("NUMBA_NUM_THREADS", str(_threads()))
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (CliError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
