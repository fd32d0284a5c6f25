"""Command line entry point: ``sbbm {run,converge,validate}``.

Exit codes: 0 success, 1 configuration error, 2 solver non-convergence,
3 validation failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .mesh import BOUNDARY_CONDITIONS, DIRICHLET
from .scheme import SchemeConfig, SchemeError, dump_states, run_trajectory
from .stochastic import NOISE_KINDS, generate_path, make_noise

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVALID = 0, 1, 2, 3

DEFAULTS = {
    "level": 3,
    "levels": "1,2,3,4",
    "k": None,
    "T": 1.0,
    "nu": 1.0,
    "bc": DIRICHLET,
    "u0": "zero",
    "noise": "linear",
    "alpha": 0.25,
    "samples": 400,
    "seed": 0,
    "sample_id": 0,
    "ref_rule": ex.SAME_K,
    "fp_tol": 1e-10,
    "fp_max_iter": 100,
    "k0": 2.0 ** -12,
    "profile": None,
}
TYPES = {
    "level": int, "levels": str, "k": float, "T": float, "nu": float, "bc": str, "u0": str,
    "noise": str, "alpha": float, "samples": int, "seed": int, "sample_id": int,
    "ref_rule": str, "fp_tol": float, "fp_max_iter": int, "k0": float, "profile": str,
}


class ConfigError(ValueError):
    pass


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in TYPES:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value' with a known key, got {raw!r}")
        values[key] = value.strip()
    return values


def _coerce(key, value):
    if value is None or value == "None":
        return None
    try:
        return TYPES[key](value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def effective_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(read_config(args.config))
    for key in TYPES:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    cfg = {key: _coerce(key, value) for key, value in cfg.items()}
    if cfg["bc"] not in BOUNDARY_CONDITIONS:
        raise ConfigError(f"bc must be one of {BOUNDARY_CONDITIONS}")
    if cfg["noise"] not in NOISE_KINDS or cfg["noise"] == "custom":
        raise ConfigError("noise must be linear, sin_shift or zero")
    return cfg


def echo(cfg: dict, keys, out, prefix: str = "# ") -> None:
    """Write the effective configuration; with ``prefix=""`` it is a valid config file."""
    for key in keys:
        if cfg.get(key) is not None:
            out.write(f"{prefix}{key} = {cfg[key]!r}\n".replace("'", ""))


def _scheme_config(cfg) -> SchemeConfig:
    level = cfg["level"]
    k = cfg["k"] if cfg["k"] is not None else 4.0 ** -level
    return SchemeConfig(
        k=k, level=level, nu=cfg["nu"], T=cfg["T"], bc=cfg["bc"],
        u0=None if cfg["u0"] == "zero" else cfg["u0"],
        fp_tol=cfg["fp_tol"], fp_max_iter=cfg["fp_max_iter"],
        noise=make_noise(cfg["noise"], cfg["alpha"]), seed=cfg["seed"], k0=cfg["k0"],
    )


def _study_config(cfg) -> ex.StudyConfig:
    overrides = dict(
        J=cfg["samples"], seed=cfg["seed"], nu=cfg["nu"], T=cfg["T"], bc=cfg["bc"],
        u0=None if cfg["u0"] == "zero" else cfg["u0"], ref_rule=cfg["ref_rule"],
        k0=cfg["k0"], fp_tol=cfg["fp_tol"], fp_max_iter=cfg["fp_max_iter"],
        levels=[int(v) for v in str(cfg["levels"]).split(",") if v.strip()],
        noise=make_noise(cfg["noise"], cfg["alpha"]),
    )
    if cfg["k"] is not None:
        overrides.update(k_equals_h2=False, k=cfg["k"])
    return ex.StudyConfig(**overrides)


RUN_KEYS = ["level", "k", "T", "nu", "bc", "u0", "noise", "alpha", "seed", "sample_id", "fp_tol", "fp_max_iter", "k0"]
STUDY_KEYS = ["levels", "k", "T", "nu", "bc", "u0", "noise", "alpha", "samples", "seed", "ref_rule", "fp_tol", "fp_max_iter", "k0"]


def cmd_run(args, out) -> int:
    cfg = effective_config(args)
    if cfg["k"] is None:
        cfg["k"] = 4.0 ** -cfg["level"]
    sc = _scheme_config(cfg)
    echo(cfg, RUN_KEYS, out)
    ops = sc.operators()
    path = generate_path(sc.seed, cfg["sample_id"], sc.T, sc.k0)
    traj = run_trajectory(ops, sc, path, checkpoints="all" if args.dump else None)
    out.write(f"steps = {sc.n_steps}\n")
    out.write(f"final_h1 = {traj.final_h1!r}\n")
    out.write(f"sup_h1 = {traj.sup_h1!r}\n")
    out.write(f"fp_iters_mean = {float(np.mean(traj.fp_iters))!r}\n")
    out.write(f"fp_iters_max = {int(np.max(traj.fp_iters))}\n")
    if args.dump:
        dump_states(args.dump, traj, sc, ops, cfg["sample_id"])
    return EXIT_OK


def cmd_converge(args, out) -> int:
    cfg = effective_config(args)
    name = "convergence"
    if cfg["profile"]:
        try:
            base = ex.profile(cfg["profile"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        name = cfg["profile"].rpartition("-")[2]
        # profile supplies levels, samples and noise unless given explicitly
        explicit = vars(args)
        cfg["levels"] = explicit["levels"] or ",".join(map(str, base.levels))
        cfg["samples"] = explicit["samples"] or base.J
        cfg["noise"] = explicit["noise"] or base.noise.kind
        cfg["alpha"] = explicit["alpha"] if explicit["alpha"] is not None else base.noise.alpha
    study = _study_config(cfg)
    echo(cfg, STUDY_KEYS, out)
    outdir = Path(args.out) if args.out else None
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / f"{name}.cfg", "w") as fh:
            echo(cfg, STUDY_KEYS, fh, prefix="")
    rows, failure = [], None
    try:
        rows = ex.run_study(study)
    except ex.StudyError as exc:
        rows, failure = exc.partial, str(exc)
    out.write(",".join(ex.CSV_HEADER) + "\n")
    for r in rows:
        out.write(",".join(map(str, r.csv_fields())) + "\n")
    if args.plot_data:
        out.write("level,log2_error\n")
        for level, le in ex.plot_data(rows):
            out.write(f"{level},{le!r}\n")
    if outdir:
        ex.write_csv(outdir / f"{name}.csv", rows, failure)
        if args.plot_data:
            with open(outdir / f"{name}_plot.csv", "w") as fh:
                fh.write("level,log2_error\n")
                for level, le in ex.plot_data(rows):
                    fh.write(f"{level},{le!r}\n")
    if failure:
        out.write(f"# FAILED: {failure}\n")
        return EXIT_SOLVER
    return EXIT_OK


def cmd_validate(args, out) -> int:
    from .validate import run_all

    checks = run_all(seed=args.seed or 0, quick=args.quick)
    for c in checks:
        out.write(c.line() + "\n")
    failed = sum(not c.passed for c in checks)
    out.write(f"{len(checks) - failed}/{len(checks)} invariants passed\n")
    return EXIT_INVALID if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbbm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--level", type=int)
        p.add_argument("--k", type=float)
        p.add_argument("--T", type=float)
        p.add_argument("--nu", type=float)
        p.add_argument("--bc", choices=BOUNDARY_CONDITIONS)
        p.add_argument("--u0", choices=["zero", "bump"])
        p.add_argument("--noise", choices=["linear", "sin_shift", "zero"])
        p.add_argument("--alpha", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--fp-tol", dest="fp_tol", type=float)
        p.add_argument("--fp-max-iter", dest="fp_max_iter", type=int)

    run = sub.add_parser("run", help="simulate one trajectory")
    common(run)
    run.add_argument("--sample-id", dest="sample_id", type=int)
    run.add_argument("--dump", help="write all states to this CSV file")
    run.set_defaults(func=cmd_run)

    conv = sub.add_parser("converge", help="Monte Carlo convergence study")
    common(conv)
    conv.add_argument("--levels", help="comma separated mesh levels")
    conv.add_argument("--samples", type=int)
    conv.add_argument("--ref-rule", dest="ref_rule", choices=ex.REF_RULES)
    conv.add_argument("--profile", choices=["table1", "table2", "ci-table1", "ci-table2"])
    conv.add_argument("--out", help="directory for CSV artifacts")
    conv.add_argument("--plot-data", dest="plot_data", action="store_true")
    conv.set_defaults(func=cmd_converge)

    val = sub.add_parser("validate", help="run the invariant suite")
    val.add_argument("--seed", type=int)
    val.add_argument("--quick", action="store_true", help="skip the Monte Carlo checks")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, out)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchemeError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
