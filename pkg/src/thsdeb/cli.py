"""Command-line interface: fit, infer, tune, bandwidth, simulate, oracle-check.

Every command writes its result file plus ``<result>.manifest.json`` holding
the command, input hashes, hyperparameters, seed, version and wall time. The
result file itself carries no timing or path information, so reruns with
equal manifests reproduce it byte for byte.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import METHODS, get_kernel, run_bootstrap
from .errors import DimensionMismatch, InputError, NumericalError
from .estimator import RidgeConfig, combine, threshold_fit
from .inference import confidence_region, hypothesis_test
from .linmodel import decompose, read_matrix_csv, read_vector_csv
from .simulation import (
    ORACLE_COLUMNS,
    ExperimentConfig,
    run_experiment,
    run_oracle_checks,
    write_outputs,
    write_rows_csv,
)
from .tuning import TuneGrid, cv_select, default_grid, select_bandwidth

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM}
_IDX = {"type": "array", "items": {"type": "integer", "minimum": 0}}

SCHEMAS = {
    "fit": {
        "type": "object",
        "required": ["n", "p", "rho", "threshold", "beta_star", "beta_tilde", "selected", "beta_hat", "residuals"],
        "properties": {
            "n": {"type": "integer"},
            "p": {"type": "integer"},
            "rho": _NUM,
            "threshold": _NUM,
            "beta_star": _VEC,
            "beta_tilde": _VEC,
            "selected": _IDX,
            "beta_hat": _VEC,
            "residuals": {
                "type": "object",
                "required": ["mean", "sd", "min", "max", "rss"],
                "properties": {k: _NUM for k in ("mean", "sd", "min", "max", "rss")},
            },
            "gamma_hat": _VEC,
            "tau_hat": _VEC,
            "empty_selection": {"type": "boolean"},
        },
        "additionalProperties": False,
    },
    "infer": {
        "type": "object",
        "required": ["method", "B", "alpha", "seed", "k_n", "rho", "threshold", "selected",
                     "empty_selection", "gamma_hat", "tau_hat", "quantile", "intervals"],
        "properties": {
            "method": {"enum": list(METHODS)},
            "B": {"type": "integer", "minimum": 1},
            "alpha": _NUM,
            "seed": {"type": "integer"},
            "k_n": {"type": ["number", "null"]},
            "rho": _NUM,
            "threshold": _NUM,
            "selected": _IDX,
            "empty_selection": {"type": "boolean"},
            "gamma_hat": _VEC,
            "tau_hat": _VEC,
            "quantile": _NUM,
            "intervals": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
            "deltas": _VEC,
            "test": {
                "type": "object",
                "required": ["z", "statistic", "radius", "reject"],
                "properties": {"z": _VEC, "statistic": _NUM, "radius": _NUM, "reject": {"type": "boolean"}},
            },
        },
        "additionalProperties": False,
    },
    "tune": {
        "type": "object",
        "required": ["rho", "threshold", "score", "folds", "contiguous", "rhos", "thresholds"],
        "properties": {
            "rho": _NUM,
            "threshold": _NUM,
            "score": _NUM,
            "folds": {"type": "integer", "minimum": 2},
            "contiguous": {"type": "boolean"},
            "rhos": _VEC,
            "thresholds": _VEC,
        },
        "additionalProperties": False,
    },
    "bandwidth": {
        "type": "object",
        "required": ["k_n", "m_hat", "degenerate", "acf"],
        "properties": {
            "k_n": {"type": "integer", "minimum": 1},
            "m_hat": {"type": "integer", "minimum": 0},
            "degenerate": {"type": "boolean"},
            "acf": {"type": "array", "items": {"type": ["number", "null"]}},
        },
        "additionalProperties": False,
    },
    "manifest": {
        "type": "object",
        "required": ["command", "inputs", "hyperparameters", "seed", "version", "wall_time_s", "outputs"],
        "properties": {
            "command": {"type": "string"},
            "inputs": {
                "type": "object",
                "additionalProperties": {
                    "type": "object",
                    "required": ["path", "sha256"],
                    "properties": {"path": {"type": "string"}, "sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"}},
                },
            },
            "hyperparameters": {"type": "object"},
            "seed": {"type": ["integer", "null"]},
            "version": {"type": "string"},
            "wall_time_s": _NUM,
            "outputs": {"type": "array", "items": {"type": "string"}},
        },
    },
}


def _floats(a) -> list:
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dump(obj))


class _Run:
    """Collects manifest fields while a command executes."""

    def __init__(self, command: str, seed: int | None = None):
        self.command = command
        self.seed = seed
        self.inputs: dict[str, dict] = {}
        self.hyper: dict = {}
        self.outputs: list[Path] = []
        self.t0 = time.perf_counter()

    def input(self, name: str, path: str) -> Path:
        p = Path(path)
        if not p.is_file():
            raise InputError(f"{p}: no such file")
        self.inputs[name] = {"path": str(p), "sha256": _sha256(p)}
        return p

    def finish(self, primary: Path) -> None:
        manifest = {
            "command": self.command,
            "inputs": self.inputs,
            "hyperparameters": self.hyper,
            "seed": self.seed,
            "version": __version__,
            "wall_time_s": time.perf_counter() - self.t0,
            "outputs": [str(p) for p in self.outputs],
        }
        _write_json(primary.with_name(primary.name + ".manifest.json"), manifest)


def _load_xy(run: _Run, args):
    X = read_matrix_csv(run.input("X", args.X))
    y_path = run.input("y", args.y)
    y = read_vector_csv(y_path)
    if y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"{y_path}: has {y.shape[0]} rows, {args.X} has {X.shape[0]}")
    return decompose(X), y


def _load_M(run: _Run, path: str, p: int) -> np.ndarray:
    mp = run.input("M", path)
    M = read_matrix_csv(mp)
    if M.shape[1] != p:
        raise DimensionMismatch(f"{mp}: has {M.shape[1]} columns, design has p={p}")
    return M


def _residual_summary(r: np.ndarray) -> dict:
    return {
        "mean": float(r.mean()),
        "sd": float(r.std(ddof=1)) if r.size > 1 else 0.0,
        "min": float(r.min()),
        "max": float(r.max()),
        "rss": float(r @ r),
    }


def cmd_fit(args) -> int:
    run = _Run("fit")
    d, y = _load_xy(run, args)
    cfg = RidgeConfig(args.rho, args.threshold)
    run.hyper = {"rho": cfg.rho, "threshold": cfg.threshold}
    fit = threshold_fit(d, y, cfg)
    out = {
        "n": d.n,
        "p": d.p,
        "rho": cfg.rho,
        "threshold": cfg.threshold,
        "beta_star": _floats(fit.beta_star),
        "beta_tilde": _floats(fit.beta_tilde),
        "selected": [int(i) for i in fit.selected],
        "beta_hat": _floats(fit.beta_hat),
        "residuals": _residual_summary(fit.residuals),
    }
    if args.M:
        est = combine(fit, d, _load_M(run, args.M, d.p), cfg.rho)
        out["gamma_hat"] = _floats(est.gamma_hat)
        out["tau_hat"] = _floats(est.tau_hat)
        out["empty_selection"] = bool(est.empty_selection)
    path = Path(args.out)
    _write_json(path, out)
    run.outputs.append(path)
    run.finish(path)
    return EXIT_OK


def cmd_infer(args) -> int:
    run = _Run("infer", args.seed)
    d, y = _load_xy(run, args)
    M = _load_M(run, args.M, d.p)
    cfg = RidgeConfig(args.rho, args.threshold)
    fit = threshold_fit(d, y, cfg)
    kernel = get_kernel(args.kernel)
    k_n = args.k_n
    if args.method == "dwb" and k_n is None:
        k_n = select_bandwidth(fit.residuals).k_n
    boot = run_bootstrap(
        args.method, d, y, cfg, M,
        kernel=kernel, k_n=k_n, B=args.B, alpha=args.alpha, seed=args.seed, fit=fit,
    )
    region = confidence_region(boot.estimate, boot)
    run.hyper = {
        "rho": cfg.rho, "threshold": cfg.threshold, "method": boot.method, "kernel": kernel.name,
        "k_n": boot.k_n, "B": args.B, "alpha": args.alpha,
    }
    out = {
        "method": boot.method,
        "B": boot.B,
        "alpha": boot.alpha,
        "seed": args.seed,
        "k_n": None if boot.k_n is None else float(boot.k_n),
        "rho": cfg.rho,
        "threshold": cfg.threshold,
        "selected": [int(i) for i in fit.selected],
        "empty_selection": bool(boot.estimate.empty_selection),
        "gamma_hat": _floats(region.gamma_hat),
        "tau_hat": _floats(region.tau_hat),
        "quantile": region.radius,
        "intervals": [_floats(row) for row in region.intervals],
    }
    if args.deltas:
        out["deltas"] = _floats(boot.deltas)
    if args.test:
        zp = run.input("z", args.test)
        z = read_vector_csv(zp)
        if z.shape[0] != M.shape[0]:
            raise DimensionMismatch(f"{zp}: has {z.shape[0]} entries, M has {M.shape[0]} rows")
        t = hypothesis_test(boot.estimate, boot, z)
        out["test"] = {"z": _floats(t.z), "statistic": t.statistic, "radius": t.radius, "reject": bool(t.reject)}
    path = Path(args.out)
    _write_json(path, out)
    run.outputs.append(path)
    run.finish(path)
    return EXIT_OK


def cmd_tune(args) -> int:
    run = _Run("tune", args.seed)
    d, y = _load_xy(run, args)
    grid = default_grid(d, y, folds=args.folds)
    grid = TuneGrid(
        tuple(args.rhos) if args.rhos else grid.rhos,
        tuple(args.thresholds) if args.thresholds else grid.thresholds,
        args.folds,
        contiguous=not args.random_folds,
    )
    res = cv_select(d, y, grid, seed=args.seed)
    run.hyper = {"folds": grid.folds, "contiguous": grid.contiguous, "n_rhos": len(grid.rhos), "n_thresholds": len(grid.thresholds)}
    out = {
        "rho": res.rho,
        "threshold": res.threshold,
        "score": res.score,
        "folds": grid.folds,
        "contiguous": grid.contiguous,
        "rhos": list(grid.rhos),
        "thresholds": list(grid.thresholds),
    }
    path = Path(args.out)
    _write_json(path, out)
    table = Path(args.cv_table) if args.cv_table else path.with_name("cv_table.csv")
    rows = [dict(zip(("rho", "b", "fold", "score"), r)) for r in res.table()]
    write_rows_csv(table, rows, ("rho", "b", "fold", "score"))
    run.outputs += [path, table]
    run.finish(path)
    return EXIT_OK


def cmd_bandwidth(args) -> int:
    run = _Run("bandwidth")
    r = read_vector_csv(run.input("residuals", args.residuals))
    res = select_bandwidth(r, c=args.c)
    run.hyper = {"c": args.c}
    out = {
        "k_n": int(res.k_n),
        "m_hat": int(res.m_hat),
        "degenerate": bool(res.degenerate),
        "acf": [None if not np.isfinite(v) else float(v) for v in res.acf],
    }
    path = Path(args.out)
    _write_json(path, out)
    run.outputs.append(path)
    run.finish(path)
    return EXIT_OK


def _read_config(run: _Run, path: str) -> dict:
    cp = run.input("config", path)
    try:
        data = json.loads(cp.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{cp}: line {exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise InputError(f"{cp}: expected a JSON object")
    return data


def cmd_simulate(args) -> int:
    run = _Run("simulate")
    data = _read_config(run, args.config)
    if args.scale_factor is not None:
        data["scale_factor"] = args.scale_factor
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = ExperimentConfig.from_dict(data)
    run.seed = cfg.seed
    run.hyper = cfg.to_dict()
    result = run_experiment(cfg, threads=args.threads)
    paths = write_outputs(result, args.outdir, sigma_draws=args.sigma_draws)
    run.outputs += list(paths.values())
    run.finish(paths["metrics"])
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    run = _Run("oracle-check", args.seed)
    run.hyper = {"n": args.n, "p": args.p, "p1": args.p1, "seeds": args.seeds, "B": args.B,
                 "oracle_draws": args.oracle_draws, "sigma_draws": args.sigma_draws}
    rows = run_oracle_checks(
        args.n, args.p, args.p1, args.seeds, seed=args.seed, threads=args.threads,
        B=args.B, oracle_draws=args.oracle_draws, sigma_draws=args.sigma_draws,
    )
    path = Path(args.outdir) / "metrics.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_rows_csv(path, rows, ORACLE_COLUMNS)
    run.outputs.append(path)
    run.finish(path)
    return EXIT_OK


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                        help="worker threads (results do not depend on this)")

    ap = argparse.ArgumentParser(prog="thsdeb", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def xy(p):
        p.add_argument("X", help="design matrix CSV (n x p)")
        p.add_argument("y", help="response CSV (n values)")

    def ridge(p):
        p.add_argument("--rho", type=float, required=True)
        p.add_argument("--threshold", type=float, required=True)

    p = sub.add_parser("fit", parents=[common], help="debiased threshold ridge fit")
    xy(p)
    ridge(p)
    p.add_argument("--M", help="combination matrix CSV (p1 x p)")
    p.add_argument("-o", "--out", default="fit.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("infer", parents=[common], help="bootstrap confidence region and test")
    xy(p)
    p.add_argument("M", help="combination matrix CSV (p1 x p)")
    ridge(p)
    p.add_argument("--method", choices=METHODS, default="dwb")
    p.add_argument("--kernel", default="gaussian")
    p.add_argument("--k-n", type=float, default=None, help="bandwidth; selected from residuals when omitted")
    p.add_argument("--B", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test", metavar="Z_CSV", help="hypothesis vector z for H0: M beta = z")
    p.add_argument("--deltas", action="store_true", help="include every bootstrap statistic")
    p.add_argument("-o", "--out", default="infer.json")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("tune", parents=[common], help="cross-validate rho and threshold")
    xy(p)
    p.add_argument("--rhos", type=float, nargs="+")
    p.add_argument("--thresholds", type=float, nargs="+")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--random-folds", action="store_true", help="shuffle rows before splitting")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", default="tune.json")
    p.add_argument("--cv-table", help="per-fold score table (default: cv_table.csv next to --out)")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("bandwidth", parents=[common], help="select k_n from residuals")
    p.add_argument("residuals")
    p.add_argument("--c", type=float, default=2.0)
    p.add_argument("-o", "--out", default="bandwidth.json")
    p.set_defaults(func=cmd_bandwidth)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo experiment from a JSON config")
    p.add_argument("config")
    p.add_argument("--outdir", default=".")
    p.add_argument("--scale-factor", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--sigma-draws", type=int, default=0, help="also write sigma.csv from this many replays")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle-check", parents=[common], help="bootstrap versus Gaussian reference law")
    p.add_argument("--n", type=int, default=120)
    p.add_argument("--p", type=int, default=30)
    p.add_argument("--p1", type=int, default=5)
    p.add_argument("--seeds", type=_positive_int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--B", type=int, default=2000)
    p.add_argument("--oracle-draws", type=int, default=2000)
    p.add_argument("--sigma-draws", type=int, default=20000)
    p.add_argument("--outdir", default=".")
    p.set_defaults(func=cmd_oracle_check)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"thsdeb {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"thsdeb {args.command}: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
