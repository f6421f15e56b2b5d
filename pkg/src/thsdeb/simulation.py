"""Synthetic experiments: non-stationary nonlinear errors, fixed designs,
model-selection and coverage metrics, and a seeded experiment runner."""

from __future__ import annotations

import csv
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy import stats

from ._rng import Seed, child_seed, stream
from .bootstrap import METHODS, get_kernel, multiplier_factor, run_bootstrap, sample_quantile
from .errors import InputError, PTooSmall
from .estimator import RidgeConfig, ridge_star, threshold_fit
from .inference import GaussianOracle, confidence_region, oracle_weights
from .linmodel import DesignMatrix, decompose, format_float, write_matrix_csv
from .tuning import TuneGrid, cv_select, default_grid, select_bandwidth

# sub-stream tags under the experiment seed
DESIGN, HMIX, COMB, SIM, BOOT, TUNE, SIGMA, ORACLE = range(8)

N_SIGNAL = 10
RIDGE_SUPPORT_CUTOFF = 0.01
ESTIMATORS = ("thsDeb", "thsRid", "ridge")

# reference experiment settings with their tuned values: n, p, p1, z, rho, b, k_n, lambda_p
REFERENCE_EXPERIMENTS = {
    1: dict(n=500, p=250, p1=20, z_decay=2.5, rho=23.87, threshold=0.56, k_n=17.67, lambda_p=6.95),
    2: dict(n=500, p=400, p1=20, z_decay=2.5, rho=34.97, threshold=0.66, k_n=23.42, lambda_p=2.47),
    3: dict(n=500, p=250, p1=60, z_decay=2.5, rho=69.22, threshold=0.47, k_n=16.75, lambda_p=6.66),
    4: dict(n=800, p=640, p1=60, z_decay=2.5, rho=31.30, threshold=0.61, k_n=17.99, lambda_p=3.32),
    5: dict(n=3000, p=1500, p1=20, z_decay=2.5, rho=117.10, threshold=0.31, k_n=46.80, lambda_p=13.46),
    6: dict(n=500, p=250, p1=20, z_decay=2.2, rho=79.07, threshold=0.48, k_n=15.76, lambda_p=6.53),
}


# ---------------------------------------------------------------------------
# data generation
# ---------------------------------------------------------------------------


def gen_design(n: int, p: int, seed: Seed) -> DesignMatrix:
    """i.i.d. N(0, 1) design."""
    if not p < n:
        raise InputError(f"need p < n, got n={n}, p={p}")
    return decompose(stream(seed).standard_normal((n, p)))


def gen_beta(p: int) -> np.ndarray:
    """``beta_i = 0.1 (i + 6)`` for ``i = 1..10`` (1-based), zero elsewhere."""
    if p < N_SIGNAL:
        raise PTooSmall(f"need p >= {N_SIGNAL}, got {p}")
    beta = np.zeros(p)
    beta[:N_SIGNAL] = 0.1 * (np.arange(1, N_SIGNAL + 1) + 6)
    return beta


def true_support(p: int) -> np.ndarray:
    return np.arange(N_SIGNAL) if p >= N_SIGNAL else np.arange(0)


def gen_combination(p1: int, p: int, seed: Seed) -> np.ndarray:
    """i.i.d. N(0.5, 0.25) entries."""
    if p1 < 1:
        raise InputError(f"p1 must be >= 1, got {p1}")
    return 0.5 + 0.5 * stream(seed).standard_normal((p1, p))


@dataclass(frozen=True, eq=False)
class ErrorProcessSpec:
    """``eps = scale * H a`` with ``a_i = e_i^2 e_{i-1}^2 - 1``."""

    n: int
    z_decay: float
    H: np.ndarray
    scale: float = 0.25


def mixing_matrix(n: int, z_decay: float, rng: np.random.Generator, band: int = 10) -> np.ndarray:
    """Lower-triangular ``H``: unit diagonal, U[0.6, 0.9] on the first ``band``
    subdiagonals, ``U[-1, 1] / (i - j)^z`` further out."""
    i, j = np.indices((n, n))
    lag = i - j
    near = rng.uniform(0.6, 0.9, size=(n, n))
    far = rng.uniform(-1.0, 1.0, size=(n, n)) / np.maximum(lag, 1).astype(float) ** z_decay
    H = np.where((lag >= 1) & (lag <= band), near, np.where(lag > band, far, 0.0))
    np.fill_diagonal(H, 1.0)
    return H


def make_error_process(n: int, z_decay: float, seed: Seed) -> ErrorProcessSpec:
    H = mixing_matrix(n, z_decay, stream(seed))
    H.setflags(write=False)
    return ErrorProcessSpec(n=n, z_decay=z_decay, H=H)


def _noise_products(e: np.ndarray) -> np.ndarray:
    sq = e**2
    return sq[..., 1:] * sq[..., :-1] - 1.0


def gen_errors(spec: ErrorProcessSpec, rng: np.random.Generator) -> np.ndarray:
    """One error vector; consumes ``n + 1`` normals ``e_0..e_n``."""
    a = _noise_products(rng.standard_normal(spec.n + 1))
    return spec.scale * (spec.H @ a)


def gen_errors_batch(spec: ErrorProcessSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size x n`` independent error vectors (rows)."""
    a = _noise_products(rng.standard_normal((size, spec.n + 1)))
    return spec.scale * (a @ spec.H.T)


def estimate_sigma(spec: ErrorProcessSpec, n_draws: int, seed: Seed, *, chunk: int = 2000) -> np.ndarray:
    """Empirical covariance of ``n_draws`` replayed error vectors."""
    if n_draws < 1000:
        raise InputError(f"n_draws must be >= 1000, got {n_draws}")
    total = np.zeros(spec.n)
    cross = np.zeros((spec.n, spec.n))
    seed = child_seed(seed)
    for k, start in enumerate(range(0, n_draws, chunk)):
        E = gen_errors_batch(spec, stream(seed, k), min(chunk, n_draws - start))
        total += E.sum(axis=0)
        cross += E.T @ E
    mean = total / n_draws
    S = (cross - n_draws * np.outer(mean, mean)) / (n_draws - 1)
    return 0.5 * (S + S.T)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    est_loss: float
    pred_loss: float
    misspec: int
    sym_diff: int
    fdr: float
    n_selected: int
    coverage: float = math.nan
    ci_radius: float = math.nan


def selection_metrics(selected, support) -> tuple[int, int, float]:
    """``(misspec, |sel delta true|, |sel - true| / max(1, |sel|))``."""
    sel, true = set(int(i) for i in selected), set(int(i) for i in support)
    sym = len(sel ^ true)
    return int(sym > 0), sym, len(sel - true) / max(1, len(sel))


def compute_metrics(d: DesignMatrix, M, beta, beta_hat, selected, support) -> MetricsReport:
    miss, sym, fdr = selection_metrics(selected, support)
    diff = beta_hat - beta
    return MetricsReport(
        est_loss=float(np.linalg.norm(M @ diff)),
        pred_loss=float(np.linalg.norm(d.X @ diff)),
        misspec=miss,
        sym_diff=sym,
        fdr=fdr,
        n_selected=len(selected),
    )


# ---------------------------------------------------------------------------
# experiment runner
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    p: int
    p1: int = 20
    z_decay: float = 2.5
    seed: int = 0
    n_sims: int = 100
    B: int = 1000
    alpha: float = 0.1
    scale_factor: float = 1.0
    tune: str = "once"  # once | each | pinned
    rho: float | None = None
    threshold: float | None = None
    k_n: float | None = None  # None: select per realization from residuals
    folds: int = 10
    contiguous_folds: bool = True
    grid_rhos: tuple[float, ...] | None = None
    grid_thresholds: tuple[float, ...] | None = None
    kernel: str = "gaussian"
    methods: tuple[str, ...] = ("dwb",)
    estimators: tuple[str, ...] = ("thsDeb",)
    rho_sweep: tuple[float, ...] = ()

    def __post_init__(self):
        for name in ("grid_rhos", "grid_thresholds"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(float(x) for x in v))
        for name in ("methods", "estimators"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "rho_sweep", tuple(float(r) for r in self.rho_sweep))
        self.validate()

    def validate(self) -> None:
        if not self.p < self.n:
            raise InputError(f"need p < n, got n={self.n}, p={self.p}")
        if self.p < N_SIGNAL:
            raise InputError(f"need p >= {N_SIGNAL}, got p={self.p}")
        if self.p1 < 1 or self.n_sims < 1 or self.B < 1:
            raise InputError("p1, n_sims and B must be >= 1")
        if not 0 < self.alpha < 1:
            raise InputError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0 < self.scale_factor <= 1:
            raise InputError(f"scale_factor must be in (0, 1], got {self.scale_factor}")
        if self.tune not in ("once", "each", "pinned"):
            raise InputError(f"tune must be once, each or pinned, got {self.tune!r}")
        if self.tune == "pinned" and (self.rho is None or self.threshold is None):
            raise InputError("tune='pinned' needs rho and threshold")
        if self.k_n is not None and not self.k_n > 0:
            raise InputError(f"k_n must be > 0, got {self.k_n}")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise InputError(f"unknown bootstrap methods {sorted(bad)}; choose from {METHODS}")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise InputError(f"unknown estimators {sorted(bad)}; choose from {ESTIMATORS}")
        if self.methods and "thsDeb" not in self.estimators:
            raise InputError("bootstrap methods require the thsDeb estimator")
        get_kernel(self.kernel)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        exp = data.pop("experiment", None)
        if exp is not None:
            if exp not in REFERENCE_EXPERIMENTS:
                raise InputError(f"unknown experiment {exp!r}; choose from {sorted(REFERENCE_EXPERIMENTS)}")
            keep = ("n", "p", "p1", "z_decay")
            if data.get("tune") == "pinned":
                keep += ("rho", "threshold", "k_n")
            row = {k: v for k, v in REFERENCE_EXPERIMENTS[exp].items() if k in keep}
            data = {**row, **data}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown config keys {sorted(unknown)}")
        missing = {"n", "p"} - set(data)
        if missing:
            raise InputError(f"missing config keys {sorted(missing)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise InputError(str(exc)) from None

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    def scaled(self) -> "ExperimentConfig":
        """Shrink ``n``, ``p``, ``n_sims`` and ``B`` by ``scale_factor`` (p kept >= 10 and < n)."""
        s = self.scale_factor
        if s == 1.0:
            return self
        n = max(N_SIGNAL + 2, round(self.n * s))
        p = min(max(N_SIGNAL, round(self.p * s)), n - 1)
        return replace(
            self,
            n=n,
            p=p,
            n_sims=max(1, round(self.n_sims * s)),
            B=max(1, round(self.B * s)),
            scale_factor=1.0,
        )


@dataclass
class Problem:
    """The draws held fixed across realizations of one experiment."""

    design: DesignMatrix
    beta: np.ndarray
    support: np.ndarray
    errors: ErrorProcessSpec
    M: np.ndarray

    def response(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        eps = gen_errors(self.errors, rng)
        return self.design.X @ self.beta + eps, eps


def make_problem(n: int, p: int, p1: int, z_decay: float, seed: Seed) -> Problem:
    return Problem(
        design=gen_design(n, p, child_seed(seed, DESIGN)),
        beta=gen_beta(p),
        support=true_support(p),
        errors=make_error_process(n, z_decay, child_seed(seed, HMIX)),
        M=gen_combination(p1, p, child_seed(seed, COMB)),
    )


def _grid(cfg: ExperimentConfig, d: DesignMatrix, y) -> TuneGrid:
    base = default_grid(d, y, folds=cfg.folds)
    return TuneGrid(
        cfg.grid_rhos or base.rhos,
        cfg.grid_thresholds or base.thresholds,
        cfg.folds,
        cfg.contiguous_folds,
    )


def _tune(cfg: ExperimentConfig, d: DesignMatrix, y, seed: Seed, debiased: bool) -> RidgeConfig:
    res = cv_select(d, y, _grid(cfg, d, y), seed=seed, debiased=debiased)
    return RidgeConfig(res.rho, res.threshold)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    hyper: dict
    rows: list[dict]
    sweep: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        groups: dict[tuple[str, str], list[dict]] = {}
        for r in self.rows:
            groups.setdefault((r["estimator"], r["method"]), []).append(r)
        out = []
        for (est, method), rs in groups.items():
            agg = {"estimator": est, "method": method, "n": len(rs)}
            for key in ("est_loss", "pred_loss", "misspec", "sym_diff", "fdr", "n_selected", "coverage", "ci_radius", "k_n"):
                vals = np.array([r[key] for r in rs], dtype=float)
                agg[key] = float(vals.mean()) if np.all(np.isfinite(vals)) else None
            out.append(agg)
        return {"config": self.config.to_dict(), "hyperparameters": self.hyper, "aggregates": out}


METRIC_COLUMNS = (
    "sim", "estimator", "method", "rho", "threshold", "k_n",
    "est_loss", "pred_loss", "misspec", "sym_diff", "fdr", "n_selected", "coverage", "ci_radius",
)


class _FactorCache:
    def __init__(self, kernel, n):
        self.kernel, self.n = kernel, n
        self._cache: dict[float, object] = {}
        self._lock = threading.Lock()

    def get(self, k_n: float):
        with self._lock:
            f = self._cache.get(k_n)
        if f is None:
            f = multiplier_factor(self.kernel, k_n, self.n)
            with self._lock:
                self._cache.setdefault(k_n, f)
        return f


def _run_one(cfg: ExperimentConfig, prob: Problem, hyper: dict[str, RidgeConfig], factors: _FactorCache, s: int) -> list[dict]:
    d = prob.design
    y, _ = prob.response(stream(cfg.seed, SIM, s))
    rows = []
    for est in cfg.estimators:
        if est == "ridge":
            rho = hyper["ridge"].rho
            bh = ridge_star(d, y, rho)
            sel = np.flatnonzero(np.abs(bh) > RIDGE_SUPPORT_CUTOFF)
            rc = RidgeConfig(rho, RIDGE_SUPPORT_CUTOFF)
        else:
            debiased = est == "thsDeb"
            rc = hyper[est] if cfg.tune != "each" else _tune(cfg, d, y, (cfg.seed, TUNE, s), debiased)
            fit = threshold_fit(d, y, rc, debiased=debiased)
            bh, sel = fit.beta_hat, fit.selected
        base = asdict(compute_metrics(d, prob.M, prob.beta, bh, sel, prob.support))
        common = {"sim": s, "estimator": est, "rho": rc.rho, "threshold": rc.threshold}
        if est != "thsDeb" or not cfg.methods:
            rows.append({**common, "method": "none", "k_n": math.nan, **base})
            continue
        k_n = cfg.k_n if cfg.k_n is not None else select_bandwidth(fit.residuals).k_n
        gamma = prob.M @ prob.beta
        for mi, method in enumerate(cfg.methods):
            run = run_bootstrap(
                method, d, y, rc, prob.M,
                B=cfg.B, alpha=cfg.alpha, seed=(cfg.seed, BOOT, s),
                factor=factors.get(float(k_n)) if method == "dwb" else None,
                fit=fit,
            )
            region = confidence_region(run.estimate, run)
            rows.append({
                **common, "method": method, "k_n": float(k_n),
                **base, "coverage": float(region.contains(gamma)), "ci_radius": run.quantile,
            })
    return rows


def _sweep_one(cfg: ExperimentConfig, prob: Problem, threshold: float, s: int) -> list[dict]:
    d = prob.design
    y, _ = prob.response(stream(cfg.seed, SIM, s))
    out = []
    for rho in cfg.rho_sweep:
        for est, debiased in (("thsDeb", True), ("thsRid", False)):
            fit = threshold_fit(d, y, RidgeConfig(rho, threshold), debiased=debiased)
            m = compute_metrics(d, prob.M, prob.beta, fit.beta_hat, fit.selected, prob.support)
            out.append({"sim": s, "estimator": est, "rho": rho, "threshold": threshold, **asdict(m)})
    return out


def run_experiment(cfg: ExperimentConfig, *, threads: int = 1) -> ExperimentResult:
    """Run ``cfg.n_sims`` realizations over fixed ``(X, beta, H, M)``.

    Outputs depend only on ``cfg``; ``threads`` changes scheduling, not results.
    """
    cfg = cfg.scaled()
    prob = make_problem(cfg.n, cfg.p, cfg.p1, cfg.z_decay, cfg.seed)
    d = prob.design

    hyper: dict[str, RidgeConfig] = {}
    if cfg.tune == "pinned":
        pinned = RidgeConfig(cfg.rho, cfg.threshold)
        hyper = {e: pinned for e in ESTIMATORS}
    elif cfg.tune == "once":
        y0, _ = prob.response(stream(cfg.seed, TUNE))
        for est in cfg.estimators:
            if est in ("thsDeb", "thsRid"):
                hyper[est] = _tune(cfg, d, y0, (cfg.seed, TUNE), est == "thsDeb")
        if "ridge" in cfg.estimators:
            r = cv_select(d, y0, TuneGrid(_grid(cfg, d, y0).rhos, (0.0,), cfg.folds, cfg.contiguous_folds),
                          seed=(cfg.seed, TUNE), debiased=False)
            hyper["ridge"] = RidgeConfig(r.rho, 0.0)
    if "ridge" in cfg.estimators and "ridge" not in hyper:
        hyper["ridge"] = RidgeConfig(cfg.rho or 1.0, 0.0)

    factors = _FactorCache(get_kernel(cfg.kernel), cfg.n)
    sims = range(cfg.n_sims)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        per_sim = list(pool.map(lambda s: _run_one(cfg, prob, hyper, factors, s), sims))
        sweep: list[dict] = []
        if cfg.rho_sweep:
            b = hyper["thsDeb"].threshold if "thsDeb" in hyper else cfg.threshold
            if b is None:
                raise InputError("rho_sweep needs a threshold (pinned or tuned)")
            for part in pool.map(lambda s: _sweep_one(cfg, prob, b, s), sims):
                sweep.extend(part)
    rows = [r for part in per_sim for r in part]
    hyper_out = {k: {"rho": v.rho, "threshold": v.threshold} for k, v in hyper.items()}
    hyper_out["lambda_p"] = float(d.lam[-1])
    return ExperimentResult(config=cfg, hyper=hyper_out, rows=rows, sweep=sweep)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    return str(v)


def write_rows_csv(path, rows: list[dict], columns) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def write_outputs(result: ExperimentResult, outdir, *, sigma_draws: int = 0) -> dict[str, Path]:
    """Write ``metrics.csv``, ``summary.json`` and optionally ``sweep.csv`` / ``sigma.csv``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {"metrics": outdir / "metrics.csv", "summary": outdir / "summary.json"}
    write_rows_csv(paths["metrics"], result.rows, METRIC_COLUMNS)
    paths["summary"].write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    if result.sweep:
        paths["sweep"] = outdir / "sweep.csv"
        cols = ("sim", "estimator", "rho", "threshold", "est_loss", "pred_loss", "misspec", "sym_diff", "fdr", "n_selected")
        write_rows_csv(paths["sweep"], result.sweep, cols)
    if sigma_draws:
        cfg = result.config
        spec = make_error_process(cfg.n, cfg.z_decay, child_seed(cfg.seed, HMIX))
        paths["sigma"] = outdir / "sigma.csv"
        write_matrix_csv(paths["sigma"], estimate_sigma(spec, sigma_draws, (cfg.seed, SIGMA)))
    return paths


# ---------------------------------------------------------------------------
# bootstrap versus Gaussian reference law
# ---------------------------------------------------------------------------


ORACLE_COLUMNS = ("seed", "rho", "threshold", "k_n", "selection_correct", "boot_quantile", "oracle_quantile", "ks")


def bootstrap_oracle_check(
    n: int,
    p: int,
    p1: int,
    seed: Seed,
    *,
    z_decay: float = 2.5,
    B: int = 2000,
    oracle_draws: int = 2000,
    sigma_draws: int = 20000,
    alpha: float = 0.1,
    folds: int = 10,
) -> dict:
    """KS distance between dependent wild bootstrap replicates and the Gaussian
    reference law built from a replayed error covariance, for one data draw."""
    prob = make_problem(n, p, p1, z_decay, seed)
    d = prob.design
    y, _ = prob.response(stream(seed, SIM, 0))
    res = cv_select(d, y, default_grid(d, y, folds=folds), seed=child_seed(seed, TUNE))
    rc = RidgeConfig(res.rho, res.threshold)
    fit = threshold_fit(d, y, rc)
    k_n = select_bandwidth(fit.residuals).k_n
    run = run_bootstrap("dwb", d, y, rc, prob.M, k_n=k_n, B=B, alpha=alpha, seed=child_seed(seed, BOOT), fit=fit)
    sigma = estimate_sigma(prob.errors, sigma_draws, child_seed(seed, SIGMA))
    oracle = GaussianOracle(sigma, oracle_weights(d, prob.M, prob.support, rc.rho), oracle_draws, child_seed(seed, ORACLE))
    h = oracle.sample()
    return {
        "seed": "-".join(map(str, child_seed(seed))),
        "rho": rc.rho,
        "threshold": rc.threshold,
        "k_n": float(k_n),
        "selection_correct": int(np.array_equal(fit.selected, prob.support)),
        "boot_quantile": run.quantile,
        "oracle_quantile": sample_quantile(h, alpha),
        "ks": float(stats.ks_2samp(run.deltas, h).statistic),
    }


def run_oracle_checks(n: int, p: int, p1: int, seeds: int, *, seed: int = 0, threads: int = 1, **kw) -> list[dict]:
    """:func:`bootstrap_oracle_check` for sub-seeds ``(seed, 0) .. (seed, seeds - 1)``, in seed order."""
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(lambda s: bootstrap_oracle_check(n, p, p1, (seed, s), **kw), range(seeds)))
