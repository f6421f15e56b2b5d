"""Hyperparameter selection: K-fold CV for (rho, threshold) and a flat-top
autocorrelation rule for the dependent wild bootstrap bandwidth."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import Seed, stream
from .errors import FoldRankDeficient, InputError, RankDeficient, TooShort
from .estimator import debias, ridge_star
from .linmodel import DesignMatrix, decompose


@dataclass(frozen=True)
class TuneGrid:
    rhos: tuple[float, ...]
    thresholds: tuple[float, ...]
    folds: int = 10
    contiguous: bool = True

    def __post_init__(self):
        rhos = tuple(float(r) for r in self.rhos)
        ths = tuple(float(b) for b in self.thresholds)
        object.__setattr__(self, "rhos", rhos)
        object.__setattr__(self, "thresholds", ths)
        if not rhos or not ths:
            raise InputError("grids must be non-empty")
        if any(r <= 0 or not math.isfinite(r) for r in rhos) or any(np.diff(rhos) <= 0):
            raise InputError("rhos must be positive, finite and strictly ascending")
        if any(b < 0 or not math.isfinite(b) for b in ths) or any(np.diff(ths) <= 0):
            raise InputError("thresholds must be nonnegative, finite and strictly ascending")
        if self.folds < 2:
            raise InputError(f"folds must be >= 2, got {self.folds}")


def default_grid(d: DesignMatrix, y, *, n_rho: int = 25, n_threshold: int = 30, folds: int = 10) -> TuneGrid:
    """rho log-spaced on [1e-2, 1e3]; thresholds linear on [0, 1.5 max|beta_tilde|] at the smallest rho."""
    rhos = np.logspace(-2, 3, n_rho)
    bt = debias(d, ridge_star(d, y, rhos[0]), rhos[0])
    top = 1.5 * float(np.max(np.abs(bt)))
    return TuneGrid(tuple(rhos), tuple(np.linspace(0.0, top, n_threshold)), folds)


def fold_indices(n: int, folds: int, *, contiguous: bool = True, seed: Seed = 0) -> list[np.ndarray]:
    """Validation index sets. Contiguous blocks by default; shuffled with ``seed`` otherwise."""
    if folds > n:
        raise InputError(f"folds={folds} exceeds n={n}")
    order = np.arange(n) if contiguous else stream(seed).permutation(n)
    return [np.sort(idx) for idx in np.array_split(order, folds)]


@dataclass(frozen=True, eq=False)
class CVResult:
    rho: float
    threshold: float
    score: float
    grid: TuneGrid
    scores: np.ndarray  # (n_rho, n_threshold, folds)

    @property
    def totals(self) -> np.ndarray:
        return self.scores.sum(axis=2)

    def table(self) -> list[tuple[float, float, int, float]]:
        """Rows ``(rho, b, fold, score)``."""
        rows = []
        for i, r in enumerate(self.grid.rhos):
            for j, b in enumerate(self.grid.thresholds):
                for k in range(self.scores.shape[2]):
                    rows.append((r, b, k, float(self.scores[i, j, k])))
        return rows


def _argmin_prefer_large(totals: np.ndarray) -> tuple[int, int]:
    best = totals.min()
    rows, cols = np.nonzero(totals == best)
    i = rows.max()
    return int(i), int(cols[rows == i].max())


def cv_select(d: DesignMatrix, y, grid: TuneGrid, *, seed: Seed = 0, debiased: bool = True) -> CVResult:
    """Pick ``(rho, threshold)`` minimizing the summed held-out ``||y_v - X_v beta_hat||_2``.

    Ties go to the larger rho, then the larger threshold.
    """
    y = d.observation(y)
    n, p = d.n, d.p
    rhos = np.asarray(grid.rhos)
    ths = np.asarray(grid.thresholds)
    blocks = fold_indices(n, grid.folds, contiguous=grid.contiguous, seed=seed)
    scores = np.empty((rhos.size, ths.size, len(blocks)))
    for k, valid in enumerate(blocks):
        train = np.setdiff1d(np.arange(n), valid)
        if train.size < p:
            raise FoldRankDeficient(f"fold {k}: {train.size} training rows < p={p}")
        try:
            dt = decompose(d.X[train])
        except RankDeficient as exc:
            raise FoldRankDeficient(f"fold {k}: {exc}") from None
        yt, Xv, yv = y[train], d.X[valid], y[valid]
        for i, rho in enumerate(rhos):
            bt = ridge_star(dt, yt, rho)
            if debiased:
                bt = debias(dt, bt, rho)
            keep = np.abs(bt)[None, :] > ths[:, None]
            resid = yv[:, None] - Xv @ np.where(keep, bt, 0.0).T
            scores[i, :, k] = np.sqrt(np.sum(resid**2, axis=0))
    i, j = _argmin_prefer_large(scores.sum(axis=2))
    return CVResult(float(rhos[i]), float(ths[j]), float(scores[i, j].sum()), grid, scores)


@dataclass(frozen=True, eq=False)
class BandwidthResult:
    k_n: int
    m_hat: int
    acf: np.ndarray  # lags 0..max_lag
    degenerate: bool = field(default=False)


def autocorrelations(x: np.ndarray, max_lag: int) -> np.ndarray:
    x = x - x.mean()
    denom = float(x @ x)
    return np.array([1.0] + [float(x[:-k] @ x[k:]) / denom for k in range(1, max_lag + 1)])


def select_bandwidth(residuals, *, c: float = 2.0) -> BandwidthResult:
    """Flat-top autocorrelation cutoff rule for the bandwidth ``k_n``.

    ``m_hat`` is the smallest lag after which ``K_T = max(5, ceil(sqrt(log10 n)))``
    consecutive sample autocorrelations all fall below ``c sqrt(log10(n) / n)``;
    then ``k_n = min(2 m_hat + 1, floor(n / 2))``.
    """
    x = np.asarray(residuals, dtype=float).ravel()
    n = x.size
    if n < 20:
        raise TooShort(f"need at least 20 residuals, got {n}")
    k_max = math.ceil(math.sqrt(n))
    k_t = max(5, math.ceil(math.sqrt(math.log10(n))))
    max_lag = min(k_max + k_t, n - 1)
    if np.ptp(x) == 0.0:
        return BandwidthResult(1, 0, np.full(max_lag + 1, np.nan), degenerate=True)
    acf = autocorrelations(x, max_lag)
    small = np.abs(acf[1:]) < c * math.sqrt(math.log10(n) / n)  # small[k-1] <-> lag k
    m_hat = None
    for m in range(0, k_max + 1):
        if m + k_t > max_lag:
            break
        if small[m : m + k_t].all():
            m_hat = m
            break
    if m_hat is None:
        significant = np.flatnonzero(~small) + 1
        m_hat = int(min(significant.max(), k_max)) if significant.size else 0
    k_n = max(1, min(2 * m_hat + 1, n // 2))
    return BandwidthResult(k_n, m_hat, acf)
