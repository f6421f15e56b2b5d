"""Dependent wild bootstrap for the max-statistic of ``M beta_hat``.

Three resampling schemes share one refit path:

``dwb``
    residuals times Gaussian multipliers with covariance ``K((i - j) / k_n)``;
``efron``
    i.i.d. resampling of the centered residuals;
``wild``
    residuals times i.i.d. standard normal multipliers.

Replicate ``b`` draws only from ``stream(seed, b)``, so results do not depend
on how replicates are batched or scheduled.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from ._rng import Seed, child_seed, stream
from .errors import DimensionMismatch, EmptyInput, InputError, NonFinite, NotPSD
from .estimator import (
    CombinationEstimate,
    RidgeConfig,
    RidgeFit,
    combine,
    debiased_weights,
    tau_from_c,
    threshold_fit,
)
from .linmodel import DesignMatrix

METHODS = ("dwb", "efron", "wild")
_METHOD_ALIASES = {
    "dwb": "dwb",
    "dependent-wild": "dwb",
    "efron": "efron",
    "wild": "wild",
    "iid-wild": "wild",
}
_CHUNK = 256


@dataclass(frozen=True)
class Kernel:
    name: str
    func: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x) -> np.ndarray:
        return self.func(np.asarray(x, dtype=float))


def gaussian_kernel() -> Kernel:
    return Kernel("gaussian", lambda x: np.exp(-0.5 * x * x))


def tabulated_kernel(x, k, name: str = "custom-tabulated") -> Kernel:
    """Kernel given by samples ``K(x)`` on ``x >= 0``, extended symmetrically.

    Values are linearly interpolated and held at the last tabulated value
    beyond the grid.
    """
    x = np.asarray(x, dtype=float)
    k = np.asarray(k, dtype=float)
    if x.ndim != 1 or x.shape != k.shape or x.size < 2:
        raise InputError("tabulated kernel needs matching 1-D x and K(x) with >= 2 points")
    if x[0] != 0.0 or k[0] != 1.0:
        raise InputError("tabulated kernel must start at x = 0 with K(0) = 1")
    if np.any(np.diff(x) <= 0) or np.any(np.diff(k) > 0) or np.any(k < 0):
        raise InputError("tabulated kernel must have increasing x and nonincreasing, nonnegative K")
    return Kernel(name, lambda t: np.interp(np.abs(t), x, k))


def get_kernel(name: str) -> Kernel:
    if name == "gaussian":
        return gaussian_kernel()
    raise InputError(f"unknown kernel {name!r}")


def kernel_matrix(kernel: Kernel, k_n: float, n: int) -> np.ndarray:
    """``Gamma_ij = K((i - j) / k_n)``."""
    lags = np.arange(n, dtype=float)
    lags = (lags[:, None] - lags[None, :]) / k_n
    return kernel(lags)


@dataclass(frozen=True, eq=False)
class MultiplierFactor:
    kernel: Kernel
    k_n: float
    n: int
    gamma: np.ndarray
    factor: np.ndarray  # L with L @ L.T == gamma
    min_eigenvalue: float

    def draw(self, g: np.ndarray) -> np.ndarray:
        """Map i.i.d. N(0, 1) draws (``n`` or ``n x B``) to multipliers."""
        return self.factor @ g


def multiplier_factor(kernel: Kernel, k_n: float, n: int) -> MultiplierFactor:
    """Factor the kernel covariance by a floored symmetric eigendecomposition."""
    if not k_n > 0:
        raise InputError(f"k_n must be > 0, got {k_n}")
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    gamma = kernel_matrix(kernel, k_n, n)
    off = gamma - np.diag(np.diag(gamma))
    if not off.any():
        d = np.diag(gamma)
        return MultiplierFactor(kernel, float(k_n), n, gamma, np.diag(np.sqrt(d)), float(d.min()))
    evals, evecs = np.linalg.eigh(gamma)
    if evals[0] < -1e-6 * evals[-1]:
        raise NotPSD(f"kernel matrix has eigenvalue {evals[0]:.3e} (max {evals[-1]:.3e})")
    L = evecs * np.sqrt(np.maximum(evals, 0.0))
    return MultiplierFactor(kernel, float(k_n), n, gamma, L, float(evals[0]))


def sample_quantile(deltas, alpha: float) -> float:
    """``delta_(i*)`` with ``i* = min{i : #{j : delta_j <= delta_i} / n >= 1 - alpha}``."""
    d = np.sort(np.asarray(deltas, dtype=float).ravel())
    if d.size == 0:
        raise EmptyInput("sample_quantile needs at least one value")
    if not np.all(np.isfinite(d)):
        raise NonFinite("sample_quantile got NaN or Inf")
    counts = np.searchsorted(d, d, side="right")
    ok = counts / d.size >= 1.0 - alpha
    return float(d[np.argmax(ok)])


def _tau_for_masks(M: np.ndarray, Q: np.ndarray, w: np.ndarray, n: int, masks: np.ndarray) -> np.ndarray:
    """Normalizers for each selection pattern (rows of ``masks``); returns ``B x p1``."""
    patterns, inverse = np.unique(masks, axis=0, return_inverse=True)
    taus = np.empty((patterns.shape[0], M.shape[0]))
    for k, pat in enumerate(patterns):
        sel = np.flatnonzero(pat)
        taus[k] = tau_from_c(M[:, sel] @ Q[sel, :], w, n)
    return taus[np.asarray(inverse).ravel()]


def refit_statistics(
    d: DesignMatrix,
    base: RidgeFit,
    cfg: RidgeConfig,
    M: np.ndarray,
    gamma_hat: np.ndarray,
    eps_star: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Refit on ``y* = X beta_hat + eps*`` for each column of ``eps_star``.

    Returns ``(gamma_star, tau_star, delta_star)`` with shapes
    ``(B, p1)``, ``(B, p1)``, ``(B,)``.
    """
    w = debiased_weights(d.lam, cfg.rho)
    signal = d.lam * (d.Q.T @ base.beta_hat)
    z = d.P.T @ eps_star + signal[:, None]
    beta_t = (d.Q @ (w[:, None] * z)).T
    keep = np.abs(beta_t) > cfg.threshold
    beta_h = np.where(keep, beta_t, 0.0)
    gamma_star = beta_h @ M.T
    tau_star = _tau_for_masks(M, d.Q, w, d.n, keep)
    delta = np.max(np.abs(gamma_star - gamma_hat) / tau_star, axis=1)
    return gamma_star, tau_star, delta


def dwb_replicate(
    d: DesignMatrix,
    base: RidgeFit,
    cfg: RidgeConfig,
    M,
    factor: MultiplierFactor,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, float]:
    """One dependent wild bootstrap replicate: ``(gamma*, tau*, delta*)``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if factor.n != d.n:
        raise DimensionMismatch(f"factor built for n={factor.n}, design has n={d.n}")
    eps = base.residuals * factor.draw(rng.standard_normal(d.n))
    g, t, delta = refit_statistics(d, base, cfg, M, M @ base.beta_hat, eps[:, None])
    return g[0], t[0], float(delta[0])


def _draw_errors(method: str, residuals: np.ndarray, seed: tuple[int, ...], reps: range, factor) -> np.ndarray:
    """Bootstrap errors for replicates ``reps`` as columns of an ``n x len(reps)`` array."""
    n = residuals.shape[0]
    if method == "efron":
        centered = residuals - residuals.mean()
        idx = np.column_stack([stream(seed, b).integers(0, n, size=n) for b in reps])
        return centered[idx]
    g = np.column_stack([stream(seed, b).standard_normal(n) for b in reps])
    if method == "dwb":
        g = factor.draw(g)
    return residuals[:, None] * g


@dataclass(frozen=True, eq=False)
class BootstrapRun:
    method: str
    B: int
    alpha: float
    deltas: np.ndarray
    quantile: float
    seed: tuple[int, ...]
    k_n: float | None
    fit: RidgeFit
    estimate: CombinationEstimate


def run_bootstrap(
    method: str,
    d: DesignMatrix,
    y,
    cfg: RidgeConfig,
    M,
    *,
    kernel: Kernel | None = None,
    k_n: float | None = None,
    B: int = 1000,
    alpha: float = 0.1,
    seed: Seed = 0,
    factor: MultiplierFactor | None = None,
    fit: RidgeFit | None = None,
) -> BootstrapRun:
    """Fit once, then run ``B`` bootstrap replicates of the max-statistic.

    For ``method="dwb"`` either ``factor`` or ``k_n`` (with ``kernel``,
    default gaussian) must be given. A precomputed base ``fit`` of ``y`` may be
    passed to skip refitting.
    """
    method = _METHOD_ALIASES.get(method)
    if method is None:
        raise InputError(f"unknown bootstrap method; choose from {METHODS}")
    if B < 1:
        raise InputError(f"B must be >= 1, got {B}")
    if not 0 < alpha < 1:
        raise InputError(f"alpha must be in (0, 1), got {alpha}")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if fit is None:
        fit = threshold_fit(d, y, cfg)
    est = combine(fit, d, M, cfg.rho)
    if method == "dwb":
        if factor is None:
            if k_n is None:
                raise InputError("dwb needs k_n or a precomputed factor")
            factor = multiplier_factor(kernel or gaussian_kernel(), k_n, d.n)
        elif factor.n != d.n:
            raise DimensionMismatch(f"factor built for n={factor.n}, design has n={d.n}")
        k_n = factor.k_n
    else:
        factor = None

    seed = child_seed(seed)
    deltas = np.empty(B)
    for start in range(0, B, _CHUNK):
        stop = min(start + _CHUNK, B)
        eps = _draw_errors(method, fit.residuals, seed, range(start, stop), factor)
        deltas[start:stop] = refit_statistics(d, fit, cfg, M, est.gamma_hat, eps)[2]
    return BootstrapRun(
        method=method,
        B=B,
        alpha=alpha,
        deltas=deltas,
        quantile=sample_quantile(deltas, alpha),
        seed=seed,
        k_n=k_n if method == "dwb" else None,
        fit=fit,
        estimate=est,
    )
