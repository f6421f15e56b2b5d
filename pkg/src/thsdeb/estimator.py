"""Debiased and threshold ridge regression.

Every solve runs in SVD coordinates of the shared :class:`DesignMatrix`, so a
refit for a new response costs ``O(np)`` once the decomposition exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InputError
from .linmodel import DesignMatrix


@dataclass(frozen=True)
class RidgeConfig:
    rho: float
    threshold: float

    def __post_init__(self):
        for name in ("rho", "threshold"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise InputError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True, eq=False)
class RidgeFit:
    beta_star: np.ndarray
    beta_tilde: np.ndarray
    selected: np.ndarray  # sorted 0-based indices
    beta_hat: np.ndarray
    residuals: np.ndarray
    threshold: float

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.beta_hat.shape[0], dtype=bool)
        m[self.selected] = True
        return m


@dataclass(frozen=True, eq=False)
class CombinationEstimate:
    M: np.ndarray
    gamma_hat: np.ndarray
    c_hat: np.ndarray
    tau_hat: np.ndarray
    empty_selection: bool = field(default=False)


def shrink_weights(lam: np.ndarray, rho: float) -> np.ndarray:
    """Per-coordinate ridge weight ``lam / (lam^2 + rho)``."""
    return lam / (lam**2 + rho)


def debiased_weights(lam: np.ndarray, rho: float) -> np.ndarray:
    """Weight of the debiased estimator: ``lam/(lam^2+rho) + rho*lam/(lam^2+rho)^2``."""
    den = lam**2 + rho
    return lam / den + rho * lam / den**2


def ridge_star(d: DesignMatrix, y, rho: float) -> np.ndarray:
    """Classical ridge estimate ``Q (Lam^2 + rho)^-1 Lam P^T y``."""
    y = d.observation(y)
    return d.Q @ (shrink_weights(d.lam, rho) * (d.P.T @ y))


def debias(d: DesignMatrix, beta_star, rho: float) -> np.ndarray:
    """Add the estimated ridge bias ``rho Q (Lam^2 + rho)^-1 Q^T beta_star`` back."""
    beta_star = np.asarray(beta_star, dtype=float)
    return beta_star + rho * (d.Q @ ((d.Q.T @ beta_star) / (d.lam**2 + rho)))


def hard_threshold(beta_tilde: np.ndarray, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """Keep entries with ``|beta| > threshold`` (strict); return (indices, beta_hat)."""
    keep = np.abs(beta_tilde) > threshold
    return np.flatnonzero(keep), np.where(keep, beta_tilde, 0.0)


def threshold_fit(d: DesignMatrix, y, cfg: RidgeConfig, *, debiased: bool = True) -> RidgeFit:
    """Full pipeline: ridge, debias, strict threshold, residuals.

    With ``debiased=False`` the threshold acts on the plain ridge estimate
    (the threshold-ridge baseline); ``beta_tilde`` then equals ``beta_star``.
    """
    y = d.observation(y)
    bs = ridge_star(d, y, cfg.rho)
    bt = debias(d, bs, cfg.rho) if debiased else bs
    sel, bh = hard_threshold(bt, cfg.threshold)
    return RidgeFit(
        beta_star=bs,
        beta_tilde=bt,
        selected=sel,
        beta_hat=bh,
        residuals=y - d.X @ bh,
        threshold=cfg.threshold,
    )


def tau_from_c(c: np.ndarray, weights: np.ndarray, n: int) -> np.ndarray:
    """``sqrt(1/n + sum_j c_ij^2 w_j^2)`` along the last axis of ``c``."""
    return np.sqrt(1.0 / n + np.sum((c * weights) ** 2, axis=-1))


def combine(fit: RidgeFit, d: DesignMatrix, M, rho: float) -> CombinationEstimate:
    """Linear-combination estimate ``M beta_hat`` and its normalizers."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != d.p:
        raise DimensionMismatch(f"M has {M.shape[1]} columns, design has p={d.p}")
    sel = fit.selected
    c = M[:, sel] @ d.Q[sel, :]
    tau = tau_from_c(c, debiased_weights(d.lam, rho), d.n)
    return CombinationEstimate(
        M=M,
        gamma_hat=M @ fit.beta_hat,
        c_hat=c,
        tau_hat=tau,
        empty_selection=sel.size == 0,
    )
