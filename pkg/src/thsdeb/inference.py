"""Confidence regions, max-statistic tests, and the Gaussian reference law.

The Gaussian reference law is only computable when the error covariance is
known, i.e. in simulation where the error process can be replayed. It serves
as a check on the bootstrap, not as a user-facing estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import Seed, child_seed, stream
from .bootstrap import BootstrapRun, sample_quantile
from .errors import DimensionMismatch, InputError, NotPSD
from .estimator import CombinationEstimate, debiased_weights, tau_from_c
from .linmodel import DesignMatrix


def max_statistic(gamma_hat, tau_hat, gamma) -> float:
    """``max_i |gamma_hat_i - gamma_i| / tau_hat_i``."""
    gamma_hat = np.asarray(gamma_hat, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != gamma_hat.shape:
        raise DimensionMismatch(f"expected vector of length {gamma_hat.shape[0]}, got shape {gamma.shape}")
    return float(np.max(np.abs(gamma_hat - gamma) / tau_hat))


@dataclass(frozen=True, eq=False)
class ConfidenceRegion:
    gamma_hat: np.ndarray
    tau_hat: np.ndarray
    radius: float
    alpha: float

    @property
    def intervals(self) -> np.ndarray:
        """``p1 x 2`` array of per-coordinate bounds."""
        half = self.radius * self.tau_hat
        return np.column_stack([self.gamma_hat - half, self.gamma_hat + half])

    def contains(self, gamma) -> bool:
        return max_statistic(self.gamma_hat, self.tau_hat, gamma) <= self.radius


@dataclass(frozen=True, eq=False)
class TestResult:
    z: np.ndarray
    statistic: float
    radius: float
    reject: bool

    __test__ = False  # not a pytest class


def confidence_region(est: CombinationEstimate, run: BootstrapRun) -> ConfidenceRegion:
    if not np.isfinite(run.quantile):
        raise InputError("bootstrap quantile is not finite")
    return ConfidenceRegion(est.gamma_hat, est.tau_hat, float(run.quantile), run.alpha)


def hypothesis_test(est: CombinationEstimate, run: BootstrapRun, z) -> TestResult:
    """Test ``M beta = z``; rejects when the statistic strictly exceeds the radius."""
    z = np.asarray(z, dtype=float)
    stat = max_statistic(est.gamma_hat, est.tau_hat, z)
    return TestResult(z=z, statistic=stat, radius=float(run.quantile), reject=stat > run.quantile)


def psd_factor(S: np.ndarray, *, name: str = "matrix") -> np.ndarray:
    """``F`` with ``F F^T = S`` from a floored eigendecomposition."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {S.shape}")
    S = 0.5 * (S + S.T)
    evals, evecs = np.linalg.eigh(S)
    if evals[0] < -1e-6 * max(evals[-1], 0.0):
        raise NotPSD(f"{name} has eigenvalue {evals[0]:.3e} (max {evals[-1]:.3e})")
    return evecs * np.sqrt(np.maximum(evals, 0.0))


def oracle_weights(d: DesignMatrix, M, support, rho: float) -> np.ndarray:
    """Rows ``v_i = (1/tau_i) sum_j c_ij w_j P[:, j]`` for the true support.

    ``support`` holds 0-based indices of the nonzero coefficients.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != d.p:
        raise DimensionMismatch(f"M has {M.shape[1]} columns, design has p={d.p}")
    sel = np.asarray(support, dtype=int)
    c = M[:, sel] @ d.Q[sel, :]
    w = debiased_weights(d.lam, rho)
    tau = tau_from_c(c, w, d.n)
    return ((c * w) @ d.P.T) / tau[:, None]


@dataclass(frozen=True, eq=False)
class GaussianOracle:
    Sigma: np.ndarray
    v: np.ndarray
    draws: int = 20000
    seed: Seed = 0

    def sample(self) -> np.ndarray:
        """``draws`` realizations of ``max_i |v_i . xi|`` with ``xi ~ N(0, Sigma)``.

        Draw ``k`` uses ``stream(seed, k)``.
        """
        v = np.atleast_2d(np.asarray(self.v, dtype=float))
        n = v.shape[1]
        if self.Sigma.shape != (n, n):
            raise DimensionMismatch(f"Sigma has shape {self.Sigma.shape}, weights expect ({n}, {n})")
        A = v @ psd_factor(self.Sigma, name="Sigma")
        seed = child_seed(self.seed)
        out = np.empty(self.draws)
        for start in range(0, self.draws, 1024):
            stop = min(start + 1024, self.draws)
            g = np.column_stack([stream(seed, k).standard_normal(n) for k in range(start, stop)])
            out[start:stop] = np.max(np.abs(A @ g), axis=0)
        return out


def gaussian_H_quantile(oracle: GaussianOracle, alpha: float) -> float:
    if oracle.draws < 1000:
        raise InputError(f"oracle needs >= 1000 draws, got {oracle.draws}")
    return sample_quantile(oracle.sample(), alpha)
