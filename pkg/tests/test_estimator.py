import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bias_formula, debiased_dense, ridge_dense, tau_literal
from thsdeb.errors import DimensionMismatch, InputError
from thsdeb.estimator import (
    RidgeConfig,
    combine,
    debias,
    hard_threshold,
    ridge_star,
    threshold_fit,
)
from thsdeb.linmodel import DesignMatrix, decompose


def _instance(seed, n=20, p=5):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = rng.standard_normal(p)
    return X, beta, rng


def test_identity_examples():
    d = decompose(np.eye(2))
    y = np.array([1.0, 0.0])
    np.testing.assert_allclose(ridge_star(d, y, 0.0), [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(ridge_star(d, y, 1.0), [0.5, 0.0], atol=1e-15)
    np.testing.assert_allclose(debias(d, ridge_star(d, y, 1.0), 1.0), [0.75, 0.0], atol=1e-15)


def test_debias_noop_at_zero_rho():
    X, beta, rng = _instance(1)
    d = decompose(X)
    bs = ridge_star(d, X @ beta + rng.standard_normal(20), 0.0)
    assert np.array_equal(debias(d, bs, 0.0), bs)


@pytest.mark.parametrize("rho", [0.01, 0.5, 3.0, 40.0])
def test_ridge_star_matches_dense_solve(rho):
    X, beta, rng = _instance(2, n=6, p=2)
    y = X @ beta + rng.standard_normal(6)
    np.testing.assert_allclose(ridge_star(decompose(X), y, rho), ridge_dense(X, y, rho), atol=1e-10, rtol=0)


@pytest.mark.parametrize("rho", [0.1, 1.0, 10.0])
def test_debiased_matches_dense(rho):
    X, beta, rng = _instance(3, n=30, p=7)
    y = X @ beta + rng.standard_normal(30)
    d = decompose(X)
    np.testing.assert_allclose(debias(d, ridge_star(d, y, rho), rho), debiased_dense(X, y, rho), atol=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_exact_bias_identity(seed):
    X, beta, _ = _instance(seed)
    d = decompose(X)
    for rho in (0.1, 1.0, 10.0, 100.0):
        bt = debias(d, ridge_star(d, X @ beta, rho), rho)
        assert np.max(np.abs((bt - beta) - bias_formula(X, beta, rho))) <= 1e-10


def test_ols_limit():
    for seed in range(5):
        X, beta, rng = _instance(seed, n=40, p=8)
        y = X @ beta + rng.standard_normal(40)
        d = decompose(X)
        ols = d.Q @ ((d.P.T @ y) / d.lam)
        tol = 1e-6 * np.max(np.abs(y))
        assert np.max(np.abs(ridge_star(d, y, 1e-8) - ols)) <= tol
        assert np.max(np.abs(debias(d, ridge_star(d, y, 1e-8), 1e-8) - ols)) <= tol


def test_hard_threshold_example():
    sel, bh = hard_threshold(np.array([0.5, -0.2, 0.7]), 0.3)
    np.testing.assert_array_equal(sel, [0, 2])
    np.testing.assert_array_equal(bh, [0.5, 0.0, 0.7])


def test_threshold_strict_at_boundary():
    sel, bh = hard_threshold(np.array([0.3, -0.3, 0.30000000000000004]), 0.3)
    np.testing.assert_array_equal(sel, [2])


def test_zero_threshold_keeps_nonzero():
    sel, _ = hard_threshold(np.array([0.0, 1e-300, -2.0]), 0.0)
    np.testing.assert_array_equal(sel, [1, 2])


def test_fit_invariants():
    X, beta, rng = _instance(4, n=50, p=10)
    y = X @ beta + rng.standard_normal(50)
    fit = threshold_fit(decompose(X), y, RidgeConfig(2.0, 0.4))
    assert np.array_equal(fit.selected, np.flatnonzero(np.abs(fit.beta_tilde) > 0.4))
    assert np.array_equal(fit.beta_hat[fit.mask], fit.beta_tilde[fit.mask])
    assert np.all(fit.beta_hat[~fit.mask] == 0)
    assert np.array_equal(fit.residuals, y - X @ fit.beta_hat)


def test_threshold_ridge_baseline_uses_plain_ridge():
    X, beta, rng = _instance(5, n=50, p=10)
    y = X @ beta + rng.standard_normal(50)
    d = decompose(X)
    fit = threshold_fit(d, y, RidgeConfig(5.0, 0.2), debiased=False)
    assert np.array_equal(fit.beta_tilde, ridge_star(d, y, 5.0))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_threshold_monotone(seed, b1, b2):
    lo, hi = sorted((b1, b2))
    X, beta, rng = _instance(seed, n=25, p=6)
    d = decompose(X)
    y = X @ beta + rng.standard_normal(25)
    big = set(threshold_fit(d, y, RidgeConfig(1.0, lo)).selected)
    small = set(threshold_fit(d, y, RidgeConfig(1.0, hi)).selected)
    assert small <= big


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.booleans(), min_size=5, max_size=5), st.floats(0.01, 50.0))
def test_sign_convention_invariance(seed, flips, rho):
    X, beta, rng = _instance(seed)
    y = X @ beta + rng.standard_normal(20)
    M = rng.standard_normal((3, 5))
    d = decompose(X)
    s = np.where(flips, -1.0, 1.0)
    d2 = DesignMatrix(X=d.X, P=d.P * s, lam=d.lam, Q=d.Q * s)
    cfg = RidgeConfig(rho, 0.3)
    f1, f2 = threshold_fit(d, y, cfg), threshold_fit(d2, y, cfg)
    for a, b in ((f1.beta_star, f2.beta_star), (f1.beta_tilde, f2.beta_tilde)):
        np.testing.assert_allclose(a, b, atol=1e-12)
    if np.array_equal(f1.selected, f2.selected):
        e1, e2 = combine(f1, d, M, rho), combine(f2, d2, M, rho)
        np.testing.assert_allclose(e1.tau_hat, e2.tau_hat, atol=1e-12)
        np.testing.assert_allclose(e1.gamma_hat, e2.gamma_hat, atol=1e-12)


@pytest.mark.parametrize("rho", [10.0, 100.0, 1000.0])
def test_debias_dominance_noiseless(rho):
    for seed in range(5):
        X, beta, _ = _instance(seed, n=30, p=6)
        d = decompose(X)
        bs = ridge_star(d, X @ beta, rho)
        assert np.linalg.norm(debias(d, bs, rho) - beta) <= np.linalg.norm(bs - beta)


def test_combine_empty_selection():
    X, beta, _ = _instance(6)
    d = decompose(X)
    fit = threshold_fit(d, X @ beta, RidgeConfig(1.0, 1e6))
    est = combine(fit, d, np.ones((2, 5)), 1.0)
    assert est.empty_selection
    np.testing.assert_array_equal(est.gamma_hat, [0.0, 0.0])
    np.testing.assert_allclose(est.tau_hat, [1 / np.sqrt(20)] * 2)
    assert not est.c_hat.any()


def test_combine_identity_design():
    n = 4
    d = decompose(np.eye(n))
    fit = threshold_fit(d, np.array([2.0, 0.1, -3.0, 0.0]), RidgeConfig(0.0, 0.5))
    est = combine(fit, d, np.eye(n), 0.0)
    expect = np.where(fit.mask, np.sqrt(1 / n + 1), np.sqrt(1 / n))
    np.testing.assert_allclose(est.tau_hat, expect, rtol=1e-14)


@pytest.mark.parametrize("rho", [0.3, 2.0])
def test_tau_matches_literal_formula(rho):
    X, beta, rng = _instance(7, n=10, p=4)
    y = X @ beta + 0.2 * rng.standard_normal(10)
    M = rng.standard_normal((2, 4))
    d = decompose(X)
    fit = threshold_fit(d, y, RidgeConfig(rho, 0.2))
    est = combine(fit, d, M, rho)
    want = tau_literal(M, d.Q, d.lam, list(fit.selected), rho, 10)
    np.testing.assert_allclose(est.tau_hat, want, atol=1e-12, rtol=0)
    assert np.all(est.tau_hat >= 1 / np.sqrt(10))
    np.testing.assert_array_equal(est.gamma_hat, M @ fit.beta_hat)


def test_combine_dimension_mismatch():
    d = decompose(np.eye(3))
    fit = threshold_fit(d, np.ones(3), RidgeConfig(1.0, 0.0))
    with pytest.raises(DimensionMismatch):
        combine(fit, d, np.ones((2, 4)), 1.0)


@pytest.mark.parametrize("rho,b", [(-1.0, 0.0), (1.0, -0.1), (np.inf, 0.0), (1.0, np.nan)])
def test_config_validation(rho, b):
    with pytest.raises(InputError):
        RidgeConfig(rho, b)
