import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from thsdeb.errors import DimensionMismatch, InputError, NonFinite, RankDeficient
from thsdeb.linmodel import decompose, min_singular_value, read_matrix_csv, read_vector_csv, write_matrix_csv


def test_identity_design():
    d = decompose(np.eye(2))
    np.testing.assert_array_equal(d.lam, [1.0, 1.0])
    np.testing.assert_allclose(np.abs(d.P), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(d.Q, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(d.P, np.eye(2), atol=1e-15)


def test_diagonal_design():
    d = decompose(np.diag([3.0, 2.0]))
    np.testing.assert_allclose(d.lam, [3.0, 2.0])
    assert min_singular_value(d) == pytest.approx(2.0)
    assert min_singular_value(decompose(np.eye(5))) == pytest.approx(1.0)


def test_random_reconstruction():
    X = np.random.default_rng(0).standard_normal((8, 3))
    d = decompose(X)
    assert np.max(np.abs(d.P * d.lam @ d.Q.T - X)) <= 1e-8


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 6).flatmap(
        lambda p: st.integers(p, p + 6).flatmap(
            lambda n: arrays(np.float64, (n, p), elements=st.floats(-5, 5, allow_nan=False))
        )
    )
)
def test_svd_invariants(X):
    s = np.linalg.svd(X, compute_uv=False)
    ratio = s[-1] / s[0] if s[0] > 0 else 0.0
    if ratio < 1e-13:
        with pytest.raises(RankDeficient):
            decompose(X)
        return
    if ratio < 1e-11:  # too close to the rank tolerance to call either way
        return
    d = decompose(X)
    p = X.shape[1]
    assert np.max(np.abs(d.P.T @ d.P - np.eye(p))) <= 1e-10
    assert np.max(np.abs(d.Q.T @ d.Q - np.eye(p))) <= 1e-10
    assert np.max(np.abs(d.P * d.lam @ d.Q.T - X)) <= 1e-8 * np.max(np.abs(X))
    assert np.all(np.diff(d.lam) <= 0) and d.lam[-1] > 0
    for col in d.Q.T:
        first = col[np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())[0]]
        assert first > 0


def test_decompose_deterministic():
    X = np.random.default_rng(3).standard_normal((30, 6))
    a, b = decompose(X), decompose(X.copy())
    for f in ("P", "lam", "Q"):
        assert getattr(a, f).tobytes() == getattr(b, f).tobytes()


def test_decompose_errors():
    with pytest.raises(RankDeficient):
        decompose(np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]))
    with pytest.raises(NonFinite):
        decompose(np.array([[1.0, np.nan], [0.0, 1.0]]))
    with pytest.raises(DimensionMismatch):
        decompose(np.ones((2, 3)))


def test_arrays_read_only():
    d = decompose(np.eye(3))
    with pytest.raises(ValueError):
        d.X[0, 0] = 5.0


def test_observation_length_checked():
    d = decompose(np.eye(3))
    with pytest.raises(DimensionMismatch):
        d.observation(np.ones(4))


def test_marchenko_pastur_edge():
    # smallest singular value over sqrt(n) approaches 1 - sqrt(p/n)
    hits = 0
    for seed in range(10):
        X = np.random.default_rng(seed).standard_normal((2000, 1000))
        r = min_singular_value(decompose(X)) / np.sqrt(2000)
        hits += 0.20 <= r <= 0.38
    assert hits >= 10


def test_csv_round_trip(tmp_path):
    A = np.random.default_rng(1).standard_normal((4, 3)) * 1e5
    path = tmp_path / "a.csv"
    write_matrix_csv(path, A, header=["a", "b", "c"])
    B = read_matrix_csv(path)
    assert B.tobytes() == A.tobytes()


def test_csv_vector_row_or_column(tmp_path):
    (tmp_path / "r.csv").write_text("1,2,3\n")
    (tmp_path / "c.csv").write_text("y\n1\n2\n3\n")
    np.testing.assert_array_equal(read_vector_csv(tmp_path / "r.csv"), [1, 2, 3])
    np.testing.assert_array_equal(read_vector_csv(tmp_path / "c.csv"), [1, 2, 3])


def test_csv_ragged_row_names_file_and_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3,4\n5\n")
    with pytest.raises(InputError, match=r"bad\.csv: row 3"):
        read_matrix_csv(path)


def test_csv_non_numeric_and_missing(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n3,oops\n")
    with pytest.raises(InputError, match="row 3"):
        read_matrix_csv(path)
    with pytest.raises(InputError, match="cannot read"):
        read_matrix_csv(tmp_path / "missing.csv")
