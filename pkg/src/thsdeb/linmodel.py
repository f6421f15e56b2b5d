"""Fixed design matrices, their thin SVD, and CSV matrix I/O."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InputError, NonFinite, RankDeficient

RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """An ``n x p`` design ``X = P diag(lam) Q^T`` with ``p <= n`` and full column rank.

    ``P`` is ``n x p`` with orthonormal columns, ``Q`` is ``p x p`` orthogonal and
    ``lam`` holds the singular values in descending order. Build instances with
    :func:`decompose`; the arrays are marked read-only.
    """

    X: np.ndarray
    P: np.ndarray
    lam: np.ndarray
    Q: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def observation(self, y) -> np.ndarray:
        """Validate ``y`` as a response vector paired with this design."""
        y = np.asarray(y, dtype=float)
        if y.ndim != 1 or y.shape[0] != self.n:
            raise DimensionMismatch(f"y has shape {y.shape}, expected ({self.n},)")
        if not np.all(np.isfinite(y)):
            raise NonFinite("y contains NaN or Inf")
        return y


def decompose(X) -> DesignMatrix:
    """Thin SVD of ``X`` with a deterministic sign convention.

    Each column of ``Q`` is flipped (together with the matching column of ``P``)
    so that its first nonzero entry is positive.
    """
    X = np.array(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"X must be 2-D, got ndim={X.ndim}")
    n, p = X.shape
    if p < 1 or n < p:
        raise DimensionMismatch(f"need n >= p >= 1, got n={n}, p={p}")
    if not np.all(np.isfinite(X)):
        raise NonFinite("X contains NaN or Inf")

    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s[0] == 0.0 or s[-1] / s[0] < RANK_TOL:
        raise RankDeficient(f"X is rank deficient (lambda_p / lambda_1 = {s[-1] / max(s[0], 1e-300):.3e})")
    Q = Vt.T
    # first entry whose magnitude is not negligible decides the sign
    lead = np.argmax(np.abs(Q) > 1e-12 * np.abs(Q).max(axis=0), axis=0)
    signs = np.sign(Q[lead, np.arange(p)])
    signs[signs == 0] = 1.0
    Q = Q * signs
    P = U * signs
    for a in (X, P, s, Q):
        a.setflags(write=False)
    return DesignMatrix(X=X, P=P, lam=s, Q=Q)


def min_singular_value(d: DesignMatrix) -> float:
    return float(d.lam[-1])


def _parse_row(row: list[str], path, lineno: int) -> list[float]:
    try:
        return [float(v) for v in row]
    except ValueError as exc:
        raise InputError(f"{path}: row {lineno}: non-numeric entry ({exc})") from None


def read_matrix_csv(path) -> np.ndarray:
    """Read a comma separated, row-major matrix with an optional header row.

    The first row is treated as a header when any of its fields fails to parse
    as a number. Ragged rows raise :class:`InputError` naming the file and row.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(f.strip() for f in r)]
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror})") from None
    if not rows:
        raise InputError(f"{path}: empty file")
    start = 0
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        start = 1
    data = [_parse_row(r, path, i + 1) for i, r in enumerate(rows) if i >= start]
    if not data:
        raise InputError(f"{path}: no data rows")
    width = len(data[0])
    for i, r in enumerate(data):
        if len(r) != width:
            raise InputError(f"{path}: row {i + start + 1}: expected {width} fields, got {len(r)}")
    out = np.array(data, dtype=float)
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"{path}: contains NaN or Inf")
    return out


def read_vector_csv(path) -> np.ndarray:
    """Read a vector stored either as one column or one row."""
    m = read_matrix_csv(path)
    if m.shape[1] == 1:
        return m[:, 0]
    if m.shape[0] == 1:
        return m[0]
    raise InputError(f"{path}: expected a single row or column, got shape {m.shape}")


def format_float(x: float) -> str:
    return "%.17g" % x


def write_matrix_csv(path, A, header: list[str] | None = None) -> None:
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in A:
            w.writerow([format_float(v) for v in row])
