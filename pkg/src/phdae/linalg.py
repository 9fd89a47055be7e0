"""Dense matrix kernels used by every other module.

Matrices are float64 numpy arrays in row-major (C) order. Factorizations
are LU with partial pivoting; a pivot whose magnitude falls below
PIVOT_RTOL times the largest absolute entry of the input is treated as
singular, which distinguishes a structurally singular step Jacobian from
round-off.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, SingularMatrix

PIVOT_RTOL = 1e-12


def as_matrix(a) -> np.ndarray:
    """Coerce to a 2-D float64 C-ordered array."""
    m = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def as_vector(b) -> np.ndarray:
    v = np.ascontiguousarray(np.asarray(b, dtype=np.float64))
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got ndim={v.ndim}")
    return v


@dataclass(frozen=True)
class LuFactors:
    """Combined L\\U storage plus the pivot permutation of lu_factor."""

    lu: np.ndarray
    piv: np.ndarray

    @property
    def n(self) -> int:
        return self.lu.shape[0]


def lu_factor(a) -> LuFactors:
    """Partial-pivot LU factorization of a square matrix.

    Raises SingularMatrix when any pivot magnitude is below
    PIVOT_RTOL * max|a_ij|.
    """
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"lu_factor needs a square matrix, got {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("lu_factor requires finite entries")
    scale = np.abs(m).max() if m.size else 0.0
    if scale == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        # scipy warns on exactly-zero pivots; the threshold check below
        # covers that case uniformly.
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(m, check_finite=False)
    if np.abs(np.diag(lu)).min() < PIVOT_RTOL * scale:
        raise SingularMatrix(
            f"pivot below {PIVOT_RTOL:g} * max-row-norm ({scale:g})"
        )
    return LuFactors(lu=lu, piv=piv)


def _solve(f: LuFactors, b, trans: int) -> np.ndarray:
    rhs = np.asarray(b, dtype=np.float64)
    if rhs.ndim not in (1, 2) or rhs.shape[0] != f.n:
        raise DimensionMismatch(
            f"rhs shape {rhs.shape} incompatible with {f.n}x{f.n} factors"
        )
    x = scipy.linalg.lu_solve((f.lu, f.piv), rhs, trans=trans, check_finite=False)
    if not np.isfinite(x).all():
        raise SingularMatrix("solve produced non-finite values")
    return x


def lu_solve(f: LuFactors, b) -> np.ndarray:
    """Solve A x = b for one or many right-hand-side columns."""
    return _solve(f, b, trans=0)


def lu_solve_transposed(f: LuFactors, b) -> np.ndarray:
    """Solve A^T x = b using the factors of A."""
    return _solve(f, b, trans=1)


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def add(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"cannot add {a.shape} and {b.shape}")
    return a + b


def scale(alpha: float, a) -> np.ndarray:
    return float(alpha) * np.asarray(a, dtype=np.float64)


def transpose(a) -> np.ndarray:
    return as_matrix(a).T.copy()


def norm2(a) -> float:
    """Euclidean norm of a vector, Frobenius norm of a matrix."""
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64)))
