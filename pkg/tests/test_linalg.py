import numpy as np
import pytest

from phdae import linalg
from phdae.errors import DimensionMismatch, SingularMatrix


def reconstruct(f: linalg.LuFactors) -> np.ndarray:
    """Multiply the factors back together, undoing the row pivots."""
    n = f.n
    lower = np.tril(f.lu, -1) + np.eye(n)
    upper = np.triu(f.lu)
    a = lower @ upper
    for i in reversed(range(n)):
        piv = f.piv[i]
        if piv != i:
            a[[i, piv]] = a[[piv, i]]
    return a


def test_lu_identity():
    f = linalg.lu_factor(np.eye(3))
    assert np.array_equal(np.tril(f.lu, -1), np.zeros((3, 3)))
    assert np.array_equal(np.triu(f.lu), np.eye(3))
    assert np.array_equal(reconstruct(f), np.eye(3))


def test_lu_permutation_case():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    f = linalg.lu_factor(a)
    assert np.array_equal(reconstruct(f), a)


def test_lu_reconstruction_random():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((5, 5)) + 5.0 * np.eye(5)
    f = linalg.lu_factor(a)
    err = np.linalg.norm(reconstruct(f) - a) / np.linalg.norm(a)
    assert err < 1e-12


def test_lu_singular_detection():
    with pytest.raises(SingularMatrix):
        linalg.lu_factor(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SingularMatrix):
        linalg.lu_factor(np.zeros((2, 2)))


def test_lu_factor_shape_errors():
    with pytest.raises(DimensionMismatch):
        linalg.lu_factor(np.ones((2, 3)))
    with pytest.raises(DimensionMismatch):
        linalg.lu_factor(np.ones(4))


def test_lu_solve_identity_and_diagonal():
    f = linalg.lu_factor(np.eye(3))
    b = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(linalg.lu_solve(f, b), b)

    f = linalg.lu_factor(np.diag([2.0, 4.0]))
    assert np.allclose(linalg.lu_solve(f, [2.0, 8.0]), [1.0, 2.0])


def test_lu_solve_scalar():
    f = linalg.lu_factor([[11.0]])
    x = linalg.lu_solve(f, [1.0])
    assert x[0] == pytest.approx(1.0 / 11.0, abs=1e-15)


def test_lu_solve_dimension_mismatch():
    f = linalg.lu_factor(np.eye(3))
    with pytest.raises(DimensionMismatch):
        linalg.lu_solve(f, np.ones(4))


def test_lu_solve_transposed():
    # symmetric matrix: identical to the plain solve
    a = np.array([[2.0, 1.0], [1.0, 3.0]])
    f = linalg.lu_factor(a)
    b = np.array([1.0, 2.0])
    assert np.allclose(linalg.lu_solve_transposed(f, b), linalg.lu_solve(f, b))

    # upper triangular: solve A^T x = b by hand gives (1, -1)
    f = linalg.lu_factor(np.array([[1.0, 2.0], [0.0, 1.0]]))
    assert np.allclose(linalg.lu_solve_transposed(f, [1.0, 1.0]), [1.0, -1.0])

    f = linalg.lu_factor(np.eye(4))
    b = np.arange(4.0)
    assert np.array_equal(linalg.lu_solve_transposed(f, b), b)


def test_lu_solve_residual_property():
    rng = np.random.default_rng(11)
    for _ in range(25):
        n = int(rng.integers(2, 9))
        a = rng.standard_normal((n, n)) + n * np.eye(n)
        if np.linalg.cond(a) > 1e6:
            continue
        b = rng.standard_normal(n)
        x = linalg.lu_solve(linalg.lu_factor(a), b)
        assert np.linalg.norm(a @ x - b) / np.linalg.norm(b) < 1e-9


def test_matmul_identity_and_errors():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 3))
    assert np.allclose(linalg.matmul(a, np.eye(3)), a)
    with pytest.raises(DimensionMismatch):
        linalg.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_norm2_pythagorean():
    assert linalg.norm2([3.0, 4.0]) == pytest.approx(5.0)


def test_transpose_product_rule():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    lhs = linalg.transpose(linalg.matmul(a, b))
    rhs = linalg.matmul(linalg.transpose(b), linalg.transpose(a))
    assert np.allclose(lhs, rhs, rtol=1e-12)


def test_transpose_involution_exact():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((4, 6))
    assert np.array_equal(linalg.transpose(linalg.transpose(a)), a)


def test_add_scale():
    a = np.ones((2, 2))
    assert np.array_equal(linalg.add(a, a), 2 * a)
    assert np.array_equal(linalg.scale(3.0, a), 3 * a)
    with pytest.raises(DimensionMismatch):
        linalg.add(np.ones((2, 2)), np.ones((2, 3)))


def test_matmul_associativity():
    rng = np.random.default_rng(4)
    for _ in range(5):
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((4, 5))
        c = rng.standard_normal((5, 2))
        lhs = linalg.matmul(linalg.matmul(a, b), c)
        rhs = linalg.matmul(a, linalg.matmul(b, c))
        assert np.allclose(lhs, rhs, rtol=1e-12)
