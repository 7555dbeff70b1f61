import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adabddc import kernels
from conftest import random_psd, random_spd


def test_sym_eig_identity():
    w, Q = kernels.sym_eig(np.eye(3))
    np.testing.assert_allclose(w, [1, 1, 1])


def test_sym_eig_diagonal():
    w, Q = kernels.sym_eig(np.diag([2.0, -1.0]))
    np.testing.assert_allclose(w, [-1, 2])
    np.testing.assert_allclose(np.abs(Q), np.array([[0, 1], [1, 0]]), atol=1e-15)


def test_sym_eig_two_by_two():
    # characteristic polynomial (2 - t)^2 - 1 = 0 -> t = 1, 3
    w, Q = kernels.sym_eig([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(w, [1, 3], atol=1e-14)
    s = 1 / np.sqrt(2)
    assert abs(abs(Q[:, 0] @ [s, -s]) - 1) < 1e-14
    assert abs(abs(Q[:, 1] @ [s, s]) - 1) < 1e-14


def test_eigendecomposition_invariants(rng):
    X = rng.standard_normal((10, 10))
    A = X + X.T
    w, Q = kernels.sym_eig(A)
    assert np.all(np.diff(w) >= 0)
    assert np.abs(Q.T @ Q - np.eye(10)).max() <= 1e-10
    assert np.abs(Q @ np.diag(w) @ Q.T - A).max() <= 1e-9 * np.abs(A).max()
    assert abs(np.trace(A) - w.sum()) <= 1e-9 * max(1.0, abs(np.trace(A)))


def test_asymmetric_input_rejected():
    with pytest.raises(ValueError, match="not symmetric"):
        kernels.sym_eig([[1.0, 2.0], [0.0, 1.0]])


def test_pseudo_inverse_examples():
    np.testing.assert_allclose(kernels.pseudo_inverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))
    np.testing.assert_allclose(kernels.pseudo_inverse(np.eye(4)), np.eye(4), atol=1e-15)
    v = np.array([2.0, 0.0, 0.0])
    v = np.array([1.2, -1.6, 0.0])  # |v| = 2
    P = np.outer(v, v)
    np.testing.assert_allclose(kernels.pseudo_inverse(P), P / 16.0, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 8), seed=st.integers(0, 2**31 - 1), data=st.data())
def test_pseudo_inverse_moore_penrose(n, seed, data):
    rank = data.draw(st.integers(1, n))
    A = random_psd(np.random.default_rng(seed), n, rank)
    P = kernels.pseudo_inverse(A)
    assert np.abs(A @ P @ A - A).max() <= 1e-8 * np.abs(A).max()
    assert np.abs(P @ A @ P - P).max() <= 1e-8 * max(np.abs(P).max(), 1e-300)


def test_gen_sym_eig_examples():
    lam, _ = kernels.gen_sym_eig([[2.0]], [[1.0]])
    np.testing.assert_allclose(lam, [2.0])
    lam, _ = kernels.gen_sym_eig(np.eye(3), np.eye(3))
    np.testing.assert_allclose(lam, [1, 1, 1])
    lam, V = kernels.gen_sym_eig(np.diag([4.0, 1.0]), np.diag([2.0, 1.0]))
    np.testing.assert_allclose(lam, [2.0, 1.0])
    np.testing.assert_allclose(V.T @ np.diag([2.0, 1.0]) @ V, np.eye(2), atol=1e-14)


def test_gen_sym_eig_matches_sym_eig_for_identity_rhs(rng):
    A = random_spd(rng, 7)
    lam, _ = kernels.gen_sym_eig(A, np.eye(7))
    w, _ = kernels.sym_eig(A)
    np.testing.assert_allclose(np.sort(lam), w, rtol=1e-9)


def test_gen_sym_eig_singular_rhs(rng):
    A = random_spd(rng, 5)
    B = random_psd(rng, 5, 3)
    lam, V = kernels.gen_sym_eig(A, B)
    assert lam.size == 3
    assert np.all(np.diff(lam) <= 0)
    np.testing.assert_allclose(V.T @ B @ V, np.eye(3), atol=1e-9)
    # B-range pairs satisfy the projected equation
    _, Q = kernels.sym_eig(B)
    Qr = Q[:, -3:]
    np.testing.assert_allclose(Qr.T @ (A @ V), Qr.T @ (B @ V) * lam, atol=1e-8 * np.abs(A).max())


def test_gen_sym_eig_degenerate_rhs():
    with pytest.raises(kernels.KernelError, match="degenerate right-hand matrix"):
        kernels.gen_sym_eig(np.eye(2), np.zeros((2, 2)))


def test_solve_spd_examples():
    b = np.array([3.0, -1.0, 2.0])
    np.testing.assert_allclose(kernels.solve_spd(np.eye(3), b), b)
    np.testing.assert_allclose(kernels.solve_spd(np.diag([2.0, 4.0]), [2.0, 4.0]), [1.0, 1.0])
    np.testing.assert_allclose(kernels.solve_spd([[2.0, 1.0], [1.0, 2.0]], [3.0, 3.0]), [1.0, 1.0])


def test_solve_spd_residual(rng):
    A = random_spd(rng, 30)
    b = rng.standard_normal(30)
    x = kernels.solve_spd(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_solve_spd_rejects_indefinite():
    with pytest.raises(kernels.KernelError, match="not SPD"):
        kernels.solve_spd(np.diag([1.0, -1.0]), [1.0, 1.0])
