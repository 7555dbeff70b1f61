"""Dense symmetric linear-algebra primitives.

Every matrix handled by the solver modules is small (at most a few hundred
rows), so everything here is dense and backed by LAPACK through numpy/scipy.
"""

from typing import NamedTuple

import numpy as np
import scipy.linalg as sla


class KernelError(np.linalg.LinAlgError):
    """Raised when a dense kernel cannot produce a trustworthy result."""


class EigenDecomposition(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray


def as_sym(A, tol=1e-12):
    """Return `A` as a float array after checking and enforcing symmetry.

    The asymmetry allowed is ``tol * max|A|``; the returned matrix is the
    exact symmetric part.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = np.abs(A).max() if A.size else 0.0
    asym = np.abs(A - A.T).max() if A.size else 0.0
    if asym > tol * max(scale, np.finfo(float).tiny):
        raise ValueError(f"matrix not symmetric: max asymmetry {asym:.3e} vs scale {scale:.3e}")
    return 0.5 * (A + A.T)


def sym_eig(A):
    """Full spectral decomposition of a symmetric matrix, eigenvalues ascending."""
    A = as_sym(A)
    try:
        w, Q = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise KernelError(
            f"symmetric eigensolver did not converge (n={A.shape[0]}, "
            f"max|A|={np.abs(A).max():.3e}, fro={np.linalg.norm(A):.3e})"
        ) from exc
    return EigenDecomposition(w, Q)


def pseudo_inverse(A, rel_tol=1e-12):
    """Moore-Penrose inverse of a symmetric PSD matrix by spectral truncation.

    Eigenvalues larger than ``rel_tol * lambda_max`` are inverted, the rest
    (including small negative round-off) are dropped.
    """
    w, Q = sym_eig(A)
    if w.size == 0:
        return np.zeros_like(A, dtype=float)
    lam_max = w.max()
    if lam_max <= 0.0:
        return np.zeros((w.size, w.size))
    keep = w > rel_tol * lam_max
    Qk = Q[:, keep]
    return (Qk / w[keep]) @ Qk.T


def gen_sym_eig(A, B, rel_tol=1e-12):
    """Solve ``A v = lam B v`` on the numerical range of a PSD matrix `B`.

    `B` is diagonalised as ``Q diag(mu) Q^T``; directions with
    ``mu <= rel_tol * mu_max`` are deflated and the ordinary problem
    ``mu^{-1/2} Q^T A Q mu^{-1/2}`` is solved on what remains.  Eigenvalues are
    returned in descending order and the eigenvectors are B-orthonormal.
    """
    A = as_sym(A)
    mu, Q = sym_eig(B)
    if mu.size == 0 or mu.max() <= 0.0 or not np.isfinite(mu.max()):
        raise KernelError("degenerate right-hand matrix")
    keep = mu > rel_tol * mu.max()
    W = Q[:, keep] / np.sqrt(mu[keep])
    lam, Y = sym_eig(W.T @ A @ W)
    order = np.argsort(-lam, kind="stable")
    return EigenDecomposition(lam[order], W @ Y[:, order])


def cholesky(A):
    """Cholesky factor usable with :func:`cho_solve`; raises on non-SPD input."""
    A = np.asarray(A, dtype=float)
    try:
        return sla.cho_factor(A, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise KernelError("matrix not SPD") from exc


def cho_solve(factor, b):
    return sla.cho_solve(factor, b, check_finite=False)


def solve_spd(A, b):
    """Solve ``A x = b`` for symmetric positive definite `A`."""
    A = as_sym(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] == 0:
        return np.zeros_like(b)
    return cho_solve(cholesky(A), b)


def schur_complement(A, keep, eliminate):
    """Schur complement of `A` onto index set `keep` after eliminating `eliminate`.

    Returns ``A_kk - A_ke A_ee^{-1} A_ek``.  `A_ee` must be SPD.
    """
    keep = np.asarray(keep, dtype=int)
    eliminate = np.asarray(eliminate, dtype=int)
    A_kk = A[np.ix_(keep, keep)]
    if eliminate.size == 0:
        return 0.5 * (A_kk + A_kk.T)
    A_ke = A[np.ix_(keep, eliminate)]
    fac = cholesky(A[np.ix_(eliminate, eliminate)])
    S = A_kk - A_ke @ cho_solve(fac, A_ke.T)
    return 0.5 * (S + S.T)
