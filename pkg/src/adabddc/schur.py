"""Local stiffness matrices, subdomain Schur complements and edge Schur
complements.

Dirichlet nodes are dropped from every local space, so a subdomain touching
the outer boundary has a nonsingular Schur complement while a floating one
keeps the constants in its kernel.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grid_fem import check_field, element_loads, reference_stiffness


@dataclass(frozen=True)
class SubdomainSystem:
    """Local problem on one subdomain closure.

    ``A`` is ordered as ``[interior, boundary]``; ``S`` lives on the boundary
    nodes (ascending node id, matching ``Subdomain.boundary``).
    """

    index: int
    interior: np.ndarray
    boundary: np.ndarray
    A: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)
    S: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)
    interior_factor: object = field(repr=False, default=None)

    @property
    def n_interior(self):
        return self.interior.size

    def back_substitute(self, u_boundary):
        """Interior values of the discrete harmonic-plus-source extension."""
        ni = self.n_interior
        if ni == 0:
            return np.zeros(0)
        rhs = self.f[:ni] - self.A[:ni, ni:] @ u_boundary
        return kernels.cho_solve(self.interior_factor, rhs)


def local_matrix(grid, sub, rho, f=1.0):
    """Dense local stiffness and load over ``[interior, boundary]`` nodes."""
    order = np.concatenate([sub.interior, sub.boundary])
    loc = np.full(grid.num_nodes, -1, dtype=np.int64)
    loc[order] = np.arange(order.size)
    elems = grid.elements[sub.elements]
    Ke = reference_stiffness(grid)[sub.elements] * rho[sub.elements, None, None]
    Fe = element_loads(grid, f)[sub.elements]
    li = loc[elems]
    keep = li >= 0
    n = order.size
    A = np.zeros((n, n))
    F = np.zeros(n)
    for a in range(3):
        np.add.at(F, li[keep[:, a], a], Fe[keep[:, a], a])
        for b in range(3):
            m = keep[:, a] & keep[:, b]
            np.add.at(A, (li[m, a], li[m, b]), Ke[m, a, b])
    return A, F


def subdomain_schur(A, n_interior):
    """``S = A_GG - A_GI A_II^{-1} A_IG`` for ``A`` ordered [interior, boundary]."""
    ni = n_interior
    n = A.shape[0]
    return kernels.schur_complement(A, np.arange(ni, n), np.arange(ni))


def interface_rhs(A, f, n_interior):
    """``g = f_G - A_GI A_II^{-1} f_I``."""
    ni = n_interior
    if ni == 0:
        return np.asarray(f, dtype=float).copy()
    return f[ni:] - A[ni:, :ni] @ kernels.solve_spd(A[:ni, :ni], f[:ni])


def build_subdomain(grid, sub, rho, f=1.0):
    rho = check_field(grid, rho)
    A, F = local_matrix(grid, sub, rho, f)
    ni = sub.interior.size
    fac = kernels.cholesky(A[:ni, :ni]) if ni else None
    if ni:
        A_gi = A[ni:, :ni]
        X = kernels.cho_solve(fac, np.column_stack([A_gi.T, F[:ni]]))
        S = A[ni:, ni:] - A_gi @ X[:, :-1]
        S = 0.5 * (S + S.T)
        g = F[ni:] - A_gi @ X[:, -1]
    else:
        S = 0.5 * (A + A.T)
        g = F.copy()
    return SubdomainSystem(sub.index, sub.interior, sub.boundary, A, F, S, g, fac)


def build_subdomains(grid, partition, rho, f=1.0):
    return [build_subdomain(grid, sub, rho, f) for sub in partition.subdomains]


def edge_schur(S, edge_local):
    """Schur complement of a local boundary operator onto the nodes of one edge.

    Eliminating from ``S`` rather than the full local matrix gives the same
    result because Schur complements compose.
    """
    edge_local = np.asarray(edge_local, dtype=np.int64)
    rest = np.setdiff1d(np.arange(S.shape[0]), edge_local)
    try:
        return kernels.schur_complement(S, edge_local, rest)
    except kernels.KernelError as exc:
        raise kernels.KernelError(
            "complement of edge block is singular; floating subdomain needs regularization"
        ) from exc
