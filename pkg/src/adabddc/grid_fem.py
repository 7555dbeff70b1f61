"""Structured triangulation of the unit square and P1 assembly.

Nodes are numbered ``iy * (n + 1) + ix``.  Every square cell ``(cx, cy)`` is
split along its lower-left to upper-right diagonal into two counter-clockwise
triangles; the lower one has index ``2 * (cy * n + cx)`` and the upper one the
next index.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


@dataclass(frozen=True)
class StructuredGrid:
    n: int
    coords: np.ndarray = field(repr=False)
    elements: np.ndarray = field(repr=False)
    centroids: np.ndarray = field(repr=False)

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def num_nodes(self):
        return self.coords.shape[0]

    @property
    def num_elements(self):
        return self.elements.shape[0]

    def node(self, ix, iy):
        return iy * (self.n + 1) + ix

    def boundary_mask(self):
        ix = np.arange(self.num_nodes) % (self.n + 1)
        iy = np.arange(self.num_nodes) // (self.n + 1)
        return (ix == 0) | (iy == 0) | (ix == self.n) | (iy == self.n)


@dataclass(frozen=True)
class AssembledSystem:
    """Global stiffness/load with homogeneous Dirichlet nodes eliminated."""

    full_stiffness: sp.csr_matrix
    full_load: np.ndarray
    free: np.ndarray
    stiffness: sp.csr_matrix
    load: np.ndarray

    @property
    def dirichlet_mask(self):
        mask = np.ones(self.full_load.size, dtype=bool)
        mask[self.free] = False
        return mask


def build_grid(n=32):
    if n < 1:
        raise ValueError("grid needs at least one cell per side")
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t)
    coords = np.column_stack([X.ravel(), Y.ravel()])

    cy, cx = np.divmod(np.arange(n * n), n)
    ll = cy * (n + 1) + cx
    lr = ll + 1
    ul = ll + n + 1
    ur = ul + 1
    elements = np.empty((2 * n * n, 3), dtype=np.int64)
    elements[0::2] = np.column_stack([ll, lr, ur])
    elements[1::2] = np.column_stack([ll, ur, ul])
    centroids = coords[elements].mean(axis=1)
    return StructuredGrid(n, coords, elements, centroids)


def _p1_gradients(xy):
    """Gradients of the three barycentric basis functions and the signed area."""
    d1 = xy[1] - xy[0]
    d2 = xy[2] - xy[0]
    det = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(det) < 1e-14:
        raise ValueError("degenerate triangle")
    # rows of inv(J)^T give grad(lambda_1), grad(lambda_2)
    inv_t = np.array([[d2[1], -d1[1]], [-d2[0], d1[0]]]) / det
    g12 = inv_t.T
    grads = np.vstack([-g12.sum(axis=0), g12])
    return grads, 0.5 * det


def element_stiffness(grid, e, rho_e):
    if not rho_e > 0.0:
        raise ValueError(f"coefficient must be positive, got {rho_e}")
    grads, area = _p1_gradients(grid.coords[grid.elements[e]])
    return rho_e * area * (grads @ grads.T)


def reference_stiffness(grid):
    """Unit-coefficient element matrices, shape (num_elements, 3, 3).

    All triangles of the structured grid fall into two congruent shapes, so
    only two matrices are computed and broadcast.
    """
    K0 = element_stiffness(grid, 0, 1.0)
    K1 = element_stiffness(grid, 1, 1.0) if grid.num_elements > 1 else K0
    out = np.empty((grid.num_elements, 3, 3))
    out[0::2] = K0
    out[1::2] = K1
    return out


def element_loads(grid, f):
    """One-point (centroid) load contributions, shape (num_elements, 3)."""
    area = 0.5 * grid.h**2
    fc = _evaluate_source(f, grid.centroids)
    return np.repeat((fc * area / 3.0)[:, None], 3, axis=1)


def _evaluate_source(f, points):
    if callable(f):
        return np.asarray(f(points[:, 0], points[:, 1]), dtype=float) * np.ones(len(points))
    return np.full(len(points), float(f))


def check_field(grid, rho):
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (grid.num_elements,):
        raise ValueError(f"coefficient field has {rho.size} values, grid has {grid.num_elements} elements")
    if not np.all(rho > 0) or not np.all(np.isfinite(rho)):
        raise ValueError("coefficient field must be finite and positive")
    return rho


def assemble(grid, rho, f=1.0):
    rho = check_field(grid, rho)
    Ke = reference_stiffness(grid) * rho[:, None, None]
    rows = np.repeat(grid.elements, 3, axis=1).ravel()
    cols = np.tile(grid.elements, (1, 3)).ravel()
    N = grid.num_nodes
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(N, N)).tocsr()
    F = np.zeros(N)
    np.add.at(F, grid.elements.ravel(), element_loads(grid, f).ravel())
    free = np.flatnonzero(~grid.boundary_mask())
    Kf = K[free][:, free].tocsr()
    return AssembledSystem(K, F, free, Kf, F[free].copy())


def direct_solve(system):
    """Nodal solution of the assembled problem (zero at Dirichlet nodes)."""
    u = np.zeros(system.full_load.size)
    if system.free.size:
        x = spla.splu(system.stiffness.tocsc()).solve(system.load)
        if not np.all(np.isfinite(x)):
            raise np.linalg.LinAlgError("singular system")
        u[system.free] = x
    return u
