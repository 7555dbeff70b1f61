"""BDDC preconditioner with adaptive primal constraints, PCG on the interface
problem and extreme-eigenvalue estimates of the preconditioned operator.

Adaptive constraints enter through a per-edge orthogonal change of basis whose
leading coordinates are the (orthonormalized) constraint values; those
coordinates are then treated as primal unknowns exactly like subdomain
vertices.  The partially coupled solve is done by block elimination:
independent dual solves per subdomain plus one coarse solve.
"""

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .adaptive_coarse import deluxe_scaling
from .decomp import build_restrictions, classify_interface, partition_uniform
from .grid_fem import assemble, direct_solve
from .schur import build_subdomains

log = logging.getLogger(__name__)

GRAM_COND_MAX = 1e12


class BddcError(RuntimeError):
    pass


def change_of_basis(constraints, m=None):
    """Orthogonal edge transform ``T`` (rows are the new basis).

    The first rows span the constraint vectors (modified Gram-Schmidt, in the
    given order); the remaining rows complete an orthonormal basis, built from
    the unit vectors.  Constraints that are numerically dependent on earlier
    ones are dropped.  Returns ``(T, kept, dropped)``.
    """
    C = np.asarray(constraints, dtype=float)
    if m is None:
        m = C.shape[1]
    C = C.reshape(-1, m)
    basis, kept, dropped = [], [], []
    drop_tol = 1.0 / math.sqrt(GRAM_COND_MAX)
    for a, c in enumerate(C):
        nrm0 = np.linalg.norm(c)
        v = c.copy()
        for q in basis:
            v -= (q @ v) * q
        nrm = np.linalg.norm(v)
        if nrm0 == 0.0 or nrm <= drop_tol * nrm0:
            log.warning("dropping dependent edge constraint %d", a)
            dropped.append(a)
            continue
        basis.append(v / nrm)
        kept.append(a)
    k = len(basis)
    for e in np.eye(m):
        if len(basis) == m:
            break
        v = e.copy()
        for _ in range(2):
            for q in basis:
                v -= (q @ v) * q
        nrm = np.linalg.norm(v)
        if nrm > 1e-8:
            basis.append(v / nrm)
    T = np.array(basis).reshape(m, m)
    return T, k, dropped


@dataclass
class PcgReport:
    iterations: int
    converged: bool
    residuals: list = field(default_factory=list)
    lambda_min: float = float("nan")
    lambda_max: float = float("nan")

    def to_dict(self):
        return asdict(self)


class BddcPreconditioner:
    """``M^{-1} = R~^T D~ S~^{-1} D~^T R~`` for a fixed set of edge constraints.

    Parameters
    ----------
    subs : list of SubdomainSystem
    spaces : DofSpaces
        Only the partition and interface classes are used; the primal layout
        is rebuilt from the constraints that survive the change of basis.
    constraints : list of (k, |F|) arrays, one per edge, or None
    scaling : {"deluxe", "multiplicity"}
    """

    def __init__(self, subs, spaces, constraints=None, scaling="deluxe"):
        partition, classes = spaces.partition, spaces.classes
        edges = classes.edges
        if constraints is None:
            constraints = [np.zeros((0, e.nodes.size)) for e in edges]
        self.transforms = []
        self.dropped = {}
        counts = []
        for e, (edge, C) in enumerate(zip(edges, constraints)):
            T, k, dropped = change_of_basis(np.reshape(C, (-1, edge.nodes.size)), edge.nodes.size)
            if dropped:
                self.dropped[e] = dropped
            self.transforms.append(T)
            counts.append(k)
        self.spaces = build_restrictions(partition, classes, counts)
        self.scaling = scaling
        self.n = partition.interface.size
        self._setup(subs)

    def _local_scaling_and_basis(self, subs, i):
        sp = self.spaces
        ld = sp.local[i]
        n_i = ld.gamma.size
        D = np.zeros((n_i, n_i))
        B = np.eye(n_i)
        mult = {int(v.node): len(v.subdomains) for v in sp.classes.vertices}
        boundary = subs[i].boundary
        for a, node in enumerate(boundary):
            if int(node) in mult:
                D[a, a] = 1.0 / mult[int(node)]
        for e, edge in enumerate(sp.classes.edges):
            if i not in edge.subdomains:
                continue
            loc = np.searchsorted(boundary, edge.nodes)
            if self.scaling == "deluxe":
                j = edge.subdomains[1] if edge.subdomains[0] == i else edge.subdomains[0]
                S_i = subs[i].S[np.ix_(loc, loc)]
                loc_j = np.searchsorted(subs[j].boundary, edge.nodes)
                S_j = subs[j].S[np.ix_(loc_j, loc_j)]
                D_F, _ = deluxe_scaling(S_i, S_j)
            elif self.scaling == "multiplicity":
                D_F = 0.5 * np.eye(loc.size)
            else:
                raise ValueError(f"unknown scaling {self.scaling!r}")
            D[np.ix_(loc, loc)] = D_F
            B[np.ix_(loc, loc)] = self.transforms[e]
        return D, B

    def _setup(self, subs):
        sp = self.spaces
        n_primal = sp.num_primal
        S_c = np.zeros((n_primal, n_primal))
        self._local = []
        for i, sub in enumerate(subs):
            ld = sp.local[i]
            D, B = self._local_scaling_and_basis(subs, i)
            Sh = B @ sub.S @ B.T
            Sh = 0.5 * (Sh + Sh.T)
            d, p = ld.dual_local, ld.primal_local
            S_dd = Sh[np.ix_(d, d)]
            S_dp = Sh[np.ix_(d, p)]
            try:
                fac = kernels.cholesky(S_dd) if d.size else None
            except kernels.KernelError as exc:
                raise BddcError(f"dual block of subdomain {i} is not SPD (no primal constraint?)") from exc
            Phi = kernels.cho_solve(fac, S_dp) if d.size and p.size else np.zeros((d.size, p.size))
            S_c_loc = Sh[np.ix_(p, p)] - S_dp.T @ Phi
            S_c[np.ix_(ld.primal_global, ld.primal_global)] += S_c_loc
            # E maps original local residual -> transformed scaled residual
            E = B @ D.T
            self._local.append((ld, fac, Phi, S_dp, E))
        S_c = 0.5 * (S_c + S_c.T)
        self.coarse_matrix = S_c
        if n_primal:
            try:
                self._coarse = kernels.cholesky(S_c)
            except kernels.KernelError as exc:
                bad = np.flatnonzero(np.diag(S_c) <= 0).tolist()
                raise BddcError(f"coarse matrix not SPD (nonpositive diagonal at primal dofs {bad})") from exc
        else:
            self._coarse = None

    @property
    def num_primal(self):
        return self.spaces.num_primal

    def apply(self, r):
        """Apply ``M^{-1}`` to a vector or to the columns of a matrix."""
        r = np.asarray(r, dtype=float)
        vec = r.ndim == 1
        R = r[:, None] if vec else r
        ncol = R.shape[1]
        n_primal = self.spaces.num_primal
        g_p = np.zeros((n_primal, ncol))
        cache = []
        for ld, fac, Phi, S_dp, E in self._local:
            q = E @ R[ld.gamma]
            g_p[ld.primal_global] += q[ld.primal_local]
            y = kernels.cho_solve(fac, q[ld.dual_local]) if fac is not None else np.zeros((0, ncol))
            g_p[ld.primal_global] -= S_dp.T @ y
            cache.append(y)
        u_p = kernels.cho_solve(self._coarse, g_p) if self._coarse is not None else g_p
        Z = np.zeros((self.n, ncol))
        for (ld, fac, Phi, S_dp, E), y in zip(self._local, cache):
            up = u_p[ld.primal_global]
            w = np.zeros((ld.gamma.size, ncol))
            w[ld.dual_local] = y - Phi @ up
            w[ld.primal_local] = up
            np.add.at(Z, ld.gamma, E.T @ w)
        return Z[:, 0] if vec else Z

    __call__ = apply

    def matrix(self):
        """Dense ``M^{-1}`` (symmetrized)."""
        M = self.apply(np.eye(self.n))
        return 0.5 * (M + M.T)


def build_preconditioner(subs, spaces, constraints=None, scaling="deluxe"):
    return BddcPreconditioner(subs, spaces, constraints, scaling)


def lanczos_ritz(alphas, betas):
    """Ritz values from the CG coefficients via the Lanczos tridiagonal."""
    m = len(alphas)
    if m == 0:
        return np.zeros(0)
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas[: m - 1], dtype=float)
    diag = 1.0 / a
    diag[1:] += b / a[:-1]
    off = np.sqrt(b) / a[:-1]
    T = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    return np.linalg.eigvalsh(T)


def pcg_solve(apply_S, precond, rhs, rel_tol=1e-6, max_iter=200, x0=None):
    """Preconditioned CG.

    Stops when ``sqrt(r^T M^{-1} r)`` has dropped by `rel_tol` relative to the
    initial value.  Returns ``(x, PcgReport)``; the report carries the extreme
    Ritz values of the preconditioned operator.
    """
    rhs = np.asarray(rhs, dtype=float)
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=float)
    if precond is None:
        precond = lambda v: v  # noqa: E731
    r = rhs - apply_S(x) if x0 is not None else rhs.copy()
    z = precond(r)
    rz = float(r @ z)
    if rhs.size == 0 or rz == 0.0:
        return x, PcgReport(0, True, [0.0])
    if rz < 0:
        raise BddcError("preconditioner is not positive definite")
    res0 = math.sqrt(rz)
    residuals = [res0]
    p = z.copy()
    alphas, betas = [], []
    converged = False
    for _ in range(max_iter):
        q = apply_S(p)
        pq = float(p @ q)
        if pq <= 0:
            raise BddcError(f"operator not positive definite (p^T S p = {pq:.3e})")
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        z = precond(r)
        rz_new = float(r @ z)
        alphas.append(alpha)
        res = math.sqrt(max(rz_new, 0.0))
        residuals.append(res)
        if res <= rel_tol * res0:
            converged = True
            break
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new
    ritz = lanczos_ritz(alphas, betas)
    report = PcgReport(len(alphas), converged, residuals, float(ritz.min()), float(ritz.max()))
    return x, report


def condition_estimate(report):
    lo, hi = report.lambda_min, report.lambda_max
    if not (lo > 0.0):
        raise BddcError(f"nonpositive lambda_min estimate {lo}; preconditioner is broken")
    return hi / lo


def dense_spectrum(precond, S):
    """Eigenvalues (ascending) of ``M^{-1} S`` computed densely."""
    Minv = precond.matrix()
    L = np.linalg.cholesky(Minv)
    return np.linalg.eigvalsh(L.T @ S @ L)


@dataclass
class InterfaceProblem:
    """Assembled substructured problem for one coefficient field."""

    grid: object
    partition: object
    classes: object
    subs: list
    S: np.ndarray
    rhs: np.ndarray

    @classmethod
    def build(cls, grid, rho, per_side=4, f=1.0, partition=None, classes=None):
        partition = partition or partition_uniform(grid, per_side)
        classes = classes or classify_interface(partition)
        subs = build_subdomains(grid, partition, rho, f)
        spaces = build_restrictions(partition, classes)
        S = np.zeros((partition.interface.size,) * 2)
        for ld, sub in zip(spaces.local, subs):
            S[np.ix_(ld.gamma, ld.gamma)] += sub.S
        S = 0.5 * (S + S.T)
        rhs = spaces.assemble([sub.g for sub in subs])
        return cls(grid, partition, classes, subs, S, rhs)

    @property
    def spaces(self):
        return build_restrictions(self.partition, self.classes)

    def apply_S(self, w):
        return self.S @ w

    def extend(self, u_gamma):
        """Full nodal vector from interface values by interior back-substitution."""
        u = np.zeros(self.grid.num_nodes)
        u[self.partition.interface] = u_gamma
        for sub, ld in zip(self.subs, self.spaces.local):
            u[sub.interior] = sub.back_substitute(u_gamma[ld.gamma])
        return u

    def preconditioner(self, constraints=None, scaling="deluxe"):
        return BddcPreconditioner(self.subs, self.spaces, constraints, scaling)

    def solve(self, precond, rel_tol=1e-6, max_iter=200):
        u_gamma, report = pcg_solve(self.apply_S, precond, self.rhs, rel_tol, max_iter)
        return self.extend(u_gamma), report


def relative_error(u, u_ref):
    den = np.linalg.norm(u_ref)
    return float(np.linalg.norm(u - u_ref) / den) if den > 0 else float(np.linalg.norm(u))


def reference_solution(grid, rho, f=1.0):
    return direct_solve(assemble(grid, rho, f))
