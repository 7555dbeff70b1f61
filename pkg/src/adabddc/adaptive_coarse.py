"""Deluxe scaling, parallel sums and the per-edge generalized eigenproblem
whose dominant eigenvectors enrich the BDDC primal space.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels


DEGENERACY_GAP = 1e-8


def deluxe_scaling(S_i, S_j):
    """Return ``(D_i, D_j)`` with ``D_i = (S_i + S_j)^{-1} S_i`` and ``D_j = I - D_i``."""
    S_i = kernels.as_sym(S_i, tol=1e-10)
    S_j = kernels.as_sym(S_j, tol=1e-10)
    try:
        D_i = kernels.solve_spd(S_i + S_j, S_i)
    except kernels.KernelError as exc:
        raise kernels.KernelError("degenerate edge") from exc
    return D_i, np.eye(D_i.shape[0]) - D_i


def parallel_sum(A, B, rel_tol=1e-12):
    """``A : B = B (A + B)^+ A``, symmetrized."""
    A = kernels.as_sym(A, tol=1e-10)
    B = kernels.as_sym(B, tol=1e-10)
    P = B @ kernels.pseudo_inverse(A + B, rel_tol) @ A
    return 0.5 * (P + P.T)


@dataclass(frozen=True)
class EdgeOperators:
    S_i: np.ndarray  # principal block of S^(i) on the edge
    S_j: np.ndarray
    St_i: np.ndarray  # edge Schur complements
    St_j: np.ndarray
    D_i: np.ndarray = field(default=None)
    D_j: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.D_i is None:
            D_i, D_j = deluxe_scaling(self.S_i, self.S_j)
            object.__setattr__(self, "D_i", D_i)
            object.__setattr__(self, "D_j", D_j)

    def lhs(self):
        L = self.D_j.T @ self.S_i @ self.D_j + self.D_i.T @ self.S_j @ self.D_i
        return L

    def rhs(self, rel_tol=1e-12):
        return parallel_sum(self.St_i, self.St_j, rel_tol)


def _symmetrized(M, what):
    scale = max(np.abs(M).max(), np.finfo(float).tiny)
    if np.abs(M - M.T).max() > 1e-10 * scale:
        raise kernels.KernelError(f"{what} of edge eigenproblem is not symmetric")
    return 0.5 * (M + M.T)


def edge_eigenproblem(ops, rel_tol=1e-12):
    """Eigenpairs of ``L v = lam (St_i : St_j) v``, descending in ``lam``.

    Returns ``(values, vectors, rhs)`` where `rhs` is the parallel sum, which
    is needed later to form constraint vectors.
    """
    L = _symmetrized(ops.lhs(), "left-hand side")
    P = _symmetrized(ops.rhs(rel_tol), "right-hand side")
    values, vectors = kernels.gen_sym_eig(L, P, rel_tol)
    return values, vectors, P


def canonicalize(v):
    """Unit Euclidean norm and largest-|entry| component positive.

    Magnitude ties go to the lowest index.
    """
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        return v.copy()
    v = v / nrm
    a = np.abs(v)
    # treat entries within round-off of the max as ties so the rule is stable
    idx = int(np.flatnonzero(a >= a.max() * (1.0 - 1e-12))[0])
    return -v if v[idx] < 0 else v


@dataclass(frozen=True)
class EdgeConstraints:
    values: np.ndarray  # selected eigenvalues, descending
    vectors: np.ndarray  # (k, |F|) canonicalized eigenvectors
    constraints: np.ndarray  # (k, |F|) rows c = (St_i : St_j) v
    all_values: np.ndarray
    near_degenerate: bool


def select_dominant(values, vectors, rhs, k=None, tol=None):
    """Pick dominant eigenvectors by fixed count `k` or threshold `tol`.

    Exactly one of `k` and `tol` must be given.  With a threshold all modes
    with ``lam > tol`` are kept.
    """
    if (k is None) == (tol is None):
        raise ValueError("give exactly one of k and tol")
    m = vectors.shape[0]
    if k is not None:
        if k > min(values.size, m):
            raise ValueError(f"k={k} exceeds edge eigenproblem dimension {values.size}")
        count = int(k)
    else:
        count = int(np.sum(values > tol))
    V = np.array([canonicalize(vectors[:, a]) for a in range(count)]).reshape(count, m)
    lam = values[:count].copy()
    # equal eigenvalues: lexicographically larger leading component first
    order = sorted(range(count), key=lambda a: (-lam[a], tuple(-V[a])))
    V, lam = V[order], lam[order]
    near = False
    if 0 < count < values.size:
        gap = values[count - 1] - values[count]
        near = bool(gap <= DEGENERACY_GAP * max(abs(values[count - 1]), np.finfo(float).tiny))
    C = V @ rhs if count else np.zeros((0, m))
    return EdgeConstraints(lam, V, C, values.copy(), near)


@dataclass(frozen=True)
class AdaptiveConstraintSet:
    edges: tuple  # EdgeConstraints per edge, in interface-class order

    @property
    def counts(self):
        return [e.vectors.shape[0] for e in self.edges]

    @property
    def target_length(self):
        return int(sum(e.vectors.size for e in self.edges))

    def target(self):
        """Concatenated eigenvector stack (edge order, then mode order)."""
        if not self.edges:
            return np.zeros(0)
        return np.concatenate([e.vectors.ravel() for e in self.edges])

    def constraint_blocks(self):
        return [e.constraints for e in self.edges]

    @property
    def near_degenerate(self):
        return [i for i, e in enumerate(self.edges) if e.near_degenerate]


def edge_operators(subs, partition, edge):
    """Collect S_F, St_F for both subdomains of `edge` from local Schur data."""
    from .schur import edge_schur

    blocks = []
    for s in edge.subdomains:
        sub = subs[s]
        loc = np.searchsorted(sub.boundary, edge.nodes)
        S_F = sub.S[np.ix_(loc, loc)]
        St_F = edge_schur(sub.S, loc)
        blocks.append((S_F, St_F))
    (S_i, St_i), (S_j, St_j) = blocks
    return EdgeOperators(S_i, S_j, St_i, St_j)


def compute_constraints(subs, partition, classes, k=None, tol=None, rel_tol=1e-12):
    """Solve every edge eigenproblem and select dominant modes."""
    out = []
    for edge in classes.edges:
        ops = edge_operators(subs, partition, edge)
        values, vectors, P = edge_eigenproblem(ops, rel_tol)
        out.append(select_dominant(values, vectors, P, k=k, tol=tol))
    return AdaptiveConstraintSet(tuple(out))


def constraints_from_vectors(subs, partition, classes, vectors, rel_tol=1e-12):
    """Constraint set built from externally supplied (e.g. predicted) eigenvectors.

    `vectors` is a list with one ``(k, |F|)`` array per edge.  Vectors are
    rescaled to unit norm; a vector with norm below 1e-12 is dropped, which
    leaves that edge with fewer (possibly zero) adaptive constraints.
    """
    out = []
    dropped = []
    for e, (edge, V) in enumerate(zip(classes.edges, vectors)):
        V = np.atleast_2d(np.asarray(V, dtype=float))
        ops = edge_operators(subs, partition, edge)
        P = _symmetrized(ops.rhs(rel_tol), "right-hand side")
        rows = []
        for v in V:
            nrm = np.linalg.norm(v)
            if not np.isfinite(nrm) or nrm < 1e-12:
                dropped.append(e)
                continue
            rows.append(v / nrm)
        Vn = np.array(rows).reshape(len(rows), edge.nodes.size)
        C = Vn @ P if rows else np.zeros((0, edge.nodes.size))
        out.append(EdgeConstraints(np.full(len(rows), np.nan), Vn, C, np.zeros(0), False))
    return AdaptiveConstraintSet(tuple(out)), sorted(set(dropped))
