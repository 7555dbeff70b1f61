import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from adabddc import kernels
from adabddc.decomp import classify_interface, partition_uniform
from adabddc.grid_fem import assemble, build_grid, direct_solve
from adabddc.schur import build_subdomains, edge_schur, interface_rhs, local_matrix, subdomain_schur

TOY = np.array([[2.0, -1, 0], [-1, 2, -1], [0, -1, 2]])


def test_toy_elimination():
    # order [interior, boundary]: put the middle node first
    A = TOY[np.ix_([1, 0, 2], [1, 0, 2])]
    np.testing.assert_allclose(subdomain_schur(A, 1), [[1.5, -0.5], [-0.5, 1.5]])
    # edge = node 0, third node Dirichlet-fixed and removed
    np.testing.assert_allclose(edge_schur(TOY[:2, :2], [0]), [[1.5]])


def test_no_interior():
    np.testing.assert_array_equal(subdomain_schur(TOY, 0), TOY)
    f = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(interface_rhs(TOY, f, 0), f)
    np.testing.assert_array_equal(edge_schur(TOY, [0, 1, 2]), TOY)


def test_interior_not_spd():
    A = np.array([[-1.0, 0.5], [0.5, 1.0]])
    with pytest.raises(kernels.KernelError):
        subdomain_schur(A, 1)


def test_edge_schur_singular_complement():
    S = np.array([[1.0, -1, 0], [-1, 1, 0], [0, 0, 0]])
    with pytest.raises(kernels.KernelError, match="regularization"):
        edge_schur(S, [0])


def _setup(n=16, per_side=4, seed=0, spread=2.0):
    g = build_grid(n)
    p = partition_uniform(g, per_side)
    rho = np.exp(np.random.default_rng(seed).uniform(-spread, spread, g.num_elements))
    return g, p, rho, build_subdomains(g, p, rho)


def test_energy_minimization_oracle(rng):
    """w^T S w equals the minimum full energy over interior extensions,
    computed by solving the equality-constrained KKT system."""
    g, p, rho, subs = _setup(n=12, per_side=4)
    sub = subs[5]  # a floating subdomain with a 4x4-node closure
    A = sub.A
    ni, n = sub.n_interior, A.shape[0]
    assert n == 16
    for _ in range(5):
        w = rng.standard_normal(n - ni)
        C = np.zeros((n - ni, n))
        C[:, ni:] = np.eye(n - ni)
        K = np.block([[A, C.T], [C, np.zeros((n - ni, n - ni))]])
        sol = np.linalg.solve(K, np.concatenate([np.zeros(n), w]))
        x = sol[:n]
        assert abs(x @ A @ x - w @ sub.S @ w) <= 1e-10 * max(1.0, abs(w @ sub.S @ w))


def test_floating_kernel_and_psd():
    g, p, rho, subs = _setup()
    for sub, dsub in zip(subs, p.subdomains):
        S = sub.S
        w = np.linalg.eigvalsh(S)
        assert w.min() >= -1e-10 * np.abs(w).max()
        floating = dsub.nodes.size == (g.n // p.per_side + 1) ** 2
        if floating:
            assert np.abs(S @ np.ones(S.shape[0])).max() <= 1e-9 * np.abs(S).max()


def test_zero_source():
    g, p, rho, _ = _setup()
    for sub in build_subdomains(g, p, rho, f=0.0):
        assert np.all(sub.g == 0)


def test_interface_solve_matches_direct():
    g, p, rho, subs = _setup()
    gamma = p.interface
    S = np.zeros((gamma.size, gamma.size))
    rhs = np.zeros(gamma.size)
    for sub in subs:
        idx = p.gamma_index(sub.boundary)
        S[np.ix_(idx, idx)] += sub.S
        rhs[idx] += sub.g
    u_gamma = np.linalg.solve(S, rhs)
    u = np.zeros(g.num_nodes)
    u[gamma] = u_gamma
    for sub in subs:
        u[sub.interior] = sub.back_substitute(u_gamma[p.gamma_index(sub.boundary)])
    ref = direct_solve(assemble(g, rho))
    assert np.linalg.norm(u - ref) <= 1e-8 * np.linalg.norm(ref)


def test_local_matrix_consistent_with_global():
    g, p, rho, _ = _setup(n=8, per_side=2)
    full = assemble(g, rho).full_stiffness.toarray()
    total = np.zeros_like(full)
    for sub in p.subdomains:
        A, _ = local_matrix(g, sub, rho)
        order = np.concatenate([sub.interior, sub.boundary])
        total[np.ix_(order, order)] += A
    free = np.flatnonzero(~g.boundary_mask())
    np.testing.assert_allclose(total[np.ix_(free, free)], full[np.ix_(free, free)], atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_edge_schur_properties(seed):
    g, p, rho, subs = _setup(n=16, per_side=4, seed=seed, spread=3.0)
    c = classify_interface(p)
    for edge in c.edges[:6]:
        for s in edge.subdomains:
            sub = subs[s]
            loc = np.searchsorted(sub.boundary, edge.nodes)
            S_F = sub.S[np.ix_(loc, loc)]
            St = edge_schur(sub.S, loc)
            nrm = np.abs(np.linalg.eigvalsh(St)).max()
            assert np.linalg.eigvalsh(St).min() >= -1e-10 * nrm
            diff = np.linalg.eigvalsh(S_F - St)
            assert diff.min() >= -1e-9 * np.abs(np.linalg.eigvalsh(S_F)).max()


def test_edge_schur_from_full_local_matrix():
    """Eliminating everything but the edge from A^(i) equals eliminating from S^(i)."""
    g, p, rho, subs = _setup()
    c = classify_interface(p)
    edge = c.edges[3]
    sub = subs[edge.subdomains[0]]
    loc = np.searchsorted(sub.boundary, edge.nodes)
    keep = sub.n_interior + loc
    rest = np.setdiff1d(np.arange(sub.A.shape[0]), keep)
    A = sub.A
    direct = A[np.ix_(keep, keep)] - A[np.ix_(keep, rest)] @ np.linalg.solve(A[np.ix_(rest, rest)], A[np.ix_(rest, keep)])
    np.testing.assert_allclose(edge_schur(sub.S, loc), direct, atol=1e-10 * np.abs(direct).max())
