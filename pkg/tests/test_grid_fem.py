import numpy as np
import pytest

from adabddc.grid_fem import assemble, build_grid, direct_solve, element_stiffness


def test_counts():
    g = build_grid(2)
    assert (g.num_nodes, g.num_elements) == (9, 8)
    g = build_grid(32)
    assert (g.num_nodes, g.num_elements) == (1089, 2048)
    assert g.h == 1 / 32


def test_first_centroid_in_first_cell():
    c = build_grid(4).centroids[0]
    assert 0 < c[0] < 0.25 and 0 < c[1] < 0.25


def test_triangles_positively_oriented():
    g = build_grid(5)
    xy = g.coords[g.elements]
    d1, d2 = xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]
    assert np.all(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] > 0)


def test_element_stiffness_right_isosceles():
    g = build_grid(4)
    # element 0 is (ll, lr, ur): the right angle sits at lr
    K = element_stiffness(g, 0, 1.0)
    perm = [1, 0, 2]
    expected = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])
    np.testing.assert_allclose(K[np.ix_(perm, perm)], expected, atol=1e-14)
    np.testing.assert_allclose(element_stiffness(g, 0, 10.0), 10 * K)
    with pytest.raises(ValueError):
        element_stiffness(g, 0, 0.0)


def _oracle_assembly(g, rho, f):
    """Dense assembly written independently: barycentric coefficients from
    inverting the vertex Vandermonde matrix, centroid load."""
    N = g.num_nodes
    K = np.zeros((N, N))
    F = np.zeros(N)
    for e, tri in enumerate(g.elements):
        V = np.column_stack([np.ones(3), g.coords[tri]])
        C = np.linalg.inv(V)  # column a holds (c0, cx, cy) of basis a
        grads = C[1:, :].T
        area = abs(np.linalg.det(V)) / 2
        for a in range(3):
            F[tri[a]] += f * area / 3
            for b in range(3):
                K[tri[a], tri[b]] += rho[e] * area * grads[a] @ grads[b]
    return K, F


def test_assemble_matches_independent_oracle():
    g = build_grid(4)
    rho = np.ones(g.num_elements)
    sys = assemble(g, rho, 1.0)
    K, F = _oracle_assembly(g, rho, 1.0)
    np.testing.assert_allclose(sys.full_stiffness.toarray(), K, atol=1e-12)
    np.testing.assert_allclose(sys.full_load, F, atol=1e-12)
    free = sys.free
    u_ref = np.zeros(g.num_nodes)
    u_ref[free] = np.linalg.solve(K[np.ix_(free, free)], F[free])
    np.testing.assert_allclose(direct_solve(sys), u_ref, atol=1e-12)


def test_zero_source_gives_zero_solution():
    g = build_grid(4)
    u = direct_solve(assemble(g, np.ones(g.num_elements), 0.0))
    assert np.all(u == 0)


def test_reflection_symmetry():
    n = 8
    g = build_grid(n)
    u = direct_solve(assemble(g, np.ones(g.num_elements), 1.0)).reshape(n + 1, n + 1)
    np.testing.assert_allclose(u, u.T, atol=1e-12)


def _mms_error(n):
    g = build_grid(n)
    x, y = g.coords[:, 0], g.coords[:, 1]
    exact = x * (1 - x) * y * (1 - y)

    def f(a, b):
        return 2 * (a * (1 - a) + b * (1 - b))

    u = direct_solve(assemble(g, np.ones(g.num_elements), f))
    return np.abs(u - exact).max()


def test_manufactured_solution_and_rate():
    e16, e32 = _mms_error(16), _mms_error(32)
    assert e32 <= 2e-3
    assert 4 * 0.7 <= e16 / e32 <= 4 * 1.3


def test_matrix_properties(rng):
    g = build_grid(8)
    rho = np.exp(rng.uniform(-3, 3, g.num_elements))
    sys = assemble(g, rho)
    A = sys.stiffness.toarray()
    np.testing.assert_allclose(A, A.T, atol=1e-14 * np.abs(A).max())
    assert np.all(np.diag(A) > 0)
    for _ in range(100):
        a = rng.standard_normal(A.shape[0])
        assert a @ A @ a >= 0
    full = sys.full_stiffness.toarray()
    assert np.abs(full.sum(axis=1)).max() <= 1e-12 * np.abs(full).max()
    scaled = assemble(g, 3.5 * rho).stiffness.toarray()
    np.testing.assert_allclose(scaled, 3.5 * A, rtol=1e-14, atol=1e-14 * np.abs(A).max())


def test_field_length_checked():
    g = build_grid(4)
    with pytest.raises(ValueError, match="elements"):
        assemble(g, np.ones(5))
