import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adabddc.adaptive_coarse import compute_constraints
from adabddc.bddc import (
    BddcError,
    InterfaceProblem,
    PcgReport,
    change_of_basis,
    condition_estimate,
    dense_spectrum,
    lanczos_ritz,
    pcg_solve,
    reference_solution,
    relative_error,
)
from adabddc.grid_fem import build_grid


def _problem(n, per_side, rho=None, seed=0, spread=3.0):
    g = build_grid(n)
    if rho is None:
        rho = 10.0 ** np.random.default_rng(seed).uniform(-spread, spread, g.num_elements)
    elif np.isscalar(rho):
        rho = np.full(g.num_elements, float(rho))
    return g, rho, InterfaceProblem.build(g, rho, per_side)


def _blocks(cs):
    return cs.constraint_blocks()


def test_change_of_basis_examples(rng):
    T, k, dropped = change_of_basis(np.zeros((0, 4)), 4)
    np.testing.assert_array_equal(T, np.eye(4))
    assert (k, dropped) == (0, [])
    T, k, _ = change_of_basis(np.eye(5)[:1], 5)
    np.testing.assert_array_equal(T, np.eye(5))
    c = rng.standard_normal((2, 6))
    T, k, _ = change_of_basis(c, 6)
    assert k == 2
    assert np.abs(T @ T.T - np.eye(6)).max() <= 1e-12
    assert np.abs(T[2:] @ c.T).max() <= 1e-12 * np.abs(c).max()


def test_change_of_basis_drops_dependent(rng):
    c = rng.standard_normal(5)
    T, k, dropped = change_of_basis(np.array([c, 2 * c]), 5)
    assert k == 1 and dropped == [1]
    assert np.abs(T @ T.T - np.eye(5)).max() <= 1e-12


def test_pcg_zero_rhs():
    x, rep = pcg_solve(lambda v: v, None, np.zeros(4))
    assert rep.iterations == 0 and rep.converged
    assert np.all(x == 0)


def test_pcg_diagonal_exact_termination():
    d = np.arange(1.0, 11.0)
    x, rep = pcg_solve(lambda v: d * v, None, np.ones(10), rel_tol=1e-12)
    assert rep.iterations <= 10 and rep.converged
    assert abs(rep.lambda_max - 10) <= 1e-6
    assert abs(rep.lambda_min - 1) <= 1e-6
    np.testing.assert_allclose(x, 1 / d, rtol=1e-9)


def test_pcg_max_iter_report():
    d = np.arange(1.0, 51.0)
    _, rep = pcg_solve(lambda v: d * v, None, np.ones(50), rel_tol=1e-14, max_iter=3)
    assert rep.iterations == 3 and not rep.converged
    assert rep.lambda_min <= rep.lambda_max


def test_lanczos_ritz_single_step():
    # one CG step on diag(2): alpha = 1/2 -> Ritz value 2
    np.testing.assert_allclose(lanczos_ritz([0.5], []), [2.0])


def test_condition_estimate():
    assert condition_estimate(PcgReport(1, True, [], 1.0, 1.0)) == 1
    assert condition_estimate(PcgReport(1, True, [], 1.0, 4.0)) == 4
    with pytest.raises(BddcError):
        condition_estimate(PcgReport(1, True, [], 0.0, 4.0))


def test_report_serializable():
    import json

    rep = PcgReport(3, True, [1.0, 0.1], 1.0, 2.0)
    assert json.loads(json.dumps(rep.to_dict()))["iterations"] == 3


def test_single_subdomain():
    g, rho, prob = _problem(8, 1, rho=1.0)
    u, rep = prob.solve(prob.preconditioner())
    assert rep.iterations == 0
    np.testing.assert_allclose(u, reference_solution(g, rho), atol=1e-12)


def test_constant_rho_lambda_min_dense():
    g, rho, prob = _problem(8, 2, rho=1.0)
    lam = dense_spectrum(prob.preconditioner(), prob.S)
    assert lam.min() >= 1 - 1e-8


def test_full_primal_space_is_exact():
    """With every edge node primal the partially assembled space is the fully
    assembled one and the preconditioner is the exact inverse."""
    g, rho, prob = _problem(8, 2)
    blocks = [np.eye(e.nodes.size) for e in prob.classes.edges]
    pre = prob.preconditioner(blocks)
    lam = dense_spectrum(pre, prob.S)
    np.testing.assert_allclose(lam, np.ones_like(lam), atol=1e-8)


def test_preconditioner_symmetric_pd(rng):
    g, rho, prob = _problem(16, 4, seed=4)
    cs = compute_constraints(prob.subs, prob.partition, prob.classes, k=1)
    pre = prob.preconditioner(_blocks(cs))
    for _ in range(5):
        y, z = rng.standard_normal((2, prob.S.shape[0]))
        a, b = z @ pre(y), y @ pre(z)
        assert abs(a - b) <= 1e-9 * max(abs(a), 1.0)
        assert y @ pre(y) > 0
    M = pre.matrix()
    assert np.linalg.eigvalsh(0.5 * (M + M.T)).min() > 0
    assert np.linalg.eigvalsh(pre.coarse_matrix).min() > 0
    # apply on matrix columns equals column-wise application
    Y = rng.standard_normal((prob.S.shape[0], 3))
    np.testing.assert_allclose(pre(Y), np.column_stack([pre(Y[:, j]) for j in range(3)]), atol=1e-12)


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_adaptive_constraints_do_not_raise_lambda_max(seed):
    g, rho, prob = _problem(8, 2, seed=seed)
    base = dense_spectrum(prob.preconditioner(), prob.S)
    cs = compute_constraints(prob.subs, prob.partition, prob.classes, k=1)
    lam = dense_spectrum(prob.preconditioner(_blocks(cs)), prob.S)
    assert lam.max() <= base.max() * (1 + 1e-8)
    assert lam.min() >= 1 - 1e-6 and base.min() >= 1 - 1e-6


def test_threshold_monotonicity():
    g, rho, prob = _problem(16, 2, seed=21)
    previous = np.inf
    for theta in (20.0, 5.0, 2.0, 1.5, 1.1):
        cs = compute_constraints(prob.subs, prob.partition, prob.classes, tol=theta)
        lam_max = dense_spectrum(prob.preconditioner(_blocks(cs)), prob.S).max()
        assert lam_max <= previous * (1 + 1e-8)
        previous = lam_max


def test_multiplicity_scaling_also_converges():
    g, rho, prob = _problem(16, 4, rho=1.0)
    u, rep = prob.solve(prob.preconditioner(scaling="multiplicity"))
    assert rep.converged
    assert relative_error(u, reference_solution(g, rho)) <= 1e-5


def test_constant_rho_n32_matches_direct():
    g, rho, prob = _problem(32, 4, rho=1.0)
    u, rep = prob.solve(prob.preconditioner())
    assert rep.converged
    assert relative_error(u, reference_solution(g, rho)) <= 1e-6
    assert rep.lambda_min >= 1 - 1e-6


def test_ritz_condition_matches_dense():
    g, rho, prob = _problem(16, 4, rho=1.0)
    pre = prob.preconditioner()
    _, rep = prob.solve(pre)
    lam = dense_spectrum(pre, prob.S)
    assert condition_estimate(rep) == pytest.approx(lam.max() / lam.min(), rel=0.05)


def test_residuals_and_coefficient_scaling():
    g, rho, prob = _problem(16, 4, seed=8)
    cs = compute_constraints(prob.subs, prob.partition, prob.classes, k=1)
    u, rep = prob.solve(prob.preconditioner(_blocks(cs)))
    assert rep.converged and rep.lambda_min <= rep.lambda_max
    assert relative_error(u, reference_solution(g, rho)) <= 1e-5
    _, _, prob2 = _problem(16, 4, rho=4.2 * rho)
    cs2 = compute_constraints(prob2.subs, prob2.partition, prob2.classes, k=1)
    _, rep2 = prob2.solve(prob2.preconditioner(_blocks(cs2)))
    assert abs(rep.iterations - rep2.iterations) <= 1
