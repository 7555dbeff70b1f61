"""Fast invariant checks runnable without pytest (``adabddc selftest``)."""

import numpy as np

from . import kernels
from .adaptive_coarse import parallel_sum
from .bddc import InterfaceProblem, dense_spectrum, relative_error, reference_solution
from .adaptive_coarse import compute_constraints
from .grid_fem import build_grid
from .stochastic import brownian_basis, characteristic, find_roots


def _check(name, fn):
    try:
        ok, detail = fn()
    except Exception as exc:  # noqa: BLE001
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return name, bool(ok), detail


def _pinv():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((6, 3))
    A = X @ X.T
    P = kernels.pseudo_inverse(A)
    err = np.abs(A @ P @ A - A).max() / np.abs(A).max()
    return err < 1e-8, f"Moore-Penrose residual {err:.2e}"


def _psum():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((5, 5))
    A = X @ X.T + np.eye(5)
    err = np.abs(parallel_sum(A, A) - A / 2).max()
    return err < 1e-10, f"|A:A - A/2| = {err:.2e}"


def _kl():
    r = find_roots(0.25, 8)
    res = np.abs(characteristic(r, 0.25)).max()
    inter = all((m * np.pi < ri < (m + 1) * np.pi) for m, ri in enumerate(r))
    lam = brownian_basis(1).values[0]
    ok = res < 1e-12 and inter and abs(lam - 16 / np.pi**4) < 1e-15
    return ok, f"root residual {res:.1e}, interlacing {inter}"


def _bddc():
    grid = build_grid(16)
    rng = np.random.default_rng(3)
    rho = np.exp(10.0 ** rng.uniform(-1, 1, grid.num_elements))
    prob = InterfaceProblem.build(grid, rho, 4)
    cs = compute_constraints(prob.subs, prob.partition, prob.classes, k=1)
    pre = prob.preconditioner(cs.constraint_blocks())
    u, rep = prob.solve(pre)
    err = relative_error(u, reference_solution(grid, rho))
    lam = dense_spectrum(pre, prob.S)
    ok = rep.converged and err < 1e-5 and lam.min() > 1 - 1e-8
    return ok, f"{rep.iterations} its, error {err:.1e}, dense lambda in [{lam.min():.4f}, {lam.max():.4f}]"


def run_selftest():
    return [
        _check("pseudo_inverse", _pinv),
        _check("parallel_sum", _psum),
        _check("kl_basis", _kl),
        _check("bddc_solve", _bddc),
    ]
