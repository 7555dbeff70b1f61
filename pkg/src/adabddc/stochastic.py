"""Karhunen-Loeve bases for separable covariances on the unit square, field
realization and expected (mean) log-permeability fields.

Fields are piecewise constant: eigenfunctions and mean functions are
evaluated at element centroids and the permeability is
``rho_e = exp(E[K](x_e) + sum_k sqrt(lam_k) xi_k f_k(x_e))``.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq


class RootFindingError(RuntimeError):
    pass


@dataclass(frozen=True)
class KlTerm:
    value: float
    i: int
    j: int
    fx: object = field(repr=False)
    fy: object = field(repr=False)

    def __call__(self, x1, x2):
        return self.fx(np.asarray(x1, dtype=float)) * self.fy(np.asarray(x2, dtype=float))


@dataclass(frozen=True)
class KlBasis:
    family: str
    params: dict
    terms: tuple

    @property
    def R(self):
        return len(self.terms)

    @property
    def values(self):
        return np.array([t.value for t in self.terms])

    def evaluate(self, points):
        """Eigenfunction values, shape (len(points), R)."""
        points = np.asarray(points, dtype=float)
        return np.column_stack([t(points[:, 0], points[:, 1]) for t in self.terms]).reshape(len(points), self.R)

    def covariance(self, x, y):
        """Truncated covariance ``sum_k lam_k f_k(x) f_k(y)``."""
        fx = self.evaluate(np.atleast_2d(x))
        fy = self.evaluate(np.atleast_2d(y))
        return (fx * self.values) @ fy.T


def _top_pairs(values_1d_x, values_1d_y, R, key=None):
    """Top-R products with ties broken by smaller i, then smaller j.

    `key(i, j)` may supply an exact ordering quantity (smaller first) when
    rounded float products would misorder exact ties.
    """
    cand = [(values_1d_x[i] * values_1d_y[j], i, j) for i in range(len(values_1d_x)) for j in range(len(values_1d_y))]
    if key is None:
        cand.sort(key=lambda t: (-t[0], t[1], t[2]))
    else:
        cand.sort(key=lambda t: (key(t[1], t[2]), t[1], t[2]))
    return cand[:R]


def brownian_basis(R):
    """Eigenpairs of ``min(x1, y1) min(x2, y2)`` on the unit square."""
    if R < 1:
        raise ValueError("R must be at least 1")
    lam1 = [4.0 / ((2 * i + 1) ** 2 * math.pi**2) for i in range(R)]

    def mode(i):
        w = (i + 0.5) * math.pi
        return lambda x: math.sqrt(2.0) * np.sin(w * x)

    terms = []
    # lam is decreasing in the integer (2i+1)(2j+1), which ties exactly
    for _, i, j in _top_pairs(lam1, lam1, R, key=lambda i, j: (2 * i + 1) * (2 * j + 1)):
        value = 16.0 / (((2 * i + 1) ** 2 * math.pi**2) * ((2 * j + 1) ** 2 * math.pi**2))
        terms.append(KlTerm(value, i + 1, j + 1, mode(i), mode(j)))
    return KlBasis("brownian", {}, tuple(terms))


def characteristic(r, eta):
    """``(r^2 eta^2 - 1) sin r - 2 eta r cos r``."""
    return (r * r * eta * eta - 1.0) * np.sin(r) - 2.0 * eta * r * np.cos(r)


def find_roots(eta, count):
    """First `count` positive roots of the exponential-kernel characteristic equation.

    Exactly one root lies in each interval ``((m-1) pi, m pi)``; the function
    is continuous there, so the pole of the tangent form at ``r = 1/eta`` is
    never an issue.
    """
    if not eta > 0:
        raise ValueError("correlation length must be positive")
    roots = []
    for m in range(1, count + 1):
        lo, hi = (m - 1) * math.pi, m * math.pi
        if m == 1:
            # g ~ -(1 + 2 eta) r near 0, so step off the trivial root
            lo = min(1e-6, 0.5 / (1.0 + eta))
        g_lo, g_hi = characteristic(lo, eta), characteristic(hi, eta)
        if g_lo * g_hi > 0:
            raise RootFindingError(f"no sign change on [{lo}, {hi}] for eta={eta}: g={g_lo:.3e}, {g_hi:.3e}")
        r = brentq(characteristic, lo, hi, args=(eta,), xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        # one Newton polish step where it helps
        dg = (2 * r * eta * eta) * math.sin(r) + (r * r * eta * eta - 1.0) * math.cos(r) - 2 * eta * (math.cos(r) - r * math.sin(r))
        if dg != 0:
            r2 = r - characteristic(r, eta) / dg
            if lo < r2 < hi and abs(characteristic(r2, eta)) < abs(characteristic(r, eta)):
                r = r2
        roots.append(r)
    return np.array(roots)


def exponential_basis(R, sigma2=1.0, eta1=0.25, eta2=0.25):
    """Eigenpairs of ``sigma2 exp(-|x1-y1|/eta1 - |x2-y2|/eta2)`` on the unit square."""
    if R < 1:
        raise ValueError("R must be at least 1")
    if not (sigma2 > 0 and eta1 > 0 and eta2 > 0):
        raise ValueError("sigma2, eta1 and eta2 must be positive")
    r1 = find_roots(eta1, R)
    r2 = find_roots(eta2, R)
    lam1 = [2.0 * eta1 / (r * r * eta1 * eta1 + 1.0) for r in r1]
    lam2 = [2.0 * eta2 / (r * r * eta2 * eta2 + 1.0) for r in r2]

    def mode(r, eta):
        norm = math.sqrt((r * r * eta * eta + 1.0) / 2.0 + eta)
        return lambda x: (r * eta * np.cos(r * x) + np.sin(r * x)) / norm

    terms = []
    for _, i, j in _top_pairs(lam1, lam2, R):
        value = 4.0 * eta1 * eta2 * sigma2 / ((r1[i] ** 2 * eta1**2 + 1.0) * (r2[j] ** 2 * eta2**2 + 1.0))
        terms.append(KlTerm(value, i + 1, j + 1, mode(r1[i], eta1), mode(r2[j], eta2)))
    return KlBasis("exponential", {"sigma2": sigma2, "eta1": eta1, "eta2": eta2}, tuple(terms))


# -- expected fields ---------------------------------------------------------


@dataclass(frozen=True)
class ExpectedField:
    """Mean log-permeability, one value per fine-grid element."""

    kind: str
    values: np.ndarray = field(repr=False)

    def __call__(self, grid):
        if self.values.shape != (grid.num_elements,):
            raise ValueError(f"expected field has {self.values.size} values for {grid.num_elements} elements")
        return self.values


def expected_constant(grid, c=0.0):
    return ExpectedField("constant", np.full(grid.num_elements, float(c)))


def expected_random_exponent(grid, seed):
    """``10**s`` with ``s ~ U[-1, 1]`` drawn once per element from `seed`."""
    s = np.random.default_rng(seed).uniform(-1.0, 1.0, grid.num_elements)
    return ExpectedField("A", 10.0**s)


def expected_trig(grid):
    """``5 sin(2 pi x1) sin(2 pi x2) + 5``."""
    x = grid.centroids
    return ExpectedField("B", 5.0 * np.sin(2 * np.pi * x[:, 0]) * np.sin(2 * np.pi * x[:, 1]) + 5.0)


class RasterError(ValueError):
    pass


def read_raster(path):
    """Whitespace-separated raster with a ``rows cols`` header.

    Row 0 is the bottom row (smallest x2).
    """
    tokens = Path(path).read_text().split()
    if len(tokens) < 2:
        raise RasterError("missing 'rows cols' header")
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
    except ValueError as exc:
        raise RasterError(f"malformed header {tokens[:2]}") from exc
    if rows < 1 or cols < 1:
        raise RasterError("empty grid")
    body = tokens[2:]
    if len(body) != rows * cols:
        raise RasterError(f"header says {rows}x{cols} values, found {len(body)}")
    try:
        data = np.array([float(t) for t in body])
    except ValueError as exc:
        raise RasterError(f"non-numeric entry: {exc}") from exc
    if not np.all(np.isfinite(data)):
        raise RasterError("non-finite entry")
    return data.reshape(rows, cols)


def resample_nearest(raster, grid):
    rows, cols = raster.shape
    x = grid.centroids
    ci = np.minimum((x[:, 0] * cols).astype(int), cols - 1)
    ri = np.minimum((x[:, 1] * rows).astype(int), rows - 1)
    return raster[ri, ci]


def load_raster(path, grid):
    """Nearest-cell resampling of a raster onto element centroids."""
    return ExpectedField("raster", resample_nearest(read_raster(path), grid))


# -- realization -------------------------------------------------------------


def sample_xi(R, seed):
    """Standard-normal KL coordinates for one sample seed."""
    return np.random.default_rng(seed).standard_normal(R)


def log_field(basis, expected, xi, grid):
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (basis.R,):
        raise ValueError(f"need {basis.R} KL coordinates, got {xi.size}")
    F = basis.evaluate(grid.centroids)
    return expected(grid) + F @ (np.sqrt(basis.values) * xi)


def realize_field(basis, expected, xi, grid):
    return np.exp(log_field(basis, expected, xi, grid))
