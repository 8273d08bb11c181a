"""Conditional-expectation engines.

Two realizations of E[. | W_t = x] are provided: Gauss-Hermite quadrature
against a function of the future Brownian state (grid solvers), and
polynomial least-squares regression against Monte Carlo samples (path
solvers).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .errors import DomainEscape, NonFiniteTarget


def _gaussian_moment(m: int) -> float:
    """E[Z^m] for standard normal Z: 0 for odd m, (m-1)!! for even m."""
    if m % 2 == 1:
        return 0.0
    out = 1.0
    for k in range(m - 1, 0, -2):
        out *= k
    return out


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite nodes and weights normalized against the standard normal.

    E[g(N(0,1))] is approximated by sum_k weights[k] * g(sqrt(2) * nodes[k]);
    the rule is exact for polynomials up to degree 2*n_nodes - 1, which is
    verified at construction.
    """

    n_nodes: int
    nodes: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be >= 1")
        x, w = hermgauss(self.n_nodes)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
            raise ValueError(
                f"Hermite node computation is unstable at n_nodes={self.n_nodes}; "
                "stay at or below 256"
            )
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "weights", w / np.sqrt(np.pi))
        self._verify()

    def _verify(self):
        points = np.sqrt(2.0) * self.nodes
        # Degrees above ~40 overflow points**m at large rules; the low moments
        # already pin down node/weight correctness.
        for m in range(min(2 * self.n_nodes, 40)):
            got = float(self.weights @ points**m)
            want = _gaussian_moment(m)
            scale = max(1.0, _gaussian_moment(m if m % 2 == 0 else m + 1))
            if abs(got - want) > 1e-12 * scale:
                raise AssertionError(
                    f"quadrature rule fails moment {m}: {got} vs {want}"
                )


def quad_condexp(surface_slice: Callable, x_now, h: float, rule: QuadratureRule):
    """E[slice(x + sqrt(h) * N(0,1))] for x = x_now, elapsed variance h.

    x_now may be a scalar or an array (vectorized over evaluation points).
    At h = 0 returns slice(x_now) exactly. The slice callable must accept
    arrays; a DomainEscape raised by the slice propagates.
    """
    if h < 0:
        raise ValueError(f"elapsed variance must be nonnegative, got {h}")
    x_now = np.asarray(x_now, dtype=float)
    if h == 0.0:
        out = surface_slice(x_now)
        return float(out) if x_now.ndim == 0 else np.asarray(out)
    points = x_now[..., None] + np.sqrt(2.0 * h) * rule.nodes
    vals = np.asarray(surface_slice(points))
    out = vals @ rule.weights
    return float(out) if x_now.ndim == 0 else out


class LinearGridFunction:
    """Piecewise-linear function on a node grid with linear tail continuation.

    Values outside [x_nodes[0], x_nodes[-1]] continue along the boundary
    slope; with extrapolate=False such evaluations raise DomainEscape.
    """

    def __init__(self, x_nodes: np.ndarray, values: np.ndarray, extrapolate: bool = True):
        self.x_nodes = np.asarray(x_nodes, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.extrapolate = extrapolate
        if self.x_nodes.ndim != 1 or self.x_nodes.size < 2:
            raise ValueError("need at least two spatial nodes")
        self._slope_lo = (self.values[1] - self.values[0]) / (
            self.x_nodes[1] - self.x_nodes[0]
        )
        self._slope_hi = (self.values[-1] - self.values[-2]) / (
            self.x_nodes[-1] - self.x_nodes[-2]
        )

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        below = x < self.x_nodes[0]
        above = x > self.x_nodes[-1]
        if not self.extrapolate and (np.any(below) or np.any(above)):
            raise DomainEscape(
                f"evaluation outside [{self.x_nodes[0]}, {self.x_nodes[-1]}]"
            )
        out = np.interp(x, self.x_nodes, self.values)
        if np.any(below):
            out = np.where(
                below, self.values[0] + self._slope_lo * (x - self.x_nodes[0]), out
            )
        if np.any(above):
            out = np.where(
                above, self.values[-1] + self._slope_hi * (x - self.x_nodes[-1]), out
            )
        return out if x.ndim else float(out)


@dataclass(frozen=True)
class RegressionBasis:
    """Polynomial basis of total degree <= degree in the conditioning state."""

    degree: int

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be >= 0")

    def exponents(self, dim: int):
        """Monomial exponent tuples, constant first, ascending total degree."""
        exps = []
        for total in range(self.degree + 1):
            for combo in combinations_with_replacement(range(dim), total):
                e = [0] * dim
                for j in combo:
                    e[j] += 1
                exps.append(tuple(e))
        return exps

    def design(self, states: np.ndarray) -> np.ndarray:
        """Design matrix for states of shape (n, dim)."""
        states = np.asarray(states, dtype=float)
        if states.ndim != 2:
            raise ValueError("design expects states of shape (n, dim)")
        cols = [
            np.prod(states**np.asarray(e), axis=1) for e in self.exponents(states.shape[1])
        ]
        return np.column_stack(cols)


@dataclass
class RegressionFit:
    """Least-squares conditional-mean estimate.

    coeffs are monomial coefficients (constant term first); stderr their
    standard errors. degree_used < basis degree signals a rank-deficient
    design matrix, also flagged by rank_deficient.
    """

    coeffs: np.ndarray
    stderr: np.ndarray
    degree_used: int
    rank_deficient: bool
    fitted: np.ndarray
    _basis: RegressionBasis
    _dim: int

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        pts = x.reshape(-1, self._dim)
        out = self._basis.design(pts) @ self.coeffs
        if scalar:
            return float(out[0])
        return out.reshape(x.shape if self._dim == 1 else x.shape[:-1])


def fit_conditional_means(states: np.ndarray, targets: np.ndarray, basis: RegressionBasis):
    """Least-squares conditional means of several targets on shared states.

    targets has shape (n, k): one column per quantity to condition. A single
    design matrix (and SVD) serves all columns, which is what the backward
    Monte Carlo sweeps need per time step. Returns (fitted (n, k),
    degree_used, rank_deficient) with the same degree-reduction behavior as
    regress_condexp.
    """
    targets = np.asarray(targets, dtype=float)
    if not np.all(np.isfinite(targets)):
        raise NonFiniteTarget("regression targets contain non-finite values")
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    degree = basis.degree
    while True:
        design = RegressionBasis(degree).design(states)
        n_cols = design.shape[1]
        coeffs, _, rank, _ = np.linalg.lstsq(design, targets, rcond=None)
        if rank == n_cols or degree == 0:
            break
        degree -= 1
    return design @ coeffs, degree, degree < basis.degree


def regress_condexp(
    targets: np.ndarray, states: np.ndarray, basis: RegressionBasis
) -> RegressionFit:
    """Project per-path targets onto a polynomial basis in the states.

    Returns the fitted conditional-mean estimate evaluated at the sample
    states together with the coefficients. When the design matrix is rank
    deficient (for example all states equal) the degree is reduced until it
    is full rank and the fit is flagged.
    """
    targets = np.asarray(targets, dtype=float)
    if not np.all(np.isfinite(targets)):
        raise NonFiniteTarget("regression targets contain non-finite values")
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    n, dim = states.shape
    if targets.shape[0] != n:
        raise ValueError("targets and states must have matching first dimension")

    degree = basis.degree
    while True:
        b = RegressionBasis(degree)
        design = b.design(states)
        n_cols = design.shape[1]
        if n <= n_cols:
            raise ValueError(
                f"need more than {n_cols} paths for degree {degree} in dim {dim}"
            )
        coeffs, residuals, rank, _ = np.linalg.lstsq(design, targets, rcond=None)
        if rank == n_cols or degree == 0:
            break
        degree -= 1

    fitted = design @ coeffs
    dof = max(n - n_cols, 1)
    sigma2 = float(np.sum((targets - fitted) ** 2)) / dof
    cov = sigma2 * np.linalg.pinv(design.T @ design)
    stderr = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return RegressionFit(
        coeffs=coeffs,
        stderr=stderr,
        degree_used=degree,
        rank_deficient=degree < basis.degree,
        fitted=fitted,
        _basis=RegressionBasis(degree),
        _dim=dim,
    )
