"""Standard backward solvers: the inner step of the anticipated machinery.

The grid solver represents (Y_t, Z_t) as functions of the Brownian state on
uniform spatial nodes and recurses with Gauss-Hermite conditioning; the Monte
Carlo solver carries per-path values and conditions by polynomial regression.
Both use the explicit update u(t_i) = E_i + g(t_i, E_i, v_i) dt with the
increment-weighted covariation estimate for v.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .condexp import LinearGridFunction, QuadratureRule, RegressionBasis, fit_conditional_means
from .errors import StabilityGuard
from .model import TimeGrid
from .paths import PathEnsemble


def default_x_max(grid: TimeGrid) -> float:
    """Six standard deviations of W at the far end of the horizon."""
    return 6.0 * np.sqrt(grid.span)


DEFAULT_N_X = 401


@dataclass
class ValueSurface:
    """Grid representation of (t, x) -> (Y, Z) on [0, T + K] x [-x_max, x_max].

    y_values and z_values have shape (n_steps + 1, n_x); rows at and beyond
    the index of T hold the terminal band data.
    """

    grid: TimeGrid
    x_nodes: np.ndarray
    y_values: np.ndarray
    z_values: np.ndarray

    def y_fn(self, i: int, extrapolate: bool = True) -> LinearGridFunction:
        return LinearGridFunction(self.x_nodes, self.y_values[i], extrapolate)

    def z_fn(self, i: int, extrapolate: bool = True) -> LinearGridFunction:
        return LinearGridFunction(self.x_nodes, self.z_values[i], extrapolate)

    def y_at(self, t: float, x) :
        return self.y_fn(self.grid.index_of(t))(x)

    def z_at(self, t: float, x):
        return self.z_fn(self.grid.index_of(t))(x)

    @property
    def y0(self) -> float:
        """Y at time 0 and Brownian state 0."""
        return float(self.y_fn(0)(0.0))

    def interior_mask(self, fraction: float = 0.5) -> np.ndarray:
        """Nodes with |x| <= fraction * x_max, away from truncation effects."""
        return np.abs(self.x_nodes) <= fraction * self.x_nodes[-1]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "x", "y", "z"])
            times = self.grid.times
            for i, t in enumerate(times):
                for j, x in enumerate(self.x_nodes):
                    writer.writerow(
                        [
                            f"{t:.12g}",
                            f"{x:.12g}",
                            f"{self.y_values[i, j]:.12g}",
                            f"{self.z_values[i, j]:.12g}",
                        ]
                    )


def make_x_nodes(x_max: float, n_x: int) -> np.ndarray:
    if n_x < 3:
        raise ValueError("need at least 3 spatial nodes")
    return np.linspace(-x_max, x_max, n_x)


def check_stability(grid: TimeGrid, lipschitz_c: Optional[float]):
    if lipschitz_c is not None and grid.dt * lipschitz_c >= 1.0:
        raise StabilityGuard(
            f"dt * C = {grid.dt * lipschitz_c} >= 1; refine the grid or lower C"
        )


def conditioning_points(x_nodes: np.ndarray, h: float, rule: QuadratureRule) -> np.ndarray:
    """Evaluation points x + sqrt(2 h) z_k, shape (n_x, n_nodes)."""
    return x_nodes[:, None] + np.sqrt(2.0 * h) * rule.nodes[None, :]


def solve_bsde_grid(
    g: Callable,
    terminal: Callable,
    grid: TimeGrid,
    rule: QuadratureRule,
    x_max: Optional[float] = None,
    n_x: int = DEFAULT_N_X,
    lipschitz_c: Optional[float] = None,
) -> ValueSurface:
    """Backward grid recursion for Y_t = xi + int g(s, Y, Z) ds - int Z dW.

    terminal maps the Brownian state at T to xi; g(t, y, z) must be
    vectorized over node arrays. Rows of the returned surface beyond T
    replicate the terminal function (a plain BSDE has no band data); their
    z rows are zero.
    """
    check_stability(grid, lipschitz_c)
    x_nodes = make_x_nodes(default_x_max(grid) if x_max is None else x_max, n_x)
    n_x = x_nodes.size
    dt = grid.dt
    i_end = grid.i_end

    y = np.zeros((grid.n_steps + 1, n_x))
    z = np.zeros((grid.n_steps + 1, n_x))
    term_vals = np.asarray(terminal(x_nodes), dtype=float)
    for i in range(i_end, grid.n_steps + 1):
        y[i] = term_vals

    pts = conditioning_points(x_nodes, dt, rule)
    incr = np.sqrt(2.0 * dt) * rule.nodes
    for i in range(i_end - 1, -1, -1):
        u_next = LinearGridFunction(x_nodes, y[i + 1])(pts)
        e_i = u_next @ rule.weights
        v_i = (u_next * incr) @ rule.weights / dt
        y[i] = e_i + np.asarray(g(float(grid.times[i]), e_i, v_i)) * dt
        z[i] = v_i

    return ValueSurface(grid, x_nodes, y, z)


def solve_bsde_mc(
    g: Callable,
    terminal_values: np.ndarray,
    ens: PathEnsemble,
    basis: RegressionBasis,
    i_end: Optional[int] = None,
):
    """Backward regression recursion on a path ensemble.

    terminal_values are the per-path values of xi at index i_end (defaults
    to the index of T). Returns (Y, Z): Y of shape (i_end + 1, n_paths), Z of
    shape (i_end + 1, n_paths) for one Brownian dimension and
    (i_end + 1, n_paths, d) otherwise; the Z row at i_end is zero. The
    generator is called as g(t, y, z) with per-path arrays.
    """
    grid = ens.grid
    if i_end is None:
        i_end = grid.i_end
    if not (0 < i_end <= grid.n_steps):
        raise ValueError(f"i_end={i_end} out of range")
    dt = grid.dt
    d = ens.dim
    n = ens.n_paths

    y = np.zeros((i_end + 1, n))
    z = np.zeros((i_end + 1, n)) if d == 1 else np.zeros((i_end + 1, n, d))
    y[i_end] = np.asarray(terminal_values, dtype=float)

    for i in range(i_end - 1, -1, -1):
        states = ens.states(i)
        dw = ens.increments(i)
        targets = np.column_stack([y[i + 1]] + [y[i + 1] * dw[:, c] / dt for c in range(d)])
        fitted, _, _ = fit_conditional_means(states, targets, basis)
        e_i = fitted[:, 0]
        z_i = fitted[:, 1] if d == 1 else fitted[:, 1:]
        y[i] = e_i + np.asarray(g(float(grid.times[i]), e_i, z_i)) * dt
        z[i] = z_i

    return y, z
