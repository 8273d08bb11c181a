"""Duality pricing of linear anticipated BSDEs and the control solver.

The duality route simulates the adjoint delayed SDE forward (unit mass at
the evaluation time, zero prehistory) and averages the closed-formula
payoff; the backward route solves the same linear equation on the grid. The
control solver applies the backward machinery to the pointwise-sup
generator over a finite control set and certifies it against simulated
objectives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .absde import solve_absde_grid
from .bsde import DEFAULT_N_X, ValueSurface, conditioning_points
from .condexp import LinearGridFunction, QuadratureRule
from .errors import EnsembleSpanMismatch, NegativeB, StabilityGuard
from .model import DelayFunction, Generator, ProblemSpec, TerminalData, TimeGrid
from .paths import PathEnsemble
from .sdde import SddeCoefficients, control_values, simulate_density, simulate_sdde


@dataclass(frozen=True)
class LinearAbsdeSpec:
    """Linear anticipated BSDE with constant anticipation lag theta.

    Coefficients are deterministic functions of time; q and p prescribe the
    Y and Z processes on the band [T, T + theta] as functions (t, w) of time
    and the Brownian state. bound_mu is the declared uniform bound on mu,
    mu_bar, sigma, sigma_bar.
    """

    mu: Callable
    mu_bar: Callable
    sigma: Callable
    sigma_bar: Callable
    l: Callable
    theta: float
    q: Callable
    p: Callable
    bound_mu: float

    def sdde_coefficients(self) -> SddeCoefficients:
        return SddeCoefficients(
            mu=self.mu,
            mu_bar=self.mu_bar,
            sigma=self.sigma,
            sigma_bar=self.sigma_bar,
            theta=self.theta,
            bound_mu=self.bound_mu,
        )

    def to_problem_spec(self, grid: TimeGrid) -> ProblemSpec:
        """The backward formulation: generator with anticipated Y and Z terms."""

        def f_plain(t, y, z, a_y, a_z):
            return (
                self.mu(t) * y
                + self.mu_bar(t) * a_y
                + z * self.sigma(t)
                + a_z * self.sigma_bar(t)
                + self.l(t)
            )

        increasing = all(
            self.mu_bar(float(t)) >= 0 for t in grid.times[: grid.i_end + 1]
        )
        gen = Generator(
            f_plain=f_plain,
            lipschitz_c=self.bound_mu,
            g_y=None,
            g_z=lambda z_future, z_now: z_future,
            g_z_joint=False,
            increasing_flag=increasing,
        )
        lag = DelayFunction.constant(self.theta, grid)
        terminal = TerminalData(xi=self.q, eta=self.p)
        return ProblemSpec(grid, lag, lag, gen, terminal)


def duality_price(
    spec: LinearAbsdeSpec, t: float, ens: PathEnsemble
) -> Tuple[float, float]:
    """Monte Carlo value of Y_t through the adjoint-SDDE closed formula.

    Simulates the adjoint state X with unit mass at t and zero prehistory,
    then averages X_T Q_T + int_t^T X_s l_s ds + the band correction
    int_T^{T+theta} (Q_s mu_bar(s - theta) + P_s sigma_bar(s - theta))
    X_{s - theta} ds, all Riemann sums on the grid. Returns (mean, stderr).
    """
    grid = ens.grid
    if ens.dim != 1:
        raise EnsembleSpanMismatch("duality pricing expects one Brownian dimension")
    dt = grid.dt
    i0 = grid.index_of(t)
    i_t_end = grid.i_end
    if i0 >= i_t_end:
        raise EnsembleSpanMismatch(f"evaluation time {t} must precede T = {grid.t_end}")

    half = dt / 2.0
    prehistory = lambda s: 1.0 if s >= t - half else 0.0
    x_paths = simulate_sdde(spec.sdde_coefficients(), prehistory, t, grid.span, ens)

    w = ens.values[:, :, 0]

    def x_at(i_global: int) -> np.ndarray:
        return x_paths.values[x_paths.i_start + (i_global - i0)]

    payoff = x_at(i_t_end) * np.asarray(spec.q(grid.t_end, w[i_t_end]), dtype=float)
    for i in range(i0, i_t_end):
        payoff = payoff + x_at(i) * spec.l(float(grid.times[i])) * dt
    for i in range(i_t_end, grid.n_steps):
        s = float(grid.times[i])
        q_s = np.asarray(spec.q(s, w[i]), dtype=float)
        p_s = np.asarray(spec.p(s, w[i]), dtype=float)
        weight = q_s * spec.mu_bar(s - spec.theta) + p_s * spec.sigma_bar(s - spec.theta)
        payoff = payoff + weight * x_at(i - round(spec.theta / dt)) * dt

    return float(np.mean(payoff)), float(np.std(payoff, ddof=1) / np.sqrt(ens.n_paths))


@dataclass(frozen=True)
class ControlProblem:
    """Finite-control stochastic control instance over horizon [0, T].

    control_set lists the admissible control values; alpha, b, sigma_c, l_c
    map (t, u) to coefficients (vectorized in u); q prescribes the terminal
    process on [T, T + theta]. b must map into the nonnegative reals and all
    four coefficient families must stay within bound_mu in magnitude.
    """

    control_set: Tuple[float, ...]
    alpha: Callable
    b: Callable
    sigma_c: Callable
    l_c: Callable
    q: Callable
    theta: float
    bound_mu: float

    def __post_init__(self):
        if len(self.control_set) == 0:
            raise ValueError("control_set must be nonempty")

    def check_b(self, grid: TimeGrid):
        for t in grid.times:
            for u in self.control_set:
                if float(self.b(float(t) - self.theta, u)) < 0 or float(self.b(float(t), u)) < 0:
                    raise NegativeB(f"b({t}, {u}) < 0")

    def hamiltonian_terms(self, t: float, u, y, z, a_y):
        return (
            np.asarray(self.alpha(t, u)) * y
            + np.asarray(self.sigma_c(t, u)) * z
            + np.asarray(self.b(t, u)) * a_y
            + np.asarray(self.l_c(t, u))
        )

    def sup_generator(self) -> Generator:
        """Pointwise max of the per-control linear drivers, increasing in a_y."""

        def f_plain(t, y, z, a_y, a_z):
            vals = [self.hamiltonian_terms(t, u, y, z, a_y) for u in self.control_set]
            return np.max(np.stack([np.asarray(v, dtype=float) for v in vals]), axis=0)

        return Generator(
            f_plain=f_plain,
            lipschitz_c=self.bound_mu,
            g_y=None,
            g_z=None,
            increasing_flag=True,
        )

    def to_problem_spec(self, grid: TimeGrid) -> ProblemSpec:
        lag = DelayFunction.constant(self.theta, grid)
        return ProblemSpec(grid, lag, lag, self.sup_generator(), TerminalData.of_xi(self.q))


def value_function(
    cp: ControlProblem,
    grid: TimeGrid,
    rule: Optional[QuadratureRule] = None,
    x_max: Optional[float] = None,
    n_x: int = DEFAULT_N_X,
) -> ValueSurface:
    """Grid solve of the sup-generator anticipated BSDE (the value function)."""
    cp.check_b(grid)
    if grid.dt * 3.0 * cp.bound_mu >= 1.0:
        raise StabilityGuard(
            f"dt * 3 mu = {grid.dt * 3 * cp.bound_mu} >= 1; refine the grid"
        )
    return solve_absde_grid(cp.to_problem_spec(grid), rule, x_max=x_max, n_x=n_x)


@dataclass
class FeedbackControl:
    """Per-(time, node) control table usable as a feedback control.

    values_at clamps time indices into [0, i_end) and snaps each Brownian
    state to its nearest node, so the prehistory convention (extend by the
    value at time zero) and band times are both covered.
    """

    table: np.ndarray
    x_nodes: np.ndarray
    grid: TimeGrid

    def values_at(self, i: int, states: np.ndarray) -> np.ndarray:
        i = min(max(i, 0), self.table.shape[0] - 1)
        x = np.asarray(states, dtype=float)
        if x.ndim == 2:
            x = x[:, 0]
        dx = self.x_nodes[1] - self.x_nodes[0]
        idx = np.clip(
            np.round((x - self.x_nodes[0]) / dx).astype(int), 0, self.x_nodes.size - 1
        )
        return self.table[i, idx]


def extract_control(
    cp: ControlProblem,
    surface: ValueSurface,
    epsilon: float = 0.0,
    rule: Optional[QuadratureRule] = None,
) -> FeedbackControl:
    """Argmax control at each (t, x) of the value surface.

    With a finite control set the selection is exact, so the epsilon of the
    near-optimal-control construction is attained at 0; the argument is kept
    for interface symmetry and ignored.
    """
    del epsilon
    rule = rule or QuadratureRule(16)
    grid = surface.grid
    dt = grid.dt
    lag = round(cp.theta / dt)
    i_end = grid.i_end
    x_nodes = surface.x_nodes
    controls = np.asarray(cp.control_set, dtype=float)

    pts = conditioning_points(x_nodes, cp.theta, rule)
    table = np.empty((i_end, x_nodes.size))
    for i in range(i_end):
        t = float(grid.times[i])
        y_i = surface.y_values[i]
        v_i = surface.z_values[i]
        if lag == 0:
            a_y = y_i
        else:
            a_y = LinearGridFunction(x_nodes, surface.y_values[i + lag])(pts) @ rule.weights
        scores = np.stack(
            [cp.hamiltonian_terms(t, u, y_i, v_i, a_y) for u in controls]
        )
        table[i] = controls[np.argmax(scores, axis=0)]
    return FeedbackControl(table, x_nodes, grid)


def evaluate_objective(cp: ControlProblem, ctrl, ens: PathEnsemble) -> Tuple[float, float]:
    """Simulated objective J(u): terminal payoff, band term and running cost.

    ctrl is a constant, a per-grid-point path over [0, T + theta], or a
    FeedbackControl. Returns (mean, stderr). The control's prehistory is
    extended by its value at time zero; the delayed state is zero there, so
    this choice cannot move the payoff.
    """
    grid = ens.grid
    if ens.dim != 1:
        raise EnsembleSpanMismatch("objective evaluation expects one Brownian dimension")
    cp.check_b(grid)
    dt = grid.dt
    i_end = grid.i_end
    k_theta = round(cp.theta / dt)

    x_paths = simulate_density(ctrl, cp.alpha, cp.b, cp.sigma_c, cp.theta, ens, t0=0.0)
    w = ens.values[:, :, 0]

    def x_at(i: int) -> np.ndarray:
        return x_paths.values[x_paths.i_start + i]

    payoff = x_at(i_end) * np.asarray(cp.q(grid.t_end, w[i_end]), dtype=float)
    for i in range(i_end):
        t = float(grid.times[i])
        u_i = control_values(ctrl, i, w[i], grid.n_steps)
        payoff = payoff + x_at(i) * np.asarray(cp.l_c(t, u_i)) * dt
    for i in range(i_end, grid.n_steps):
        s = float(grid.times[i])
        u_del = control_values(ctrl, i - k_theta, w[i - k_theta], grid.n_steps)
        b_del = np.asarray(cp.b(s - cp.theta, u_del), dtype=float)
        if np.any(b_del < 0):
            raise NegativeB(f"b({s - cp.theta}, u) < 0")
        payoff = payoff + x_at(i - k_theta) * np.asarray(cp.q(s, w[i]), dtype=float) * b_del * dt

    return float(np.mean(payoff)), float(np.std(payoff, ddof=1) / np.sqrt(ens.n_paths))
