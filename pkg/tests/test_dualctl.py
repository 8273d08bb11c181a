import numpy as np
import pytest

from absdelab import catalog
from absdelab.absde import solve_absde_grid
from absdelab.condexp import QuadratureRule
from absdelab.dualctl import (
    ControlProblem,
    LinearAbsdeSpec,
    duality_price,
    evaluate_objective,
    extract_control,
    value_function,
)
from absdelab.errors import EnsembleSpanMismatch, NegativeB, StabilityGuard
from absdelab.model import TimeGrid
from absdelab.paths import generate_ensemble

RULE = QuadratureRule(16)


def _linear(mu=0.0, mu_bar=0.0, sigma=0.0, sigma_bar=0.0, level=0.0, q=None, p=None, bound=0.5):
    return LinearAbsdeSpec(
        mu=lambda t: mu,
        mu_bar=lambda t: mu_bar,
        sigma=lambda t: sigma,
        sigma_bar=lambda t: sigma_bar,
        l=lambda t: level,
        theta=0.5,
        q=q or (lambda t, w: np.ones_like(np.asarray(w, dtype=float))),
        p=p or (lambda t, w: np.zeros_like(np.asarray(w, dtype=float))),
        bound_mu=bound,
    )


def test_duality_all_zero_coefficients_unit_payoff():
    grid = TimeGrid(1.0, 0.5, 150)
    ens = generate_ensemble(grid, 500, 1, seed=61)
    price, se = duality_price(_linear(), 0.0, ens)
    assert price == 1.0
    assert se == 0.0


def test_duality_deterministic_exponential():
    # mu_bar = sigma_bar = sigma = l = 0, Q = q0: the adjoint state is the
    # deterministic Euler product; compare both against it exactly and
    # against the continuous exponential with a first-order allowance.
    mu, q0 = 0.3, 2.0
    grid = TimeGrid(1.0, 0.5, 150)
    ens = generate_ensemble(grid, 100, 1, seed=62)
    lin = _linear(mu=mu, q=lambda t, w: np.full_like(np.asarray(w, dtype=float), q0))
    price, se = duality_price(lin, 0.0, ens)
    k = grid.i_end
    euler_exact = q0 * (1.0 + mu * grid.dt) ** k
    assert price == pytest.approx(euler_exact, abs=1e-12)
    assert abs(price - q0 * np.exp(mu * 1.0)) <= 2 * q0 * mu**2 * 1.0 * grid.dt


def test_duality_noisy_exponential_within_stderr():
    mu, sigma, q0 = 0.2, 0.25, 1.5
    grid = TimeGrid(1.0, 0.5, 300)
    ens = generate_ensemble(grid, 100_000, 1, seed=63)
    lin = _linear(mu=mu, sigma=sigma, q=lambda t, w: np.full_like(np.asarray(w, dtype=float), q0))
    price, se = duality_price(lin, 0.0, ens)
    assert abs(price - q0 * np.exp(mu * 1.0)) <= 3 * se + 2 * q0 * mu**2 * grid.dt


def test_duality_matches_grid_on_full_linear_instance():
    lin = catalog.linear_spec()
    grid = TimeGrid(1.0, lin.theta, 300)
    surf = solve_absde_grid(lin.to_problem_spec(grid))
    ens = generate_ensemble(grid, 100_000, 1, seed=64)
    price, se = duality_price(lin, 0.0, ens)
    assert abs(price - surf.y0) <= 3 * se + 5 * grid.dt


def test_duality_midhorizon_evaluation():
    # At t > 0 the path average estimates the unconditional mean of Y_t, so
    # the grid oracle is the t-row averaged over the Gaussian law of W_t.
    from absdelab.condexp import quad_condexp

    lin = catalog.linear_spec()
    grid = TimeGrid(1.0, lin.theta, 300)
    surf = solve_absde_grid(lin.to_problem_spec(grid))
    ens = generate_ensemble(grid, 60_000, 1, seed=65)
    t_eval = 0.5
    price, se = duality_price(lin, t_eval, ens)
    mean_y = quad_condexp(surf.y_fn(grid.index_of(t_eval)), 0.0, t_eval, RULE)
    assert abs(price - float(mean_y)) <= 3 * se + 5 * grid.dt


def test_duality_rejects_late_start():
    grid = TimeGrid(1.0, 0.5, 150)
    ens = generate_ensemble(grid, 100, 1, seed=66)
    with pytest.raises(EnsembleSpanMismatch):
        duality_price(_linear(), 1.0, ens)


def _two_control_problem():
    return ControlProblem(
        control_set=(0.0, 1.0),
        alpha=lambda t, u: 0.05 + 0.1 * np.asarray(u),
        b=lambda t, u: 0.1 + 0.15 * np.asarray(u),
        sigma_c=lambda t, u: 0.2 + 0.0 * np.asarray(u),
        l_c=lambda t, u: 0.05 + 0.1 * np.asarray(u),
        q=lambda t, w: 0.6 + 0.2 * np.asarray(w, dtype=float) ** 2,
        theta=0.5,
        bound_mu=0.5,
    )


def test_value_function_singleton_equals_linear_solve():
    grid = TimeGrid(1.0, 0.5, 150)
    cp = _two_control_problem()
    single = ControlProblem(
        control_set=(1.0,),
        alpha=cp.alpha, b=cp.b, sigma_c=cp.sigma_c, l_c=cp.l_c, q=cp.q,
        theta=cp.theta, bound_mu=cp.bound_mu,
    )
    surf_sup = value_function(single, grid, RULE)
    spec = single.to_problem_spec(grid)
    surf_direct = solve_absde_grid(spec, RULE)
    np.testing.assert_allclose(surf_sup.y_values, surf_direct.y_values, atol=1e-12)


def test_value_function_dominated_control():
    grid = TimeGrid(1.0, 0.5, 150)
    cp = _two_control_problem()
    single = ControlProblem(
        control_set=(1.0,),
        alpha=cp.alpha, b=cp.b, sigma_c=cp.sigma_c, l_c=cp.l_c, q=cp.q,
        theta=cp.theta, bound_mu=cp.bound_mu,
    )
    v_two = value_function(cp, grid, RULE)
    v_one = value_function(single, grid, RULE)
    assert np.min(v_two.y_values) >= 0.0
    np.testing.assert_allclose(v_two.y_values, v_one.y_values, atol=1e-12)


def test_extract_control_tables():
    grid = TimeGrid(1.0, 0.5, 150)
    cp = _two_control_problem()
    surf = value_function(cp, grid, RULE)
    fb = extract_control(cp, surf, rule=RULE)
    assert fb.table.shape == (grid.i_end, surf.x_nodes.size)
    np.testing.assert_array_equal(fb.table, 1.0)

    single = ControlProblem(
        control_set=(0.3,),
        alpha=cp.alpha, b=cp.b, sigma_c=cp.sigma_c, l_c=cp.l_c, q=cp.q,
        theta=cp.theta, bound_mu=cp.bound_mu,
    )
    surf1 = value_function(single, grid, RULE)
    fb1 = extract_control(single, surf1, rule=RULE)
    np.testing.assert_array_equal(fb1.table, 0.3)


def test_evaluate_objective_zero_data():
    grid = TimeGrid(1.0, 0.5, 150)
    cp = ControlProblem(
        control_set=(0.5,),
        alpha=lambda t, u: 0.1,
        b=lambda t, u: 0.2,
        sigma_c=lambda t, u: 0.1,
        l_c=lambda t, u: 0.0,
        q=lambda t, w: np.zeros_like(np.asarray(w, dtype=float)),
        theta=0.5,
        bound_mu=0.5,
    )
    ens = generate_ensemble(grid, 400, 1, seed=67)
    j, se = evaluate_objective(cp, 0.5, ens)
    assert j == 0.0
    assert se == 0.0


def test_evaluate_objective_deterministic_oracle():
    # b = sigma = 0 with constant alpha and l: X is the deterministic Euler
    # product and J = q0 X_T + l sum X dt; the discrete oracle is exact and
    # the continuous formula q0 e^{aT} + l (e^{aT} - 1)/a is matched to
    # first order.
    alpha, level, q0 = 0.3, 0.2, 1.2
    grid = TimeGrid(1.0, 0.5, 300)
    cp = ControlProblem(
        control_set=(0.0,),
        alpha=lambda t, u: alpha,
        b=lambda t, u: 0.0 * np.asarray(u),
        sigma_c=lambda t, u: 0.0,
        l_c=lambda t, u: level,
        q=lambda t, w: np.full_like(np.asarray(w, dtype=float), q0),
        theta=0.5,
        bound_mu=0.5,
    )
    ens = generate_ensemble(grid, 50, 1, seed=68)
    j, se = evaluate_objective(cp, 0.0, ens)
    dt = grid.dt
    x = 1.0
    j_oracle = 0.0
    for _ in range(grid.i_end):
        j_oracle += x * level * dt
        x *= 1.0 + alpha * dt
    j_oracle += x * q0
    assert se == 0.0
    assert j == pytest.approx(j_oracle, abs=1e-12)
    cont = q0 * np.exp(alpha) + level * (np.exp(alpha) - 1.0) / alpha
    assert abs(j - cont) <= 3e-3


def test_objective_never_beats_value_function():
    grid = TimeGrid(1.0, 0.5, 150)
    cp = catalog.control_problem(n_controls=5)
    surf = value_function(cp, grid, RULE)
    ens = generate_ensemble(grid, 30_000, 1, seed=69)
    for u in cp.control_set:
        j, se = evaluate_objective(cp, float(u), ens)
        assert j <= surf.y0 + 3 * se + 5 * grid.dt


def test_control_problem_guards():
    grid = TimeGrid(1.0, 0.5, 150)
    with pytest.raises(ValueError):
        ControlProblem(
            control_set=(),
            alpha=lambda t, u: 0.0, b=lambda t, u: 0.0, sigma_c=lambda t, u: 0.0,
            l_c=lambda t, u: 0.0, q=lambda t, w: w, theta=0.5, bound_mu=0.5,
        )
    bad_b = ControlProblem(
        control_set=(0.0,),
        alpha=lambda t, u: 0.0,
        b=lambda t, u: -0.1,
        sigma_c=lambda t, u: 0.0,
        l_c=lambda t, u: 0.0,
        q=lambda t, w: np.asarray(w, dtype=float),
        theta=0.5,
        bound_mu=0.5,
    )
    with pytest.raises(NegativeB):
        value_function(bad_b, grid, RULE)
    hot = ControlProblem(
        control_set=(0.0,),
        alpha=lambda t, u: 0.0,
        b=lambda t, u: 0.0,
        sigma_c=lambda t, u: 0.0,
        l_c=lambda t, u: 0.0,
        q=lambda t, w: np.asarray(w, dtype=float),
        theta=0.5,
        bound_mu=60.0,
    )
    with pytest.raises(StabilityGuard):
        value_function(hot, grid, RULE)
