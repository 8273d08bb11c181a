import numpy as np
import pytest

from absdelab.bsde import solve_bsde_grid, solve_bsde_mc
from absdelab.condexp import QuadratureRule, RegressionBasis
from absdelab.errors import StabilityGuard
from absdelab.model import TimeGrid
from absdelab.paths import generate_ensemble

RULE = QuadratureRule(16)
GRID = TimeGrid(1.0, 0.0, 100)
BASIS = RegressionBasis(4)


def test_grid_martingale_representation():
    # xi = W_T with no driver: u(t, x) = x and v = 1; linear data keep both
    # the quadrature and the interpolation exact.
    surf = solve_bsde_grid(lambda t, y, z: 0.0 * y, lambda x: x, GRID, RULE)
    mask = surf.interior_mask(0.5)
    for i in range(GRID.i_end + 1):
        assert np.max(np.abs(surf.y_values[i][mask] - surf.x_nodes[mask])) <= 1e-6
    for i in range(GRID.i_end):
        assert np.max(np.abs(surf.z_values[i][mask] - 1.0)) <= 1e-6


def test_grid_constant_driver_shifts_by_remaining_time():
    c = 0.7
    base = solve_bsde_grid(lambda t, y, z: 0.0 * y, lambda x: x**2, GRID, RULE)
    shifted = solve_bsde_grid(lambda t, y, z: c + 0.0 * y, lambda x: x**2, GRID, RULE)
    for i in range(GRID.i_end + 1):
        expect = base.y_values[i] + c * (GRID.t_end - GRID.times[i])
        np.testing.assert_allclose(shifted.y_values[i], expect, atol=1e-10)


def test_grid_linear_decay_oracle():
    # g = -r y with xi = 1 solves y' = r y backward: u(t, x) = exp(-r (T-t)).
    r = 0.5
    surf = solve_bsde_grid(
        lambda t, y, z: -r * y, lambda x: np.ones_like(x), GRID, RULE, lipschitz_c=r
    )
    worst = 0.0
    for i in range(GRID.i_end + 1):
        expect = np.exp(-r * (GRID.t_end - GRID.times[i]))
        worst = max(worst, float(np.max(np.abs(surf.y_values[i] - expect))))
    assert worst <= 2 * r * r * GRID.dt * GRID.t_end


def test_stability_guard():
    coarse = TimeGrid(1.0, 0.0, 10)
    with pytest.raises(StabilityGuard):
        solve_bsde_grid(lambda t, y, z: -12.0 * y, lambda x: x, coarse, RULE, lipschitz_c=12.0)


def _mc_setup(n_paths, seed):
    ens = generate_ensemble(GRID, n_paths, 1, seed)
    return ens, ens.values[:, :, 0]


def test_mc_martingale():
    ens, w = _mc_setup(50_000, 21)
    y, z = solve_bsde_mc(lambda t, yy, zz: 0.0 * yy, w[GRID.i_end], ens, BASIS)
    se = w[GRID.i_end].std(ddof=1) / np.sqrt(ens.n_paths)
    assert abs(np.mean(y[0])) <= 3 * se
    # Z should hover near 1 along the paths.
    assert abs(np.mean(z[GRID.i_end // 2]) - 1.0) <= 0.05


def test_mc_zero_data_exact():
    ens, w = _mc_setup(2000, 22)
    y, z = solve_bsde_mc(lambda t, yy, zz: 0.0 * yy, np.zeros(ens.n_paths), ens, BASIS)
    np.testing.assert_array_equal(y, 0.0)
    np.testing.assert_array_equal(z, 0.0)


def test_mc_constant_driver():
    c = 0.9
    ens, w = _mc_setup(50_000, 23)
    y0_base, _ = solve_bsde_mc(lambda t, yy, zz: 0.0 * yy, w[GRID.i_end] ** 2, ens, BASIS)
    y0_shift, _ = solve_bsde_mc(lambda t, yy, zz: c + 0.0 * yy, w[GRID.i_end] ** 2, ens, BASIS)
    np.testing.assert_allclose(
        np.mean(y0_shift[0]) - np.mean(y0_base[0]), c * GRID.t_end, atol=1e-10
    )


def test_cross_solver_agreement():
    # Grid and Monte Carlo answers agree within Monte Carlo noise plus a
    # first-order bias allowance on three linear problems.
    cases = [
        (lambda t, y, z: 0.0 * y, lambda x: x, 0.0),
        (lambda t, y, z: -0.5 * y, lambda x: np.ones_like(x), 0.5),
        (lambda t, y, z: 0.2 * z, lambda x: x**2, 0.2),
    ]
    ens, w = _mc_setup(100_000, 24)
    for k, (g, terminal, c) in enumerate(cases):
        surf = solve_bsde_grid(g, terminal, GRID, RULE, lipschitz_c=c or None)
        y, _ = solve_bsde_mc(g, terminal(w[GRID.i_end]), ens, BASIS)
        se = np.std(terminal(w[GRID.i_end]), ddof=1) / np.sqrt(ens.n_paths)
        assert abs(surf.y0 - float(np.mean(y[0]))) <= 3 * se + 5 * GRID.dt, f"case {k}"


def test_grid_comparison_property():
    # Ordered terminal data and drivers give ordered solutions up to the
    # scheme's first-order slack (the discrete comparison lemma).
    rng = np.random.default_rng(31)
    for _ in range(8):
        a1 = rng.uniform(-0.4, 0.4)
        b1 = rng.uniform(-0.4, 0.4)
        lift_g = rng.uniform(0.0, 0.5)
        lift_xi = rng.uniform(0.0, 0.8)
        q = rng.uniform(-0.6, 0.6, size=2)

        def g2(t, y, z):
            return a1 * y + b1 * z

        def g1(t, y, z):
            return g2(t, y, z) + lift_g

        def xi2(x):
            return q[0] * x + q[1] * x**2

        def xi1(x):
            return xi2(x) + lift_xi

        c = max(abs(a1), abs(b1))
        s1 = solve_bsde_grid(g1, xi1, GRID, RULE, lipschitz_c=c or None)
        s2 = solve_bsde_grid(g2, xi2, GRID, RULE, lipschitz_c=c or None)
        assert float(np.max(s2.y_values - s1.y_values)) <= 5 * GRID.dt


def test_mc_two_dimensional_brownian():
    grid = TimeGrid(1.0, 0.0, 40)
    ens = generate_ensemble(grid, 40_000, 2, seed=25)
    w = ens.values
    terminal = w[grid.i_end, :, 0] + w[grid.i_end, :, 1]
    y, z = solve_bsde_mc(lambda t, yy, zz: 0.0 * yy, terminal, ens, RegressionBasis(2))
    se = terminal.std(ddof=1) / np.sqrt(ens.n_paths)
    assert abs(np.mean(y[0])) <= 3 * se
    mid = grid.i_end // 2
    assert z.shape == (grid.i_end + 1, ens.n_paths, 2)
    assert abs(np.mean(z[mid, :, 0]) - 1.0) <= 0.05
    assert abs(np.mean(z[mid, :, 1]) - 1.0) <= 0.05


def test_surface_csv_roundtrip(tmp_path):
    surf = solve_bsde_grid(lambda t, y, z: 0.0 * y, lambda x: x, TimeGrid(0.5, 0.0, 5), RULE, n_x=11)
    out = tmp_path / "surface.csv"
    surf.to_csv(out)
    rows = out.read_text().strip().split("\n")
    assert rows[0] == "t,x,y,z"
    assert len(rows) == 1 + 6 * 11
