import csv

import numpy as np
import pytest

from absdelab.errors import EnsembleSpanMismatch, MisalignedDelay, NegativeB
from absdelab.model import TimeGrid
from absdelab.paths import generate_ensemble
from absdelab.sdde import (
    SddeCoefficients,
    simulate_density,
    simulate_sdde,
    write_path_stats_csv,
)

GRID = TimeGrid(1.0, 0.5, 150)


def const(v):
    return lambda t: v


def make_coef(mu=0.0, mu_bar=0.0, sigma=0.0, sigma_bar=0.0, theta=0.5, bound=1.0):
    return SddeCoefficients(const(mu), const(mu_bar), const(sigma), const(sigma_bar), theta, bound)


def test_zero_coefficients_keep_prehistory_endpoint():
    ens = generate_ensemble(GRID, 200, 1, seed=1)
    sp = simulate_sdde(make_coef(), lambda t: 2.5, 0.0, 1.5, ens)
    np.testing.assert_array_equal(sp.values[sp.i_start :], 2.5)


def test_gbm_mean_matches_exponential():
    mu, sigma = 0.08, 0.25
    n = 100_000
    ens = generate_ensemble(GRID, n, 1, seed=99)
    sp = simulate_sdde(make_coef(mu=mu, sigma=sigma), lambda t: 1.0, 0.0, 1.5, ens)
    terminal = sp.values[-1]
    se = terminal.std(ddof=1) / np.sqrt(n)
    assert abs(terminal.mean() - np.exp(mu * 1.5)) <= 3 * se


def test_adjoint_window_matches_plain_sde_bitwise():
    # With unit mass at the start and zero prehistory, the delayed terms
    # vanish identically on [t, t + theta], so the paths coincide with the
    # no-delay simulation on the same ensemble, float for float.
    theta = 0.5
    ens = generate_ensemble(GRID, 500, 1, seed=3)
    pre = lambda s: 1.0 if s >= 0.5 - GRID.dt / 2 else 0.0
    full = simulate_sdde(
        make_coef(mu=0.1, mu_bar=0.4, sigma=0.2, sigma_bar=0.3, theta=theta),
        pre, 0.5, 1.5, ens,
    )
    plain = simulate_sdde(
        make_coef(mu=0.1, mu_bar=0.0, sigma=0.2, sigma_bar=0.0, theta=theta),
        pre, 0.5, 1.5, ens,
    )
    i_window_end = full.i_start + round(theta / GRID.dt)
    np.testing.assert_array_equal(
        full.values[: i_window_end + 1], plain.values[: i_window_end + 1]
    )
    # Beyond t + theta the delayed feedback kicks in and the paths separate.
    assert not np.array_equal(full.values[-1], plain.values[-1])


def test_prehistory_linearity():
    ens = generate_ensemble(GRID, 300, 1, seed=4)
    coef = make_coef(mu=0.1, mu_bar=0.3, sigma=0.15, sigma_bar=0.1)
    base = simulate_sdde(coef, lambda t: 1.0 + 0.2 * t, 0.5, 1.5, ens)
    scaled = simulate_sdde(coef, lambda t: 3.0 * (1.0 + 0.2 * t), 0.5, 1.5, ens)
    np.testing.assert_allclose(scaled.values, 3.0 * base.values, rtol=1e-12)


def test_weak_convergence_first_order():
    # Deterministic sub-case (sigma = 0): the Euler mean error against
    # exp(mu T) halves with dt.
    mu = 0.4
    errors = []
    dts = []
    for n_steps in (30, 60, 120):
        grid = TimeGrid(1.0, 0.5, n_steps)
        ens = generate_ensemble(grid, 2, 1, seed=5)
        sp = simulate_sdde(
            SddeCoefficients(const(mu), const(0.0), const(0.0), const(0.0), 0.5, 1.0),
            lambda t: 1.0, 0.0, 1.5, ens,
        )
        errors.append(abs(sp.values[-1, 0] - np.exp(mu * 1.5)))
        dts.append(grid.dt)
    slope = np.polyfit(np.log(dts), np.log(errors), 1)[0]
    assert abs(slope - 1.0) <= 0.3


def test_misaligned_theta_rejected():
    ens = generate_ensemble(GRID, 10, 1, seed=6)
    with pytest.raises(MisalignedDelay):
        simulate_sdde(make_coef(theta=0.5 + GRID.dt / 3), lambda t: 1.0, 0.0, 1.5, ens)


def test_span_mismatch_rejected():
    ens = generate_ensemble(GRID, 10, 1, seed=7)
    with pytest.raises(EnsembleSpanMismatch):
        simulate_sdde(make_coef(), lambda t: 1.0, 1.5, 1.5, ens)


def test_coefficient_bound_enforced():
    ens = generate_ensemble(GRID, 10, 1, seed=8)
    bad = make_coef(mu=2.0, bound=1.0)
    with pytest.raises(ValueError):
        simulate_sdde(bad, lambda t: 1.0, 0.0, 1.5, ens)


def test_density_trivial_controls():
    ens = generate_ensemble(GRID, 100, 1, seed=9)
    sp = simulate_density(0.5, lambda t, u: 0.0, lambda t, u: 0.0, lambda t, u: 0.0, 0.5, ens)
    np.testing.assert_array_equal(sp.values[sp.i_start :], 1.0)
    np.testing.assert_array_equal(sp.values[: sp.i_start], 0.0)


def test_density_reduces_to_plain_sde():
    mu, sigma = 0.12, 0.2
    ens = generate_ensemble(GRID, 400, 1, seed=10)
    dens = simulate_density(
        0.0, lambda t, u: mu, lambda t, u: 0.0, lambda t, u: sigma, 0.5, ens
    )
    pre = lambda s: 1.0 if s >= -GRID.dt / 2 else 0.0
    plain = simulate_sdde(make_coef(mu=mu, sigma=sigma), pre, 0.0, 1.5, ens)
    np.testing.assert_array_equal(dens.values, plain.values)


class _PrehistoryControl:
    """Constant control after time zero, configurable before it."""

    def __init__(self, before, after):
        self.before = before
        self.after = after

    def values_at(self, i, states):
        return self.before if i < 0 else self.after


def test_density_ignores_control_prehistory():
    # The delayed state is zero wherever the prehistory control is read, so
    # two different prehistories give identical paths everywhere.
    ens = generate_ensemble(GRID, 300, 1, seed=11)
    args = (lambda t, u: 0.1 * u, lambda t, u: 0.2 + 0.1 * u, lambda t, u: 0.1, 0.5, ens)
    a = simulate_density(_PrehistoryControl(0.0, 1.0), *args)
    b = simulate_density(_PrehistoryControl(9.0, 1.0), *args)
    np.testing.assert_array_equal(a.values, b.values)


def test_density_rejects_negative_b():
    ens = generate_ensemble(GRID, 10, 1, seed=12)
    with pytest.raises(NegativeB):
        simulate_density(1.0, lambda t, u: 0.0, lambda t, u: -0.1, lambda t, u: 0.0, 0.5, ens)


def test_path_stats_csv(tmp_path):
    ens = generate_ensemble(GRID, 200, 1, seed=13)
    sp = simulate_sdde(make_coef(mu=0.1, sigma=0.2), lambda t: 1.0, 0.0, 1.5, ens)
    out = tmp_path / "stats.csv"
    write_path_stats_csv(sp, out)
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == sp.times.size
    mid = len(rows) // 2
    assert float(rows[mid]["mean"]) == pytest.approx(sp.values[mid].mean(), rel=1e-9)
    assert float(rows[0]["q50"]) == pytest.approx(np.median(sp.values[0]), abs=1e-12)
