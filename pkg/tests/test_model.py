import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from absdelab.errors import (
    HorizonViolation,
    JointTransformDelayMismatch,
    NonFiniteGenerator,
    NonGridAnticipation,
    MisalignedDelay,
)
from absdelab.model import (
    DelayFunction,
    Generator,
    ProblemSpec,
    TerminalData,
    TimeGrid,
    estimate_lipschitz,
    validate_delay,
)


def test_time_grid_basics():
    grid = TimeGrid(1.0, 0.5, 300)
    assert grid.dt == pytest.approx(0.005)
    assert grid.i_end == 200
    assert grid.times[0] == 0.0
    assert grid.times[-1] == pytest.approx(1.5)
    assert grid.index_of(1.0) == 200


def test_time_grid_rejects_misaligned_horizon():
    # 1.5 / 100 = 0.015 does not divide T = 1.
    with pytest.raises(MisalignedDelay):
        TimeGrid(1.0, 0.5, 100)


def test_time_grid_rejects_bad_parameters():
    with pytest.raises(ValueError):
        TimeGrid(-1.0, 0.5, 10)
    with pytest.raises(ValueError):
        TimeGrid(1.0, -0.1, 10)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0.0, 0)


def test_constant_delay_full_anticipation_window():
    # delta == K is the largest admissible constant delay.
    grid = TimeGrid(1.0, 0.5, 60)
    report = validate_delay(DelayFunction.constant(0.5, grid), grid)
    assert report.ok
    assert report.k_eff == pytest.approx(0.5)
    assert report.l_eff == 1.0


def test_zero_delay_is_identity_shift():
    grid = TimeGrid(1.0, 0.5, 60)
    report = validate_delay(DelayFunction.zero(grid), grid)
    assert report.ok
    assert report.k_eff == 0.0
    assert report.l_eff == 1.0


@settings(max_examples=40, deadline=None)
@given(
    n_to_t=st.integers(min_value=5, max_value=50),
    n_band=st.integers(min_value=1, max_value=25),
    dt=st.sampled_from([0.01, 0.02, 0.05]),
    frac=st.floats(min_value=0.0, max_value=1.0),
)
def test_constant_delay_property(n_to_t, n_band, dt, frac):
    grid = TimeGrid(n_to_t * dt, n_band * dt, n_to_t + n_band)
    c = frac * grid.k_extra
    delay = DelayFunction.constant(c, grid)
    report = validate_delay(delay, grid)
    assert report.ok
    assert report.l_eff == 1.0
    assert report.k_eff == pytest.approx(grid.round_lag(c) * grid.dt, abs=1e-12)


def test_stalled_shift_fails_change_of_variable():
    # delta(s) = T + K - s makes s + delta(s) constant: condition (i) holds
    # but no finite L can exist. Brute-force oracle: with g the indicator of
    # the single cell at T + K, the left integral grows linearly in T - t
    # while the right side stays one cell wide, so the required L grows
    # without bound as the grid refines.
    required = []
    for n_steps in (30, 60, 120):
        grid = TimeGrid(1.0, 0.5, n_steps)
        times = grid.times[: grid.i_end + 1]
        table = grid.span - times
        delay = DelayFunction.from_table(table, grid, kind="monotone-shift")
        report = validate_delay(delay, grid)
        assert not report.ok
        assert report.l_eff is None

        dt = grid.dt
        shift = times + delay.table
        g_center = grid.span
        lhs = np.sum(np.abs(shift - g_center) < dt / 2) * dt
        rhs_cell = dt
        required.append(lhs / rhs_cell)
    assert required[1] > 1.9 * required[0]
    assert required[2] > 1.9 * required[1]


def test_nongrid_anticipation_raises():
    grid = TimeGrid(1.0, 0.5, 60)
    bad = DelayFunction("tabulated", np.full(grid.i_end + 1, 0.3 * grid.dt), None)
    with pytest.raises(NonGridAnticipation):
        validate_delay(bad, grid)


def test_horizon_violation_raises():
    grid = TimeGrid(1.0, 0.5, 60)
    too_long = DelayFunction.constant(0.7, grid)
    with pytest.raises(HorizonViolation):
        validate_delay(too_long, grid)


def test_monotone_shift_l_constant():
    # delta(s) = s doubles the shift slope: L = dt / (2 dt) = 1/2 is the
    # reciprocal of the smallest slope of s + delta(s) = 2s.
    grid = TimeGrid(0.5, 0.5, 50)
    times = grid.times[: grid.i_end + 1]
    delay = DelayFunction.from_table(times, grid, kind="monotone-shift")
    report = validate_delay(delay, grid)
    assert report.ok
    assert report.l_eff == pytest.approx(0.5)


def test_tabulated_kind_never_certified():
    grid = TimeGrid(1.0, 0.5, 60)
    delay = DelayFunction.from_table(
        np.full(grid.i_end + 1, 0.25), grid, kind="tabulated"
    )
    report = validate_delay(delay, grid)
    assert not report.ok
    assert report.l_eff is None


def test_constructor_rounds_to_grid():
    grid = TimeGrid(1.0, 0.5, 60)
    delay = DelayFunction.constant(0.26, grid)
    assert delay.rounded
    assert delay.table[0] == pytest.approx(0.25)


def _box(r=3.0):
    return [(-r, r)] * 4


def test_estimate_lipschitz_zero_generator():
    gen = Generator(f_plain=lambda t, y, z, ay, az: 0.0 * y, lipschitz_c=1.0)
    assert estimate_lipschitz(gen, _box(), 50, seed=1) == 0.0


def test_estimate_lipschitz_anticipated_coefficient():
    # f = a * a_y with a = -2/delta at delta = 1: the sup of the difference
    # quotient is exactly |a| = 2, attained along the a_y coordinate.
    a = -2.0
    gen = Generator(f_plain=lambda t, y, z, ay, az: a * ay, lipschitz_c=2.0)
    est = estimate_lipschitz(gen, _box(), 200, seed=7)
    assert est == pytest.approx(2.0, abs=1e-9)


def test_estimate_lipschitz_linear_bounded():
    mu = 0.3
    gen = Generator(
        f_plain=lambda t, y, z, ay, az: mu * np.cos(t) * y + mu * z + mu * 0.5 * ay,
        lipschitz_c=mu,
    )
    est = estimate_lipschitz(gen, _box(), 200, seed=9)
    assert est <= 3 * mu
    assert est >= 0.9 * mu


def test_estimate_lipschitz_never_exceeds_declared_on_catalog():
    from absdelab import catalog

    for name in ("eq2-linear", "sec6-control"):
        spec = catalog.build_problem(name, n_steps=60)
        est = estimate_lipschitz(spec.gen, _box(), 300, seed=11)
        assert est <= spec.gen.lipschitz_c * 1.01


def test_estimate_lipschitz_nonfinite_raises():
    gen = Generator(f_plain=lambda t, y, z, ay, az: y / 0.0 if np.ndim(y) == 0 else y, lipschitz_c=1.0)
    with pytest.raises(NonFiniteGenerator):
        with np.errstate(divide="ignore", invalid="ignore"):
            estimate_lipschitz(gen, _box(), 10, seed=3)


def _spec_parts(grid):
    gen = Generator(f_plain=lambda t, y, z, ay, az: -0.5 * ay, lipschitz_c=0.5)
    data = TerminalData.of_xi(lambda t, w: np.asarray(w, dtype=float))
    return gen, data


def test_problem_spec_validates_delays():
    grid = TimeGrid(1.0, 0.5, 60)
    gen, data = _spec_parts(grid)
    lag = DelayFunction.constant(0.25, grid)
    spec = ProblemSpec(grid, lag, lag, gen, data)
    assert validate_delay(spec.delta, grid).ok
    assert validate_delay(spec.zeta, grid).ok


def test_problem_spec_rejects_joint_transform_with_mismatched_delays():
    grid = TimeGrid(1.0, 0.5, 60)
    gen = Generator(
        f_plain=lambda t, y, z, ay, az: -az,
        lipschitz_c=1.0,
        g_z=lambda zf, zn: np.abs(zf - zn),
        g_z_joint=True,
    )
    data = TerminalData.of_xi(lambda t, w: np.asarray(w, dtype=float))
    d1 = DelayFunction.constant(0.25, grid)
    d2 = DelayFunction.constant(0.5, grid)
    with pytest.raises(JointTransformDelayMismatch):
        ProblemSpec(grid, d1, d2, gen, data)


def test_problem_spec_checks_driver_at_origin():
    grid = TimeGrid(1.0, 0.5, 60)
    gen = Generator(f_plain=lambda t, y, z, ay, az: y / t, lipschitz_c=1.0)
    data = TerminalData.of_xi(lambda t, w: np.asarray(w, dtype=float))
    lag = DelayFunction.constant(0.25, grid)
    with pytest.raises(NonFiniteGenerator):
        with np.errstate(divide="ignore", invalid="ignore"):
            ProblemSpec(grid, lag, lag, gen, data)


def test_generator_flag_validation():
    with pytest.raises(ValueError):
        Generator(f_plain=lambda t, y, z, ay, az: y, lipschitz_c=0.0)
    with pytest.raises(ValueError):
        Generator(f_plain=lambda t, y, z, ay, az: y, lipschitz_c=1.0, g_z_joint=True)
