"""Reproduction harness: exact examples, counterexamples, comparison suites
and inequality diagnostics.

Every check returns CheckResult records that are bit-reproducible given
(seed, config). Equality checks pass when |observed - target| <= tolerance,
inequality checks when observed <= bound + tolerance.
"""

from __future__ import annotations

import inspect
import json
from dataclasses import asdict, dataclass
from typing import List, Optional
from xml.etree import ElementTree

import numpy as np

from . import catalog
from .absde import (
    contraction_beta,
    delay_sensitivity,
    monotone_iteration,
    solve_absde_grid,
    solve_absde_picard,
)
from .bsde import solve_bsde_mc
from .condexp import QuadratureRule, RegressionBasis, quad_condexp
from .dualctl import (
    ControlProblem,
    duality_price,
    evaluate_objective,
    extract_control,
    value_function,
)
from .errors import HypothesisConstructionFailed
from .model import DelayFunction, Generator, ProblemSpec, TerminalData, TimeGrid
from .paths import generate_ensemble


@dataclass
class CheckResult:
    name: str
    passed: bool
    observed: float
    bound_or_target: float
    tolerance: float
    kind: str = "eq"
    details: str = ""


def eq_check(name, observed, target, tolerance, details="") -> CheckResult:
    return CheckResult(
        name, bool(abs(observed - target) <= tolerance), float(observed), float(target),
        float(tolerance), "eq", details,
    )


def le_check(name, observed, bound, tolerance, details="") -> CheckResult:
    return CheckResult(
        name, bool(observed <= bound + tolerance), float(observed), float(bound),
        float(tolerance), "le", details,
    )


def _combine(name: str, parts: List[CheckResult]) -> CheckResult:
    """Fold sub-assertions into one result; headline = worst equality slack."""
    passed = all(p.passed for p in parts)
    details = "; ".join(
        f"{p.name}: {'ok' if p.passed else 'FAIL'} (observed={p.observed:.6g}, "
        f"{'target' if p.kind == 'eq' else 'bound'}={p.bound_or_target:.6g}, tol={p.tolerance:.3g})"
        for p in parts
    )
    worst = max(parts, key=lambda p: (not p.passed, abs(p.observed - p.bound_or_target)))
    return CheckResult(
        name, passed, worst.observed, worst.bound_or_target, worst.tolerance, worst.kind, details
    )


def _surface_errors(surf, exact_y, exact_z, fraction=0.5, z_rows_to=None):
    mask = surf.interior_mask(fraction)
    xs = surf.x_nodes[mask]
    grid = surf.grid
    u_err = 0.0
    for i, t in enumerate(grid.times):
        u_err = max(u_err, float(np.max(np.abs(surf.y_values[i][mask] - exact_y(t, xs)))))
    v_err = 0.0
    last = grid.i_end if z_rows_to is None else z_rows_to
    for i in range(last):
        t = grid.times[i]
        v_err = max(v_err, float(np.max(np.abs(surf.z_values[i][mask] - exact_z(t, xs)))))
    return u_err, v_err


# ---------------------------------------------------------------------------
# Exact examples


def check_example_43(
    n_steps: int = 300,
    n_paths: int = 100_000,
    seed: int = 404,
    n_x: int = 401,
) -> CheckResult:
    """Grid and Picard reproduction of the (t W_t, t) solution."""
    parts = []
    spec = catalog.build_ex43(n_steps=n_steps)
    exact_y, exact_z = catalog.exact_solution("ex43")

    surf = solve_absde_grid(spec, n_x=n_x)
    u_err, v_err = _surface_errors(surf, exact_y, exact_z)
    parts.append(le_check("grid-u-error", u_err, 0.0, 1e-2))
    parts.append(le_check("grid-v-error", v_err, 0.0, 1e-2))

    # First-order behavior: the dominant error is the one-step shift in v,
    # so halving dt should halve the combined error.
    coarse = solve_absde_grid(catalog.build_ex43(n_steps=n_steps // 2), n_x=n_x)
    e_c = max(_surface_errors(coarse, exact_y, exact_z))
    e_f = max(u_err, v_err)
    parts.append(
        CheckResult(
            "dt-halving-ratio", bool(0.3 <= e_f / e_c <= 0.7), e_f / e_c, 0.5, 0.2, "eq"
        )
    )

    picard_spec = catalog.build_ex43(n_steps=150)
    ens = generate_ensemble(picard_spec.grid, n_paths, 1, seed)
    report = solve_absde_picard(picard_spec, ens, RegressionBasis(4))
    tol = 3 * report.y0_stderr + picard_spec.grid.dt
    parts.append(eq_check("picard-y0", report.y0, 0.0, tol, f"stderr={report.y0_stderr:.2e}"))
    return _combine("example-43", parts)


def check_counterexample_52(n_steps: int = 300) -> CheckResult:
    """Comparison failure under a nonincreasing anticipated term."""
    parts = []
    t_end, delta, c = 1.0, 1.0, -1.0
    a = -2.0 / delta
    analytic_y0 = c + a * c * t_end
    parts.append(eq_check("analytic-y0", analytic_y0, 1.0, 1e-12))

    upper = solve_absde_grid(catalog.build_ex52(n_steps=n_steps))
    lower = solve_absde_grid(catalog.build_ex52_16(n_steps=n_steps))
    parts.append(eq_check("grid-y0-eq15", upper.y0, analytic_y0, 1e-2))
    parts.append(eq_check("grid-y0-eq16", lower.y0, 0.0, 1e-2))

    # Positivity window: Y_t = c + a c (T - t) > 0 strictly inside
    # [T - delta, T - delta/2); the endpoint itself gives exactly zero.
    times = upper.grid.times
    ic = upper.x_nodes.size // 2
    lo, hi = t_end - delta, t_end - delta / 2
    window = [i for i, t in enumerate(times) if lo <= t < hi - 1e-9]
    min_in_window = min(float(upper.y_values[i, ic]) for i in window)
    parts.append(le_check("violation-window-positive", 0.0, min_in_window, 0.0,
                          "Y_t > 0 on [T-delta, T-delta/2)"))

    # Ordered data (xi1 = c <= 0 = xi2) and ordered generators, yet the upper
    # solution starts strictly above: the would-be comparison fails.
    parts.append(le_check("comparison-violated", 0.5, upper.y0 - lower.y0, 0.0,
                          "Y0(15) - Y0(16) should exceed 0.5"))
    return _combine("counterexample-52", parts)


def check_counterexample_53(
    n_steps: int = 300, n_x: int = 2401, n_nodes_anticipated: int = 256
) -> CheckResult:
    """Anticipated-Z counterexample: order inversion between t = 0 and t = T.

    The absolute-difference transform has a kink, so the anticipated
    conditioning uses a dense Hermite rule and a fine spatial grid; the
    defaults here keep each error source separately below the tolerance.
    """
    parts = []
    t_end, delta = 1.0, 0.5
    rule = QuadratureRule(16)
    rule_a = QuadratureRule(n_nodes_anticipated)

    s17 = solve_absde_grid(
        catalog.build_ex53(n_steps=n_steps), rule, n_x=n_x, rule_anticipated=rule_a
    )
    s18 = solve_absde_grid(
        catalog.build_ex53_18(n_steps=n_steps), rule, n_x=n_x, rule_anticipated=rule_a
    )
    parts.append(eq_check("y0-eq17", s17.y0, -2.0 * t_end, 2e-2))
    parts.append(eq_check("y0-eq18", s18.y0, -4.0 * t_end, 2e-2))

    mask = s17.interior_mask(0.5)
    term_gap = np.min(
        s18.y_values[s17.grid.i_end][mask] - s17.y_values[s17.grid.i_end][mask]
    )
    parts.append(le_check("terminal-order", 0.0, float(term_gap), 1e-9,
                          "Y_T < Y'_T nodewise"))
    parts.append(le_check("initial-inversion", 1.0, s17.y0 - s18.y0, 0.0,
                          "Y_0 - Y'_0 should exceed 1"))

    # The conditioned anticipated term on the exact surface equals the
    # constant drift 2 of d(W_t^2 - T - (T - t)).
    term = np.sqrt(np.pi / (2 * delta)) * quad_condexp(
        lambda y: np.abs(2.0 * y - 0.0), 0.0, delta, rule_a
    )
    parts.append(eq_check("anticipated-term", float(term), 2.0, 1e-2))
    return _combine("counterexample-53", parts)


# ---------------------------------------------------------------------------
# Comparison suites


def _random_conforming_pair(rng: np.random.Generator, n_steps: int):
    """A pair satisfying the comparison hypotheses: ordered data, ordered
    generators, increasing anticipated-Y dependence, no anticipated Z."""
    t_end, k_extra = 1.0, 0.5
    grid = TimeGrid(t_end, k_extra, n_steps)
    c_y = rng.uniform(-0.4, 0.4)
    c_z = rng.uniform(-0.4, 0.4)
    c_a = rng.uniform(0.0, 0.5)
    freq = rng.uniform(0.5, 2.0)
    gap0 = rng.uniform(0.1, 0.6)
    offset = rng.uniform(0.0, 0.8)
    q = rng.uniform(-0.7, 0.7, size=3)
    max_lag = round(k_extra / grid.dt)
    lag = DelayFunction.constant(grid.dt * rng.integers(1, max_lag + 1), grid)
    c_decl = max(abs(c_y), abs(c_z), c_a) + 1e-9

    def f2(t, y, z, a_y, a_z):
        return c_y * np.sin(freq * t) * y + c_z * z + c_a * a_y

    def f1(t, y, z, a_y, a_z):
        return f2(t, y, z, a_y, a_z) + gap0 * (1.0 + np.cos(t))

    gen2 = Generator(f_plain=f2, lipschitz_c=c_decl, increasing_flag=True)
    gen1 = Generator(f_plain=f1, lipschitz_c=c_decl, increasing_flag=True)

    def xi2(t, w):
        w = np.asarray(w, dtype=float)
        return q[0] + q[1] * w + q[2] * w**2 * np.exp(-t)

    def xi1(t, w):
        return xi2(t, w) + offset

    spec1 = ProblemSpec(grid, lag, lag, gen1, TerminalData.of_xi(xi1))
    spec2 = ProblemSpec(grid, lag, lag, gen2, TerminalData.of_xi(xi2))
    return spec1, spec2


def check_comparison_suite(
    n_instances: int = 20, seed: int = 515, n_steps: int = 150, n_x: int = 301
) -> List[CheckResult]:
    """Ordered data and generators propagate to ordered solutions.

    Randomized conforming pairs, two constructed oracles (constant driver
    gap, constant data shift), the strict branch (equal inputs give equal
    initial values), the delay-ordered corollary on a half-domain, and the
    negative control where a nonincreasing anticipated term must produce a
    detected violation.
    """
    rng = np.random.default_rng(seed)
    results = []
    for idx in range(n_instances):
        spec1, spec2 = _random_conforming_pair(rng, n_steps)
        s1 = solve_absde_grid(spec1, n_x=n_x)
        s2 = solve_absde_grid(spec2, n_x=n_x)
        tol = 5 * spec1.grid.dt
        worst = float(np.max(s2.y_values - s1.y_values))
        results.append(
            le_check(f"comparison-random-{idx:02d}", worst, 0.0, tol,
                     "max nodewise u2 - u1")
        )

    # Constant driver gap: for generators independent of (y, z) the gap would
    # be exactly T - t; the anticipated feedback only increases it.
    grid = TimeGrid(1.0, 0.5, n_steps)
    lag = DelayFunction.constant(0.5, grid)
    base = Generator(
        f_plain=lambda t, y, z, a_y, a_z: 0.3 * a_y, lipschitz_c=0.3, increasing_flag=True
    )
    shifted = Generator(
        f_plain=lambda t, y, z, a_y, a_z: 0.3 * a_y + 1.0, lipschitz_c=0.3, increasing_flag=True
    )
    data = TerminalData.of_xi(lambda t, w: 0.2 * np.asarray(w, dtype=float))
    s_lo = solve_absde_grid(ProblemSpec(grid, lag, lag, base, data), n_x=n_x)
    s_hi = solve_absde_grid(ProblemSpec(grid, lag, lag, shifted, data), n_x=n_x)
    gap = s_hi.y_values - s_lo.y_values
    results.append(le_check("comparison-drift-gap-nonneg", float(np.max(-gap)), 0.0,
                            5 * grid.dt))
    i_small = max(1, n_steps // 30)
    floor = (grid.t_end - grid.times[i_small]) / 2
    results.append(
        le_check("comparison-drift-gap-size", floor, float(np.min(gap[: i_small + 1])),
                 0.0, "gap at small t at least (T - t)/2")
    )

    data_hi = TerminalData.of_xi(lambda t, w: 0.2 * np.asarray(w, dtype=float) + 1.0)
    s_hi2 = solve_absde_grid(ProblemSpec(grid, lag, lag, base, data_hi), n_x=n_x)
    results.append(
        le_check("comparison-data-shift", float(np.max(s_lo.y_values - s_hi2.y_values)),
                 0.0, 5 * grid.dt)
    )

    # Strict branch: identical generators and data force Y0 equality.
    spec_a, _ = _random_conforming_pair(np.random.default_rng(seed + 1), n_steps)
    s_a = solve_absde_grid(spec_a, n_x=n_x)
    s_b = solve_absde_grid(spec_a, n_x=n_x)
    results.append(eq_check("strict-equality", abs(s_a.y0 - s_b.y0), 0.0, 1e-10))

    results.append(_corollary_55_check(n_steps, n_x))
    results.append(_negative_control_52(n_steps))
    return results


def _corollary_55_check(n_steps: int, n_x: int) -> CheckResult:
    """Delay-ordered comparison on the half-domain where the solution is
    monotone along the anticipation channel.

    Both delays push past T, so the anticipated values are band data t W_t,
    ordered in t exactly on the x >= 0 half-domain. The generator must be
    increasing in the anticipated argument for the corollary to apply.
    """
    t_end, k_extra = 0.5, 1.0
    grid = TimeGrid(t_end, k_extra, n_steps)
    gen = Generator(
        f_plain=lambda t, y, z, a_y, a_z: 0.4 * a_y, lipschitz_c=0.4, increasing_flag=True
    )
    data = TerminalData.of_xi(lambda t, w: t * np.asarray(w, dtype=float))
    d1 = DelayFunction.constant(1.0, grid)
    d2 = DelayFunction.constant(0.5, grid)
    s1 = solve_absde_grid(ProblemSpec(grid, d1, d1, gen, data), n_x=n_x)
    s2 = solve_absde_grid(ProblemSpec(grid, d2, d2, gen, data), n_x=n_x)

    half = s1.x_nodes >= 0.0
    lag1 = d1.lag_steps(grid)
    lag2 = d2.lag_steps(grid)
    hypo_gap = 0.0
    for i in range(grid.i_end):
        diff = s1.y_values[i + lag1[i]][half] - s1.y_values[i + lag2[i]][half]
        hypo_gap = min(hypo_gap, float(np.min(diff)))
    if hypo_gap < -1e-9:
        raise HypothesisConstructionFailed(
            f"surface violates Y1(t+d1) >= Y1(t+d2) on x >= 0 by {hypo_gap}"
        )
    worst = float(np.max((s2.y_values - s1.y_values)[: grid.i_end + 1][:, half]))
    return le_check("corollary-55-half-domain", worst, 0.0, 5 * grid.dt,
                    "u2 - u1 on x >= 0 after on-surface hypothesis check")


def _negative_control_52(n_steps: int) -> CheckResult:
    upper = solve_absde_grid(catalog.build_ex52(n_steps=n_steps))
    lower = solve_absde_grid(catalog.build_ex52_16(n_steps=n_steps))
    violation = upper.y0 - lower.y0
    return le_check("negative-control-52", 0.5, violation, 0.0,
                    "nonincreasing anticipated term must break comparison")


# ---------------------------------------------------------------------------
# Inequality diagnostics


def _driverless_instance(rng: np.random.Generator):
    q = rng.uniform(-0.8, 0.8, size=3)
    g_amp = rng.uniform(0.0, 0.6)
    g_freq = rng.uniform(0.5, 3.0)

    def xi(w):
        return q[0] + q[1] * w + q[2] * w**2

    def g0(t, w):
        return g_amp * np.cos(g_freq * t) * (1.0 + 0.3 * np.asarray(w, dtype=float))

    return xi, g0


def check_basic_estimates(
    n_instances: int = 20,
    seed: int = 808,
    n_paths: int = 20_000,
    n_steps: int = 100,
    n_steps_absde: int = 150,
) -> List[CheckResult]:
    """Energy estimates: driverless bound at beta = 2, sup bound with fitted
    constant, and the anticipated a-priori bound with fitted constant."""
    results = []
    beta = 2.0
    t_end = 1.0

    # Closed-form case xi = W_T, g0 = 0: y = W, z = 1. Left and right sides
    # are deterministic integrals, evaluated here by dense Riemann sums.
    s_dense = np.linspace(0.0, t_end, 20001)
    integrand = (beta / 2 * s_dense + 1.0) * np.exp(beta * s_dense)
    left_exact = float(np.trapezoid(integrand, s_dense))
    right_exact = t_end * np.exp(beta * t_end)
    results.append(le_check("estimate7-analytic", left_exact, right_exact, 0.0,
                            "xi = W_T closed form"))

    grid = TimeGrid(t_end, 0.0, n_steps)
    dt = grid.dt
    basis = RegressionBasis(4)
    rng = np.random.default_rng(seed)

    ens = generate_ensemble(grid, n_paths, 1, seed)
    w = ens.values[:, :, 0]
    y, z = solve_bsde_mc(lambda t, yy, zz: 0.0 * yy, w[grid.i_end], ens, basis)
    lhs, rhs, se = _estimate7_sides(y, z, w[grid.i_end], lambda t, ww: 0.0 * ww, grid, beta, w)
    results.append(le_check("estimate7-mc-martingale", lhs, rhs, 3 * se))

    k_fits = []
    for idx in range(n_instances):
        xi, g0 = _driverless_instance(rng)
        ens_i = generate_ensemble(grid, n_paths, 1, seed + 1000 + idx)
        w_i = ens_i.values[:, :, 0]
        term = xi(w_i[grid.i_end])
        y, z = solve_bsde_mc(lambda t, yy, zz, _g=g0, _w=w_i, _grid=grid: _g(t, _w[_grid.index_of(t)]), term, ens_i, basis)
        lhs, rhs, se = _estimate7_sides(y, z, term, g0, grid, beta, w_i)
        results.append(le_check(f"estimate7-random-{idx:02d}", lhs, rhs, 3 * se))

        sup_sq = float(np.mean(np.max(y**2, axis=0)))
        g_sq = sum(
            float(np.mean(g0(float(grid.times[i]), w_i[i]) ** 2)) * dt
            for i in range(grid.i_end)
        )
        denom = float(np.mean(term**2)) + g_sq
        if denom > 1e-12:
            k_fits.append(sup_sq / denom)
    ratio_k = max(k_fits) / min(k_fits)
    results.append(le_check("estimate8-k-stability", ratio_k, 10.0, 0.0,
                            f"fitted k range [{min(k_fits):.3g}, {max(k_fits):.3g}]"))

    c0_fits = []
    rng_c = np.random.default_rng(seed + 999)
    for idx in range(n_instances):
        spec_a = _estimate11_instance(rng_c, n_steps_absde)
        ens_i = generate_ensemble(spec_a.grid, n_paths, 1, seed + 2000 + idx)
        report = solve_absde_picard(spec_a, ens_i, basis)
        c0_fits.append(_estimate11_ratio(spec_a, report))
    ratio_c0 = max(c0_fits) / min(c0_fits)
    results.append(le_check("estimate11-c0-stability", ratio_c0, 10.0, 0.0,
                            f"fitted C0 range [{min(c0_fits):.3g}, {max(c0_fits):.3g}]"))
    return results


def _estimate11_instance(rng: np.random.Generator, n_steps: int) -> ProblemSpec:
    """Anticipated instance family for the a-priori bound: fixed generator
    constants (the bound's constant depends on them), randomized data."""
    grid = TimeGrid(1.0, 0.5, n_steps)
    max_lag = round(0.5 / grid.dt)
    lag = DelayFunction.constant(grid.dt * rng.integers(1, max_lag + 1), grid)
    gen = Generator(
        f_plain=lambda t, y, z, a_y, a_z: 0.3 * np.sin(t) * y
        + 0.2 * z
        + 0.3 * a_y
        + 0.2 * np.cos(t),
        lipschitz_c=0.31,
        increasing_flag=True,
    )
    q = rng.uniform(-0.7, 0.7, size=3)
    p = rng.uniform(-0.4, 0.4, size=2)

    def xi(t, w):
        w = np.asarray(w, dtype=float)
        return q[0] + q[1] * w + q[2] * w**2 * np.exp(-t)

    def eta(t, w):
        w = np.asarray(w, dtype=float)
        return p[0] + p[1] * w

    return ProblemSpec(grid, lag, lag, gen, TerminalData(xi, eta))


def _estimate7_sides(y, z, term, g0, grid, beta, w):
    dt = grid.dt
    times = grid.times[: grid.i_end]
    weights = np.exp(beta * times) * dt
    left_paths = (beta / 2 * y[:-1] ** 2 + z[:-1] ** 2).T @ weights
    g_vals = np.stack([np.broadcast_to(np.asarray(g0(float(t), w[i]), dtype=float), term.shape)
                       for i, t in enumerate(times)])
    right_paths = term**2 * np.exp(beta * grid.t_end) + (2.0 / beta) * (
        (g_vals**2).T @ weights
    )
    margin = right_paths - left_paths
    se = float(np.std(margin, ddof=1) / np.sqrt(margin.size))
    y0_sq = float(np.mean(y[0])) ** 2
    return y0_sq + float(np.mean(left_paths)), float(np.mean(right_paths)), se


def _estimate11_ratio(spec: ProblemSpec, report) -> float:
    grid = spec.grid
    dt = grid.dt
    i_end = grid.i_end
    y, z = report.y_paths, report.z_paths
    left = float(
        np.mean(np.max(y[: i_end + 1] ** 2, axis=0) + (z[:i_end] ** 2).T @ np.full(i_end, dt))
    )
    xi_t = y[i_end]
    band_sq = np.zeros(y.shape[1])
    for i in range(i_end, grid.n_steps):
        band_sq += (y[i] ** 2 + z[i] ** 2) * dt
    f0 = sum(
        abs(float(np.asarray(spec.gen.f_plain(float(grid.times[i]), 0.0, 0.0, 0.0, 0.0)))) * dt
        for i in range(i_end)
    )
    right = float(np.mean(xi_t**2 + band_sq)) + f0**2
    return left / max(right, 1e-12)


# ---------------------------------------------------------------------------
# Delay sensitivity


def check_delay_sensitivity_suite(
    n_steps: int = 300, n_x: int = 401, x_eval: float = 1.0
) -> CheckResult:
    """Gap decay under delay refinement on the linear-anticipation family.

    The family's solutions vanish identically at Brownian state 0, so the
    gap is measured at x_eval = 1 where it is genuinely nonzero.
    """
    t_end, d2_val = 1.0, 0.5
    grid = TimeGrid(t_end, d2_val, n_steps)
    gen = Generator(
        f_plain=lambda t, y, z, a_y, a_z: -a_y / (t + d2_val),
        lipschitz_c=1.0 / d2_val,
    )
    data = TerminalData(
        xi=lambda t, w: t * np.asarray(w, dtype=float),
        eta=lambda t, w: np.full_like(np.asarray(w, dtype=float), t),
    )
    template = ProblemSpec(
        grid,
        DelayFunction.constant(d2_val, grid),
        DelayFunction.constant(d2_val, grid),
        gen,
        data,
    )
    d2 = DelayFunction.constant(d2_val, grid)

    parts = []
    rec_same = delay_sensitivity(template, d2, d2, n_x=n_x, x_eval=x_eval)
    parts.append(eq_check("degenerate-gap", rec_same.gap_sq_sup, 0.0, 1e-16,
                          "delta1 = delta2"))
    parts.append(eq_check("degenerate-bracket", rec_same.bracket_at_zero, 0.0, 1e-16))

    gaps = []
    m_tildes = []
    for d1_val in (0.4, 0.45, 0.49):
        d1 = DelayFunction.constant(d1_val, grid)
        rec = delay_sensitivity(template, d1, d2, n_x=n_x, x_eval=x_eval)
        gaps.append(rec.gap_sq_sup)
        m_tildes.append(rec.m_tilde)
    monotone = all(gaps[i] > gaps[i + 1] for i in range(len(gaps) - 1))
    parts.append(
        CheckResult("gap-monotone-decay", monotone, gaps[-1], gaps[0], 0.0, "le",
                    f"gap_sq at delta1=0.4,0.45,0.49: {gaps}")
    )
    finite = all(np.isfinite(m) for m in m_tildes)
    spread = max(m_tildes) / max(min(m_tildes), 1e-300)
    parts.append(
        CheckResult("m-tilde-bounded", finite and spread < 1e3, spread, 1e3, 0.0, "le",
                    f"empirical M-tilde values: {m_tildes}")
    )
    return _combine("delay-sensitivity", parts)


# ---------------------------------------------------------------------------
# Contraction, duality and control suites (acceptance surfaces)


def check_contraction_suite(
    n_paths: int = 100_000, n_steps: int = 150, seed: int = 1100, tol: float = 1e-3
) -> List[CheckResult]:
    """Picard certificates on five catalog problems: ratios below 0.75 after
    the first iteration and convergence within 25 sweeps."""
    problems = ["ex43", "ex52", "ex52-16", "ex53", "eq2-linear"]
    basis = RegressionBasis(4)
    results = []
    for k, name in enumerate(problems):
        spec = catalog.build_problem(name, n_steps=n_steps)
        ens = generate_ensemble(spec.grid, n_paths, 1, seed + k)
        report = solve_absde_picard(spec, ens, basis, tol=tol, max_iter=25)
        worst = max(report.ratio_trace) if report.ratio_trace else 0.0
        detail = (
            f"beta={report.beta_used:.4g} iters={report.iterations} "
            f"ratios={[round(r, 4) for r in report.ratio_trace]}"
        )
        results.append(le_check(f"contraction-{name}", worst, 0.75, 0.0, detail))
        results.append(
            le_check(f"contraction-{name}-iters", report.iterations, 25, 0.0,
                     f"converged={report.converged}")
        )
        geom = report.first_delta * 0.75 ** max(report.iterations - 1, 0) * 2.0
        results.append(
            le_check(f"contraction-{name}-geometric", report.final_delta, geom, 0.0,
                     "final delta within doubled geometric envelope")
        )
    return results


def check_duality_suite(
    n_instances: int = 10,
    n_paths: int = 100_000,
    n_steps: int = 300,
    seed: int = 1200,
    n_x: int = 1201,
) -> List[CheckResult]:
    """Forward adjoint-SDDE pricing against backward grid solves.

    n_steps counts steps on the full span [0, T + theta]; the default 300
    puts 200 steps on the backward interval [0, T]. The spatial grid is
    finer than the solver default so that interpolation bias on quadratic
    data stays well inside the first-order tolerance.
    """
    results = []
    for idx in range(n_instances):
        lin = catalog.random_linear_spec(seed + idx)
        grid = TimeGrid(1.0, lin.theta, n_steps)
        spec = lin.to_problem_spec(grid)
        surf = solve_absde_grid(spec, n_x=n_x)
        ens = generate_ensemble(grid, n_paths, 1, seed + 100 + idx)
        price, se = duality_price(lin, 0.0, ens)
        tol = 3 * se + 5 * grid.dt
        results.append(
            eq_check(f"duality-{idx:02d}", price, surf.y0, tol,
                     f"stderr={se:.2e} grid_y0={surf.y0:.6f}")
        )
    return results


def _dominated_control_problem(theta: float = 0.5) -> ControlProblem:
    # Second control dominates in drift, anticipated loading and running
    # reward with equal volatility; positive data keep y and a_y positive,
    # so the argmax sits at u = 1 at every node.
    return ControlProblem(
        control_set=(0.0, 1.0),
        alpha=lambda t, u: 0.05 + 0.1 * np.asarray(u),
        b=lambda t, u: 0.1 + 0.15 * np.asarray(u),
        sigma_c=lambda t, u: 0.2 + 0.0 * np.asarray(u),
        l_c=lambda t, u: 0.05 + 0.1 * np.asarray(u),
        q=lambda t, w: 0.6 + 0.2 * np.asarray(w, dtype=float) ** 2,
        theta=theta,
        bound_mu=0.5,
    )


def check_control_suite(
    n_paths: int = 100_000,
    n_steps: int = 300,
    seed: int = 1300,
    n_controls: int = 21,
    n_random_controls: int = 20,
) -> List[CheckResult]:
    """Sup-generator value function against simulated objectives.

    The random constant controls are drawn from the same finite set the
    value function maximizes over, so the dominance bound is exact up to
    discretization and sampling noise.
    """
    results = []
    cp = catalog.control_problem(n_controls=n_controls)
    grid = TimeGrid(1.0, cp.theta, n_steps)
    surf = value_function(cp, grid)
    v0 = surf.y0
    tol_bias = 5 * grid.dt

    rng = np.random.default_rng(seed)
    controls = rng.choice(np.asarray(cp.control_set), size=n_random_controls)
    ens = generate_ensemble(grid, n_paths, 1, seed)
    j_best = -np.inf
    for k, u in enumerate(controls):
        j_u, se = evaluate_objective(cp, float(u), ens)
        j_best = max(j_best, j_u)
        results.append(
            le_check(f"control-dominates-{k:02d}", j_u, v0, 3 * se + tol_bias,
                     f"u={u:.3f} J={j_u:.5f} stderr={se:.2e}")
        )

    # Dominated two-control instance: the sup solve, the singleton solve at
    # the dominant control and the extracted table must all coincide.
    dom = _dominated_control_problem()
    v_dom = value_function(dom, grid)
    single = ControlProblem(
        control_set=(1.0,),
        alpha=dom.alpha, b=dom.b, sigma_c=dom.sigma_c, l_c=dom.l_c, q=dom.q,
        theta=dom.theta, bound_mu=dom.bound_mu,
    )
    v_single = value_function(single, grid)
    gap = float(np.max(np.abs(v_dom.y_values - v_single.y_values)))
    results.append(eq_check("control-dominated-equality", gap, 0.0, 1e-12))

    fb = extract_control(dom, v_dom)
    results.append(
        eq_check("control-extracted-constant", float(np.min(fb.table)), 1.0, 0.0,
                 "argmax table identically at the dominant control")
    )
    ens_dom = generate_ensemble(grid, n_paths, 1, seed + 7)
    j_fb, se_fb = evaluate_objective(dom, fb, ens_dom)
    j_const, se_c = evaluate_objective(dom, 1.0, ens_dom)
    results.append(
        eq_check("control-feedback-attains", j_fb, v_dom.y0, 3 * se_fb + tol_bias,
                 f"J(feedback)={j_fb:.5f} stderr={se_fb:.2e}")
    )
    results.append(
        eq_check("control-argmax-attains", j_const, v_dom.y0, 3 * se_c + tol_bias,
                 f"J(u*)={j_const:.5f}")
    )

    # Raising the terminal process never lowers the value anywhere.
    lifted = ControlProblem(
        control_set=dom.control_set,
        alpha=dom.alpha, b=dom.b, sigma_c=dom.sigma_c, l_c=dom.l_c,
        q=lambda t, w: dom.q(t, w) + 0.5,
        theta=dom.theta, bound_mu=dom.bound_mu,
    )
    v_lift = value_function(lifted, grid)
    results.append(
        le_check("control-monotone-in-q", float(np.max(v_dom.y_values - v_lift.y_values)),
                 0.0, 1e-12)
    )
    return results


def check_monotone_iteration(n_steps: int = 150, n_x: int = 301) -> CheckResult:
    """Decreasing chain squeezing onto the direct anticipated solve."""
    grid = TimeGrid(1.0, 1.0, n_steps)
    lag = DelayFunction.constant(1.0, grid)
    a = 2.0
    gen2 = Generator(
        f_plain=lambda t, y, z, a_y, a_z: a * a_y, lipschitz_c=a, increasing_flag=True
    )
    gen1 = Generator(
        f_plain=lambda t, y, z, a_y, a_z: a * a_y + 0.5, lipschitz_c=a, increasing_flag=True
    )
    xi2 = TerminalData.of_xi(lambda t, w: -1.0 + 0.0 * np.asarray(w, dtype=float))
    xi1 = TerminalData.of_xi(lambda t, w: -0.5 + 0.0 * np.asarray(w, dtype=float))
    template = ProblemSpec(grid, lag, lag, gen2, xi2)

    chain, upper = monotone_iteration(gen1, gen2, xi1, xi2, template, n_terms=8, n_x=n_x)
    parts = []
    tol = 5 * grid.dt
    worst_order = -np.inf
    for k in range(1, len(chain)):
        worst_order = max(
            worst_order, float(np.max(chain[k].y_values - chain[k - 1].y_values))
        )
    parts.append(le_check("chain-decreasing", worst_order, 0.0, tol,
                          "from the second chain element on"))
    worst_upper = max(
        float(np.max(c.y_values[: grid.i_end + 1] - upper.y_values[: grid.i_end + 1]))
        for c in chain
    )
    parts.append(le_check("chain-below-upper", worst_upper, 0.0, tol))

    direct = solve_absde_grid(ProblemSpec(grid, lag, lag, gen2, xi2), n_x=n_x)
    last_gap = float(np.max(np.abs(chain[-1].y_values - direct.y_values)))
    parts.append(le_check("chain-limit", last_gap, 0.0, tol,
                          "terminal chain element vs direct solve"))
    return _combine("monotone-iteration", parts)


# ---------------------------------------------------------------------------
# Harness


CHECKS: dict = {
    "example-43": check_example_43,
    "counterexample-52": check_counterexample_52,
    "counterexample-53": check_counterexample_53,
    "comparison-suite": check_comparison_suite,
    "basic-estimates": check_basic_estimates,
    "delay-sensitivity": check_delay_sensitivity_suite,
    "contraction-suite": check_contraction_suite,
    "duality-suite": check_duality_suite,
    "control-suite": check_control_suite,
    "monotone-iteration": check_monotone_iteration,
}


def run_checks(names=None, seed: Optional[int] = None, fast: bool = False) -> List[CheckResult]:
    """Run named checks (all by default) and return the flat result list.

    fast=True shrinks Monte Carlo sizes for smoke runs; the recorded
    tolerances always follow the actual sizes used.
    """
    selected = list(CHECKS) if names is None else list(names)
    results: List[CheckResult] = []
    for name in selected:
        if name not in CHECKS:
            raise KeyError(f"unknown check {name!r}; known: {sorted(CHECKS)}")
        kwargs = {}
        if seed is not None and "seed" in inspect.signature(CHECKS[name]).parameters:
            kwargs["seed"] = seed
        if fast:
            kwargs.update(_FAST_OVERRIDES.get(name, {}))
        out = CHECKS[name](**kwargs)
        results.extend(out if isinstance(out, list) else [out])
    return results


_FAST_OVERRIDES = {
    "example-43": {"n_paths": 20_000},
    "counterexample-53": {"n_x": 1201, "n_nodes_anticipated": 128},
    "comparison-suite": {"n_instances": 6},
    "basic-estimates": {"n_instances": 6, "n_paths": 8000, "n_steps_absde": 90},
    "contraction-suite": {"n_paths": 20_000},
    "duality-suite": {"n_instances": 4, "n_paths": 20_000},
    "control-suite": {"n_paths": 20_000, "n_random_controls": 6},
}


def results_to_json(results: List[CheckResult], path) -> None:
    payload = [asdict(r) for r in results]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def results_to_junit(results: List[CheckResult], path) -> None:
    suite = ElementTree.Element(
        "testsuite",
        name="absdelab-validate",
        tests=str(len(results)),
        failures=str(sum(not r.passed for r in results)),
    )
    for r in results:
        case = ElementTree.SubElement(suite, "testcase", name=r.name)
        if not r.passed:
            failure = ElementTree.SubElement(
                case,
                "failure",
                message=f"observed={r.observed} {r.kind} {r.bound_or_target} tol={r.tolerance}",
            )
            failure.text = r.details
    tree = ElementTree.ElementTree(suite)
    ElementTree.indent(tree)
    tree.write(path, encoding="unicode", xml_declaration=True)
