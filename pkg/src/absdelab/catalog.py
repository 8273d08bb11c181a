"""Built-in problem catalog and the structured-text config loader.

Catalog ids cover every worked example of the underlying theory: the
linear-anticipation instance with exact solution (t W_t, t) ("ex43"), the
comparison counterexample pair with a nonincreasing anticipated term
("ex52", "ex52-16"), the anticipated-Z counterexample pair ("ex53",
"ex53-18"), a deterministic linear duality instance ("eq2-linear") and a
finite-control instance ("sec6-control").

Config files are INI text with sections [problem], [delay], optional
[zeta], [generator] and [terminal]; generator and terminal blocks name a
built-in family by id plus its numeric parameters. Unknown keys are
rejected.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .dualctl import ControlProblem, LinearAbsdeSpec
from .errors import ConfigError
from .model import DelayFunction, Generator, ProblemSpec, TerminalData, TimeGrid

DEFAULT_N_STEPS = 300


# ---------------------------------------------------------------------------
# Named problems


def _ex43_parts(t_end: float, delta: float):
    gen = Generator(
        f_plain=lambda t, y, z, a_y, a_z: -a_y / (t + delta),
        lipschitz_c=1.0 / delta,
        increasing_flag=False,
    )
    terminal = TerminalData(
        xi=lambda t, w: t * np.asarray(w, dtype=float),
        eta=lambda t, w: np.full_like(np.asarray(w, dtype=float), t),
    )
    return gen, terminal


def build_ex43(n_steps: int = DEFAULT_N_STEPS, t_end: float = 1.0, delta: float = 0.5) -> ProblemSpec:
    grid = TimeGrid(t_end, delta, n_steps)
    gen, terminal = _ex43_parts(t_end, delta)
    lag = DelayFunction.constant(delta, grid)
    return ProblemSpec(grid, lag, lag, gen, terminal)


def build_ex52(
    n_steps: int = DEFAULT_N_STEPS, t_end: float = 1.0, delta: float = 1.0, c: float = -1.0
) -> ProblemSpec:
    """Comparison counterexample, upper equation: constant data c < 0."""
    a = -2.0 / delta
    grid = TimeGrid(t_end, delta, n_steps)
    gen = Generator(
        f_plain=lambda t, y, z, a_y, a_z: a * a_y,
        lipschitz_c=abs(a),
        increasing_flag=False,
    )
    terminal = TerminalData.of_xi(lambda t, w: np.full_like(np.asarray(w, dtype=float), c))
    lag = DelayFunction.constant(delta, grid)
    return ProblemSpec(grid, lag, lag, gen, terminal)


def build_ex52_16(
    n_steps: int = DEFAULT_N_STEPS, t_end: float = 1.0, delta: float = 1.0
) -> ProblemSpec:
    """Comparison counterexample, lower equation: negative-part transform."""
    a = -2.0 / delta
    grid = TimeGrid(t_end, delta, n_steps)
    gen = Generator(
        f_plain=lambda t, y, z, a_y, a_z: a * a_y,
        lipschitz_c=abs(a),
        g_y=lambda v: np.minimum(v, 0.0),
        increasing_flag=False,
    )
    terminal = TerminalData.of_xi(lambda t, w: np.zeros_like(np.asarray(w, dtype=float)))
    lag = DelayFunction.constant(delta, grid)
    return ProblemSpec(grid, lag, lag, gen, terminal)


def _ex53_generator(delta: float) -> Generator:
    c = np.sqrt(np.pi / (2.0 * delta))
    return Generator(
        f_plain=lambda t, y, z, a_y, a_z: -c * a_z,
        lipschitz_c=c,
        g_z=lambda z_future, z_now: np.abs(z_future - z_now),
        g_z_joint=True,
        increasing_flag=False,
    )


def build_ex53(
    n_steps: int = DEFAULT_N_STEPS, t_end: float = 1.0, delta: float = 0.5
) -> ProblemSpec:
    """Anticipated-Z counterexample, first equation.

    The band for Y is taken as the continuous extension w^2 - 2T + t of the
    exact solution; the generator reads only the Z band, so the solution on
    [0, T] does not depend on this choice.
    """
    grid = TimeGrid(t_end, delta, n_steps)
    terminal = TerminalData(
        xi=lambda t, w: np.asarray(w, dtype=float) ** 2 - 2.0 * t_end + t,
        eta=lambda t, w: 2.0 * np.asarray(w, dtype=float),
    )
    lag = DelayFunction.constant(delta, grid)
    return ProblemSpec(grid, lag, lag, _ex53_generator(delta), terminal)


def build_ex53_18(
    n_steps: int = DEFAULT_N_STEPS, t_end: float = 1.0, delta: float = 0.5
) -> ProblemSpec:
    """Anticipated-Z counterexample, second equation."""
    grid = TimeGrid(t_end, delta, n_steps)
    terminal = TerminalData(
        xi=lambda t, w: 4.0 * np.asarray(w, dtype=float) ** 2 - 4.0 * (t_end - t),
        eta=lambda t, w: 8.0 * np.asarray(w, dtype=float),
    )
    lag = DelayFunction.constant(delta, grid)
    return ProblemSpec(grid, lag, lag, _ex53_generator(delta), terminal)


def linear_spec(t_end: float = 1.0, theta: float = 0.5) -> LinearAbsdeSpec:
    """Deterministic linear instance with smooth bounded coefficients."""
    return LinearAbsdeSpec(
        mu=lambda t: 0.2 * np.cos(1.3 * t),
        mu_bar=lambda t: 0.1 * (1.0 + np.sin(t)),
        sigma=lambda t: 0.25,
        sigma_bar=lambda t: 0.15 * np.sin(t + 0.3),
        l=lambda t: 0.1 * np.cos(t),
        theta=theta,
        q=lambda t, w: 0.5 + 0.4 * np.asarray(w, dtype=float) + 0.3 * np.asarray(w, dtype=float) ** 2 * np.exp(-t),
        p=lambda t, w: 0.2 + 0.1 * np.asarray(w, dtype=float),
        bound_mu=0.3,
    )


def random_linear_spec(seed: int, t_end: float = 1.0, theta: float = 0.5) -> LinearAbsdeSpec:
    """Randomized bounded linear instance (trig coefficients, polynomial data)."""
    rng = np.random.default_rng(seed)
    amp = rng.uniform(0.05, 0.25, size=4)
    freq = rng.uniform(0.5, 2.0, size=4)
    phase = rng.uniform(0.0, 2 * np.pi, size=4)
    level = rng.uniform(-0.1, 0.1)
    q_coef = rng.uniform(-0.6, 0.6, size=3)
    p_coef = rng.uniform(-0.4, 0.4, size=2)
    return LinearAbsdeSpec(
        mu=lambda t: amp[0] * np.cos(freq[0] * t + phase[0]),
        mu_bar=lambda t: amp[1] * np.cos(freq[1] * t + phase[1]),
        sigma=lambda t: amp[2] * np.cos(freq[2] * t + phase[2]),
        sigma_bar=lambda t: amp[3] * np.cos(freq[3] * t + phase[3]),
        l=lambda t: level * np.sin(t),
        theta=theta,
        q=lambda t, w: q_coef[0]
        + q_coef[1] * np.asarray(w, dtype=float)
        + q_coef[2] * np.asarray(w, dtype=float) ** 2,
        p=lambda t, w: p_coef[0] + p_coef[1] * np.asarray(w, dtype=float),
        bound_mu=0.25,
    )


def build_eq2_linear(n_steps: int = DEFAULT_N_STEPS, t_end: float = 1.0, theta: float = 0.5) -> ProblemSpec:
    grid = TimeGrid(t_end, theta, n_steps)
    return linear_spec(t_end, theta).to_problem_spec(grid)


def control_problem(t_end: float = 1.0, theta: float = 0.5, n_controls: int = 5) -> ControlProblem:
    controls = tuple(np.linspace(0.0, 1.0, n_controls))
    return ControlProblem(
        control_set=controls,
        alpha=lambda t, u: 0.1 + 0.2 * np.asarray(u),
        b=lambda t, u: 0.15 + 0.2 * np.asarray(u) * (1.0 - np.asarray(u)),
        sigma_c=lambda t, u: 0.2 + 0.1 * np.asarray(u),
        l_c=lambda t, u: 0.1 + 0.3 * np.asarray(u) * (1.0 - np.asarray(u)),
        q=lambda t, w: 0.8 + 0.25 * np.asarray(w, dtype=float) ** 2 + 0.1 * (t - t_end),
        theta=theta,
        bound_mu=0.6,
    )


def build_sec6_control(n_steps: int = DEFAULT_N_STEPS, t_end: float = 1.0, theta: float = 0.5) -> ProblemSpec:
    grid = TimeGrid(t_end, theta, n_steps)
    return control_problem(t_end, theta).to_problem_spec(grid)


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    build: Callable[..., ProblemSpec]
    description: str
    exact_y: Optional[Callable] = None
    exact_z: Optional[Callable] = None


def _exact_ex52_y(t, x):
    # Valid for the default parameters (T = delta), where the terminal window
    # covers all of [0, T].
    t = np.asarray(t, dtype=float)
    return np.where(t <= 1.0, -1.0 + 2.0 * (1.0 - t), -1.0) + 0.0 * np.asarray(x, dtype=float)


CATALOG: Dict[str, CatalogEntry] = {
    "ex43": CatalogEntry(
        "ex43",
        build_ex43,
        "linear anticipation, exact solution (t W_t, t)",
        exact_y=lambda t, x: np.asarray(t) * np.asarray(x, dtype=float),
        exact_z=lambda t, x: np.asarray(t) + 0.0 * np.asarray(x, dtype=float),
    ),
    "ex52": CatalogEntry(
        "ex52",
        build_ex52,
        "comparison counterexample, upper equation",
        exact_y=_exact_ex52_y,
        exact_z=lambda t, x: 0.0 * np.asarray(x, dtype=float),
    ),
    "ex52-16": CatalogEntry(
        "ex52-16",
        build_ex52_16,
        "comparison counterexample, lower equation (identically zero)",
        exact_y=lambda t, x: 0.0 * np.asarray(x, dtype=float),
        exact_z=lambda t, x: 0.0 * np.asarray(x, dtype=float),
    ),
    "ex53": CatalogEntry(
        "ex53",
        build_ex53,
        "anticipated-Z counterexample, first equation",
        exact_y=lambda t, x: np.asarray(x, dtype=float) ** 2 - 2.0 + np.asarray(t),
        exact_z=lambda t, x: 2.0 * np.asarray(x, dtype=float),
    ),
    "ex53-18": CatalogEntry(
        "ex53-18",
        build_ex53_18,
        "anticipated-Z counterexample, second equation",
        exact_y=lambda t, x: 4.0 * np.asarray(x, dtype=float) ** 2 - 4.0 * (1.0 - np.asarray(t)),
        exact_z=lambda t, x: 8.0 * np.asarray(x, dtype=float),
    ),
    "eq2-linear": CatalogEntry(
        "eq2-linear",
        build_eq2_linear,
        "deterministic linear duality instance",
    ),
    "sec6-control": CatalogEntry(
        "sec6-control",
        build_sec6_control,
        "finite-control sup-generator instance",
    ),
}


def build_problem(name: str, n_steps: Optional[int] = None, **params) -> ProblemSpec:
    if name not in CATALOG:
        raise ConfigError(f"unknown catalog id {name!r}; known: {sorted(CATALOG)}")
    kwargs = dict(params)
    if n_steps is not None:
        kwargs["n_steps"] = n_steps
    return CATALOG[name].build(**kwargs)


def exact_solution(name: str) -> Optional[Tuple[Callable, Callable]]:
    entry = CATALOG.get(name)
    if entry is None or entry.exact_y is None:
        return None
    return entry.exact_y, entry.exact_z


# ---------------------------------------------------------------------------
# Config files

_GENERATOR_FAMILIES = {
    "ex43": {"delta"},
    "ex52": {"a"},
    "ex52-indicator": {"a"},
    "ex53": {"delta"},
    "linear": {"mu", "mu_bar", "sigma", "sigma_bar", "l"},
}

_TERMINAL_FAMILIES = {
    "ex43": set(),
    "ex53": {"t_end"},
    "ex53-prime": {"t_end"},
    "constant": {"value"},
    "zero": set(),
    "poly": {"q0", "q1", "q2", "p0", "p1"},
}


def _build_generator(gid: str, params: Dict[str, float]) -> Generator:
    if gid == "ex43":
        delta = params["delta"]
        return Generator(
            f_plain=lambda t, y, z, a_y, a_z: -a_y / (t + delta),
            lipschitz_c=1.0 / delta,
        )
    if gid == "ex52":
        a = params["a"]
        return Generator(
            f_plain=lambda t, y, z, a_y, a_z: a * a_y,
            lipschitz_c=abs(a),
            increasing_flag=a >= 0,
        )
    if gid == "ex52-indicator":
        a = params["a"]
        return Generator(
            f_plain=lambda t, y, z, a_y, a_z: a * a_y,
            lipschitz_c=abs(a),
            g_y=lambda v: np.minimum(v, 0.0),
            increasing_flag=False,
        )
    if gid == "ex53":
        return _ex53_generator(params["delta"])
    if gid == "linear":
        mu = params.get("mu", 0.0)
        mu_bar = params.get("mu_bar", 0.0)
        sigma = params.get("sigma", 0.0)
        sigma_bar = params.get("sigma_bar", 0.0)
        level = params.get("l", 0.0)
        c = max(abs(mu), abs(mu_bar), abs(sigma), abs(sigma_bar), 1e-12)
        return Generator(
            f_plain=lambda t, y, z, a_y, a_z: mu * y
            + mu_bar * a_y
            + sigma * z
            + sigma_bar * a_z
            + level,
            lipschitz_c=c,
            g_z=(lambda zf, zn: zf) if sigma_bar != 0.0 else None,
            increasing_flag=mu_bar >= 0,
        )
    raise ConfigError(f"unknown generator id {gid!r}; known: {sorted(_GENERATOR_FAMILIES)}")


def _build_terminal(tid: str, params: Dict[str, float]) -> TerminalData:
    w_arr = lambda w: np.asarray(w, dtype=float)
    if tid == "ex43":
        return TerminalData(
            xi=lambda t, w: t * w_arr(w), eta=lambda t, w: np.full_like(w_arr(w), t)
        )
    if tid == "ex53":
        t_end = params["t_end"]
        return TerminalData(
            xi=lambda t, w: w_arr(w) ** 2 - 2.0 * t_end + t,
            eta=lambda t, w: 2.0 * w_arr(w),
        )
    if tid == "ex53-prime":
        t_end = params["t_end"]
        return TerminalData(
            xi=lambda t, w: 4.0 * w_arr(w) ** 2 - 4.0 * (t_end - t),
            eta=lambda t, w: 8.0 * w_arr(w),
        )
    if tid == "constant":
        value = params["value"]
        return TerminalData.of_xi(lambda t, w: np.full_like(w_arr(w), value))
    if tid == "zero":
        return TerminalData.of_xi(lambda t, w: np.zeros_like(w_arr(w)))
    if tid == "poly":
        q0 = params.get("q0", 0.0)
        q1 = params.get("q1", 0.0)
        q2 = params.get("q2", 0.0)
        p0 = params.get("p0", 0.0)
        p1 = params.get("p1", 0.0)
        return TerminalData(
            xi=lambda t, w: q0 + q1 * w_arr(w) + q2 * w_arr(w) ** 2,
            eta=lambda t, w: p0 + p1 * w_arr(w),
        )
    raise ConfigError(f"unknown terminal id {tid!r}; known: {sorted(_TERMINAL_FAMILIES)}")


def _section(cfg: configparser.ConfigParser, name: str, allowed, required=()):
    if not cfg.has_section(name):
        if required:
            raise ConfigError(f"missing [{name}] section")
        return {}
    out = {}
    for key, raw in cfg.items(name):
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in [{name}] (allowed: {sorted(allowed)})")
        out[key] = raw
    for key in required:
        if key not in out:
            raise ConfigError(f"missing key {key!r} in [{name}]")
    return out


def _delay_from_config(block: Dict[str, str], grid: TimeGrid) -> DelayFunction:
    kind = block.get("kind", "constant")
    if kind == "constant":
        return DelayFunction.constant(float(block.get("value", 0.0)), grid)
    raise ConfigError(f"config delays support kind=constant only, got {kind!r}")


def load_problem(path: str) -> ProblemSpec:
    """Read a ProblemSpec from an INI config file."""
    cfg = configparser.ConfigParser()
    read = cfg.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    for section in cfg.sections():
        if section not in ("problem", "delay", "zeta", "generator", "terminal"):
            raise ConfigError(f"unknown section [{section}]")

    prob = _section(
        cfg, "problem", {"horizon", "anticipation", "steps"}, required=("horizon", "steps")
    )
    horizon = float(prob["horizon"])
    steps = int(prob["steps"])

    delay_block = _section(cfg, "delay", {"kind", "value"})
    zeta_block = _section(cfg, "zeta", {"kind", "value"})
    anticipation = float(
        prob.get("anticipation", delay_block.get("value", 0.0))
    )
    grid = TimeGrid(horizon, anticipation, steps)
    delta = _delay_from_config(delay_block, grid)
    zeta = _delay_from_config(zeta_block, grid) if zeta_block else delta

    gen_block = _section(
        cfg, "generator", {"id"} | set().union(*_GENERATOR_FAMILIES.values()), required=("id",)
    )
    gid = gen_block.pop("id")
    if gid not in _GENERATOR_FAMILIES:
        raise ConfigError(f"unknown generator id {gid!r}; known: {sorted(_GENERATOR_FAMILIES)}")
    extra = set(gen_block) - _GENERATOR_FAMILIES[gid]
    if extra:
        raise ConfigError(f"keys {sorted(extra)} not valid for generator {gid!r}")
    gen = _build_generator(gid, {k: float(v) for k, v in gen_block.items()})

    term_block = _section(
        cfg, "terminal", {"id"} | set().union(*_TERMINAL_FAMILIES.values()), required=("id",)
    )
    tid = term_block.pop("id")
    if tid not in _TERMINAL_FAMILIES:
        raise ConfigError(f"unknown terminal id {tid!r}; known: {sorted(_TERMINAL_FAMILIES)}")
    extra = set(term_block) - _TERMINAL_FAMILIES[tid]
    if extra:
        raise ConfigError(f"keys {sorted(extra)} not valid for terminal {tid!r}")
    terminal = _build_terminal(tid, {k: float(v) for k, v in term_block.items()})

    return ProblemSpec(grid, delta, zeta, gen, terminal)


def resolve_problem(name_or_path: str, n_steps: Optional[int] = None) -> ProblemSpec:
    """Catalog id or config path to a ProblemSpec."""
    if name_or_path in CATALOG:
        return build_problem(name_or_path, n_steps=n_steps)
    if os.path.exists(name_or_path):
        spec = load_problem(name_or_path)
        if n_steps is not None and n_steps != spec.grid.n_steps:
            grid = TimeGrid(spec.grid.t_end, spec.grid.k_extra, n_steps)
            delta = DelayFunction.constant(float(spec.delta.table[0]), grid)
            zeta = DelayFunction.constant(float(spec.zeta.table[0]), grid)
            spec = ProblemSpec(grid, delta, zeta, spec.gen, spec.terminal, spec.brownian_dim)
        return spec
    raise ConfigError(f"{name_or_path!r} is neither a catalog id nor a config file")
