"""Forward Euler-Maruyama simulation of delayed linear SDEs.

Covers the adjoint equation of the duality formula (unit mass at the start
time, zero prehistory) and the controlled density process of the stochastic
control problem. The delay always reads the state one fixed lag theta back,
taking values from the supplied prehistory when the lagged time precedes the
start.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import EnsembleSpanMismatch, MisalignedDelay, NegativeB
from .paths import PathEnsemble


@dataclass(frozen=True)
class SddeCoefficients:
    """Time-dependent coefficients of the linear SDDE.

    mu, mu_bar map t to the plain and delayed drift loadings; sigma and
    sigma_bar map t to the plain and delayed diffusion loadings (scalar for
    one Brownian dimension, else a (d,) vector). bound_mu is the declared
    uniform bound on all four, checked on every grid point of the simulation
    window.
    """

    mu: Callable
    mu_bar: Callable
    sigma: Callable
    sigma_bar: Callable
    theta: float
    bound_mu: float

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if self.bound_mu <= 0:
            raise ValueError(f"bound_mu must be positive, got {self.bound_mu}")


@dataclass(frozen=True)
class StatePaths:
    """Simulated state on [start - theta, end], prehistory included.

    values has shape (n_times, n_paths); times[i_start] is the simulation
    start, earlier rows hold the prehistory.
    """

    times: np.ndarray
    values: np.ndarray
    i_start: int

    @property
    def start(self) -> float:
        return float(self.times[self.i_start])

    def at_time(self, t: float) -> np.ndarray:
        """Per-path state at a stored time (nearest-index lookup)."""
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise MisalignedDelay(f"t={t} is not a stored time")
        return self.values[i]


def _as_vector(value, dim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        if dim != 1:
            raise ValueError(f"scalar diffusion loading with dim={dim}")
        return arr.reshape(1)
    if arr.shape[-1] != dim:
        raise ValueError(f"diffusion loading shape {arr.shape} does not end in ({dim},)")
    return arr


def _check_bounds(coef: SddeCoefficients, times: np.ndarray, dim: int):
    for t in times:
        vals = [coef.mu(t), coef.mu_bar(t)]
        flat = [abs(float(v)) for v in vals]
        flat.append(float(np.max(np.abs(_as_vector(coef.sigma(t), dim)))))
        flat.append(float(np.max(np.abs(_as_vector(coef.sigma_bar(t), dim)))))
        if max(flat) > coef.bound_mu * (1 + 1e-12):
            raise ValueError(
                f"coefficient magnitude {max(flat)} exceeds bound_mu={coef.bound_mu} at t={t}"
            )


def simulate_sdde(
    coef: SddeCoefficients,
    prehistory: Callable,
    start: float,
    end: float,
    ens: PathEnsemble,
) -> StatePaths:
    """Explicit Euler-Maruyama for the delayed linear SDE.

    X_{i+1} = X_i + (mu X_i + mu_bar(t - theta) X_{i - theta/dt}) dt
            + (X_i sigma + X_{i - theta/dt} sigma_bar(t - theta)) . dW_i,

    with the lagged index reading prehistory(t) for times before start.
    The prehistory callback is a deterministic function of time, evaluated
    on the grid points of [start - theta, start].
    """
    grid = ens.grid
    dt = grid.dt
    k_theta = round(coef.theta / dt)
    if abs(k_theta * dt - coef.theta) > 1e-9 * grid.span or k_theta < 1:
        raise MisalignedDelay(f"theta={coef.theta} is not a positive grid lag at dt={dt}")
    i0 = grid.index_of(start)
    i1 = grid.index_of(end)
    if not (0 <= i0 < i1 <= grid.n_steps):
        raise EnsembleSpanMismatch(
            f"window [{start}, {end}] not covered by ensemble span [0, {grid.span}]"
        )

    n_main = i1 - i0
    times = start - coef.theta + dt * np.arange(k_theta + n_main + 1)
    _check_bounds(coef, times[k_theta:-1], ens.dim)
    _check_bounds(coef, times[k_theta:-1] - coef.theta, ens.dim)

    values = np.empty((k_theta + n_main + 1, ens.n_paths))
    for j in range(k_theta + 1):
        values[j] = float(prehistory(times[j]))

    for m in range(n_main):
        j = k_theta + m
        t = times[j]
        x = values[j]
        x_del = values[j - k_theta]
        dw = ens.increments(i0 + m)
        sig = _as_vector(coef.sigma(t), ens.dim)
        sig_bar = _as_vector(coef.sigma_bar(t - coef.theta), ens.dim)
        drift = (coef.mu(t) * x + coef.mu_bar(t - coef.theta) * x_del) * dt
        noise = x * (dw @ sig) + x_del * (dw @ sig_bar)
        values[j + 1] = x + drift + noise

    return StatePaths(times, values, k_theta)


def _sigma_contraction(dw: np.ndarray, sig, dim: int, n_paths: int) -> np.ndarray:
    """Per-path dW . sigma for scalar, (d,), per-path (n,) or (n, d) loadings."""
    sig = np.asarray(sig, dtype=float)
    if sig.ndim == 0:
        if dim != 1:
            raise ValueError(f"scalar diffusion loading with dim={dim}")
        return dw[:, 0] * float(sig)
    if sig.ndim == 1:
        if sig.shape[0] == dim and dim != n_paths:
            return dw @ sig
        if sig.shape[0] == n_paths:
            if dim != 1:
                raise ValueError("per-path scalar loading requires dim == 1")
            return dw[:, 0] * sig
        raise ValueError(f"diffusion loading shape {sig.shape} matches neither dim nor paths")
    if sig.ndim == 2 and sig.shape == (n_paths, dim):
        return np.sum(dw * sig, axis=1)
    raise ValueError(f"unsupported diffusion loading shape {sig.shape}")


def control_values(ctrl, i: int, states: np.ndarray, n_steps: int):
    """Control value(s) at global grid index i given per-path Brownian states.

    Accepts a constant (float), a per-grid-point array over [0, span]
    (indices outside are clamped: the prehistory control is extended by its
    value at time zero), or an object exposing values_at(i, states) such as
    a feedback-control table.
    """
    if hasattr(ctrl, "values_at"):
        return ctrl.values_at(i, states)
    if isinstance(ctrl, (int, float)):
        return float(ctrl)
    arr = np.asarray(ctrl, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != n_steps + 1:
            raise ValueError(
                f"control path needs one value per grid point ({n_steps + 1}), got {arr.shape[0]}"
            )
        return float(arr[min(max(i, 0), n_steps)])
    raise TypeError(f"unsupported control specification {type(ctrl)!r}")


def simulate_density(
    ctrl,
    alpha: Callable,
    b: Callable,
    sigma: Callable,
    theta: float,
    ens: PathEnsemble,
    t0: float = 0.0,
    end: float = None,
) -> StatePaths:
    """Controlled density process: unit mass at t0, zero before.

    dX = (alpha(t, u_t) X + b(t - theta, u_{t - theta}) X_{t - theta}) dt
       + X sigma(t, u_t) . dW, with b required nonnegative. The control is a
    constant, a per-grid-point path, or a feedback table (see
    control_values).
    """
    grid = ens.grid
    dt = grid.dt
    k_theta = round(theta / dt)
    if abs(k_theta * dt - theta) > 1e-9 * grid.span or k_theta < 1:
        raise MisalignedDelay(f"theta={theta} is not a positive grid lag at dt={dt}")
    i0 = grid.index_of(t0)
    i1 = grid.n_steps if end is None else grid.index_of(end)
    if not (0 <= i0 < i1 <= grid.n_steps):
        raise EnsembleSpanMismatch(f"window [{t0}, {end}] outside ensemble span")

    n_main = i1 - i0
    times = t0 - theta + dt * np.arange(k_theta + n_main + 1)
    values = np.zeros((k_theta + n_main + 1, ens.n_paths))
    values[k_theta] = 1.0

    for m in range(n_main):
        j = k_theta + m
        i_glob = i0 + m
        t = times[j]
        x = values[j]
        x_del = values[j - k_theta]
        w_now = ens.states(i_glob)
        u_now = control_values(ctrl, i_glob, w_now, grid.n_steps)
        u_del = control_values(ctrl, i_glob - k_theta, w_now, grid.n_steps)
        b_del = np.asarray(b(t - theta, u_del), dtype=float)
        if np.any(b_del < 0):
            raise NegativeB(f"b({t - theta}, u) < 0")
        dw = ens.increments(i_glob)
        drift = (np.asarray(alpha(t, u_now)) * x + b_del * x_del) * dt
        noise = x * _sigma_contraction(dw, sigma(t, u_now), ens.dim, ens.n_paths)
        values[j + 1] = x + drift + noise

    return StatePaths(times, values, k_theta)


def write_path_stats_csv(sp: StatePaths, path, quantiles: Sequence[float] = (0.05, 0.5, 0.95)):
    """Per-time summary rows: time, mean, stderr and the requested quantiles."""
    n = sp.values.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "mean", "stderr"] + [f"q{int(100 * q):02d}" for q in quantiles])
        for i, t in enumerate(sp.times):
            row = sp.values[i]
            qs = np.quantile(row, quantiles)
            writer.writerow(
                [f"{t:.12g}", f"{row.mean():.12g}", f"{row.std(ddof=1) / np.sqrt(n):.12g}"]
                + [f"{q:.12g}" for q in qs]
            )
