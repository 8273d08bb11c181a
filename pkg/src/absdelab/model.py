"""Domain types for anticipated-BSDE problem instances.

A problem lives on a uniform time grid over [0, T + K]: the generator acts on
[0, T], the band [T, T + K] carries the prescribed terminal processes, and the
two delay functions push generator times into that band. Validators certify
the standing assumptions (horizon containment and the change-of-variable
constant for the delays, Lipschitz bound for the generator).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    HorizonViolation,
    JointTransformDelayMismatch,
    MisalignedDelay,
    NonFiniteGenerator,
    NonGridAnticipation,
)

# Relative slack used when snapping times to the grid.
_ALIGN_RTOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, t_end + k_extra] with t_end an exact grid point.

    t_end is the horizon T of the backward interval, k_extra the anticipation
    horizon K, and n_steps the number of uniform steps on the full span.
    """

    t_end: float
    k_extra: float
    n_steps: int

    def __post_init__(self):
        if self.t_end <= 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.k_extra < 0:
            raise ValueError(f"k_extra must be nonnegative, got {self.k_extra}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        # T must land exactly on the grid so the band [T, T+K] starts on a node.
        steps_to_t = self.t_end / self.dt
        if abs(steps_to_t - round(steps_to_t)) > _ALIGN_RTOL * self.n_steps:
            raise MisalignedDelay(
                f"t_end={self.t_end} is not a grid point at dt={self.dt}"
            )

    @property
    def span(self) -> float:
        return self.t_end + self.k_extra

    @property
    def dt(self) -> float:
        return self.span / self.n_steps

    @property
    def i_end(self) -> int:
        """Index of t_end (start of the terminal band)."""
        return round(self.t_end / self.dt)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.span, self.n_steps + 1)

    def index_of(self, t: float) -> int:
        """Grid index of time t; raises if t is not a grid point."""
        i = round(t / self.dt)
        if not (0 <= i <= self.n_steps) or abs(i * self.dt - t) > _ALIGN_RTOL * self.span:
            raise MisalignedDelay(f"t={t} is not a grid point at dt={self.dt}")
        return i

    def round_lag(self, duration: float) -> int:
        """Nearest number of whole steps for a nonnegative duration."""
        if duration < 0:
            raise ValueError(f"lag must be nonnegative, got {duration}")
        return round(duration / self.dt)


@dataclass(frozen=True)
class DelayFunction:
    """A delay t -> delta(t) tabulated on the grid points of [0, T].

    kind is one of "constant", "monotone-shift", "tabulated". l_const is the
    change-of-variable constant of the delay (1 for constant delays, the
    maximum reciprocal slope of t -> t + delta(t) for monotone shifts, None
    when no finite certificate exists).
    """

    kind: str
    table: np.ndarray
    l_const: Optional[float]
    rounded: bool = False

    @classmethod
    def constant(cls, duration: float, grid: TimeGrid) -> "DelayFunction":
        lag = grid.round_lag(duration)
        snapped = lag * grid.dt
        table = np.full(grid.i_end + 1, snapped)
        return cls("constant", table, 1.0, rounded=abs(snapped - duration) > 1e-15)

    @classmethod
    def from_table(
        cls, values: Sequence[float], grid: TimeGrid, kind: str = "tabulated"
    ) -> "DelayFunction":
        if kind not in ("monotone-shift", "tabulated"):
            raise ValueError(f"unknown delay kind {kind!r}")
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.i_end + 1,):
            raise ValueError(
                f"delay table must have one entry per grid point of [0, T] "
                f"({grid.i_end + 1}), got shape {values.shape}"
            )
        if np.any(values < 0):
            raise ValueError("delays must be nonnegative")
        lags = np.round(values / grid.dt).astype(int)
        snapped = lags * grid.dt
        rounded = bool(np.any(np.abs(snapped - values) > 1e-12 * grid.span))
        l_const = _monotone_shift_l(snapped, grid) if kind == "monotone-shift" else None
        return cls(kind, snapped, l_const, rounded=rounded)

    @classmethod
    def zero(cls, grid: TimeGrid) -> "DelayFunction":
        return cls.constant(0.0, grid)

    def lag_steps(self, grid: TimeGrid) -> np.ndarray:
        """Integer step offsets i -> round(delta(t_i)/dt) for i in [0, i_end]."""
        return np.round(self.table / grid.dt).astype(int)

    def is_zero(self) -> bool:
        return bool(np.all(self.table == 0.0))


def _monotone_shift_l(table: np.ndarray, grid: TimeGrid) -> Optional[float]:
    """Max reciprocal slope of t -> t + delta(t); None if the shift stalls."""
    shift = grid.times[: grid.i_end + 1] + table
    if shift.size < 2:
        return 1.0
    diffs = np.diff(shift)
    if np.any(diffs <= 0):
        return None
    return float(np.max(grid.dt / diffs))


@dataclass(frozen=True)
class DelayReport:
    ok: bool
    k_eff: float
    l_eff: Optional[float]
    violation: Optional[str] = None


def validate_delay(delay: DelayFunction, grid: TimeGrid) -> DelayReport:
    """Check a delay against the horizon and change-of-variable conditions.

    Raises NonGridAnticipation if some t + delta(t) falls strictly between
    grid points and HorizonViolation if it exceeds T + K. Returns a report
    that is ok only when additionally a finite l_eff certifies the delay
    (constant delays give l_eff = 1, monotone shifts the maximum reciprocal
    slope of t + delta(t); other kinds are never certified).
    """
    times = grid.times[: grid.i_end + 1]
    shift = times + delay.table
    steps = shift / grid.dt
    misaligned = np.abs(steps - np.round(steps)) > _ALIGN_RTOL * grid.n_steps
    if np.any(misaligned):
        i = int(np.argmax(misaligned))
        raise NonGridAnticipation(
            f"t + delta(t) = {shift[i]} at t = {times[i]} is not a grid point"
        )
    over = shift > grid.span * (1 + _ALIGN_RTOL)
    if np.any(over):
        i = int(np.argmax(over))
        raise HorizonViolation(
            f"t + delta(t) = {shift[i]} at t = {times[i]} exceeds T + K = {grid.span}"
        )
    k_eff = max(float(np.max(shift)) - grid.t_end, 0.0)

    if delay.kind == "constant":
        l_eff: Optional[float] = 1.0
    elif delay.kind == "monotone-shift":
        l_eff = _monotone_shift_l(delay.table, grid)
    else:
        l_eff = None

    if l_eff is None:
        note = f"no finite change-of-variable constant for kind {delay.kind!r}"
        return DelayReport(False, k_eff, None, note)
    return DelayReport(True, k_eff, l_eff, None)


@dataclass(frozen=True)
class Generator:
    """Driver f(t, y, z, a_y, a_z) with optional anticipated-value transforms.

    a_y and a_z are the conditioned anticipated arguments: the solvers hand
    f_plain the values E[g_y(Y_{t+delta(t)}) | F_t] and
    E[g_z(Z_{t+zeta(t)}, Z_t) | F_t]. g_y = None means the identity transform;
    g_z = None means the generator does not read anticipated Z at all (the
    a_z slot receives 0). Set g_z_joint when g_z genuinely uses its second
    argument, which forces delta == zeta so a single Gaussian increment
    drives the conditioning. All callbacks must be pure and vectorized over
    numpy arrays.

    lipschitz_c is the declared constant of the Lipschitz assumption (summed
    over the four arguments); increasing_flag declares monotonicity of f in
    a_y, which the comparison-theorem routines require.
    """

    f_plain: Callable
    lipschitz_c: float
    g_y: Optional[Callable] = None
    g_z: Optional[Callable] = None
    g_z_joint: bool = False
    increasing_flag: bool = False

    def __post_init__(self):
        if self.lipschitz_c <= 0:
            raise ValueError(f"lipschitz_c must be positive, got {self.lipschitz_c}")
        if self.g_z_joint and self.g_z is None:
            raise ValueError("g_z_joint requires a g_z transform")

    @property
    def uses_anticipated_z(self) -> bool:
        return self.g_z is not None

    def apply_gy(self, values):
        return values if self.g_y is None else self.g_y(values)

    def apply_gz(self, z_future, z_now):
        if self.g_z is None:
            raise ValueError("generator has no anticipated-Z transform")
        return self.g_z(z_future, z_now)


@dataclass(frozen=True)
class TerminalData:
    """Band data: xi(t, w) for Y and eta(t, w) for Z on [T, T + K].

    Both callbacks must accept any real w (vectorized) at every grid time of
    the band and return finite values.
    """

    xi: Callable
    eta: Callable

    @classmethod
    def of_xi(cls, xi: Callable) -> "TerminalData":
        """Terminal data with eta identically zero."""
        return cls(xi=xi, eta=lambda t, w: np.zeros_like(np.asarray(w, dtype=float)))


@dataclass(frozen=True)
class ProblemSpec:
    """A complete anticipated-BSDE instance, validated at construction."""

    grid: TimeGrid
    delta: DelayFunction
    zeta: DelayFunction
    gen: Generator
    terminal: TerminalData
    brownian_dim: int = 1

    def __post_init__(self):
        if self.brownian_dim < 1:
            raise ValueError("brownian_dim must be >= 1")
        for name, delay in (("delta", self.delta), ("zeta", self.zeta)):
            report = validate_delay(delay, self.grid)
            if not report.ok:
                raise MisalignedDelay(f"{name} failed validation: {report.violation}")
        if self.gen.g_z_joint and not np.array_equal(self.delta.table, self.zeta.table):
            raise JointTransformDelayMismatch(
                "joint anticipated-Z transform requires delta == zeta pointwise"
            )
        self._check_h2()

    def _check_h2(self):
        zero = np.zeros(1)
        for t in self.grid.times[: self.grid.i_end + 1]:
            val = np.asarray(self.gen.f_plain(float(t), zero, zero, zero, zero))
            if not np.all(np.isfinite(val)):
                raise NonFiniteGenerator(
                    f"f(t, 0, 0, 0, 0) is not finite at t = {t}"
                )


def estimate_lipschitz(
    gen: Generator,
    probe_box: Sequence[Sequence[float]],
    n_probes: int,
    seed: int,
    t_values: Optional[Sequence[float]] = None,
) -> float:
    """Empirical Lipschitz constant of f over a probe box.

    probe_box is four (lo, hi) pairs bounding (y, z, a_y, a_z). For each of
    n_probes random base points the estimator takes both a fully random
    partner point and single-coordinate perturbations, and returns the
    largest observed difference quotient

        |f(t, p) - f(t, p')| / (|dy| + |dz| + |da_y| + |da_z|).

    Deterministic given the seed.
    """
    if n_probes < 2:
        raise ValueError("n_probes must be >= 2")
    box = np.asarray(probe_box, dtype=float)
    if box.shape != (4, 2) or not np.all(np.isfinite(box)):
        raise ValueError("probe_box must be four finite (lo, hi) pairs")
    if t_values is None:
        t_values = np.linspace(0.0, 1.0, 9)
    t_values = np.asarray(t_values, dtype=float)

    rng = np.random.default_rng(seed)
    lo, hi = box[:, 0], box[:, 1]
    width = hi - lo

    def f_at(t, p):
        val = gen.f_plain(float(t), p[0], p[1], p[2], p[3])
        if not np.all(np.isfinite(val)):
            raise NonFiniteGenerator(f"non-finite generator value at t={t}, args={p}")
        return float(val)

    best = 0.0
    for _ in range(n_probes):
        t = float(rng.choice(t_values))
        p = lo + width * rng.random(4)
        q = lo + width * rng.random(4)
        denom = float(np.sum(np.abs(p - q)))
        if denom > 0:
            best = max(best, abs(f_at(t, p) - f_at(t, q)) / denom)
        # Single-coordinate quotients isolate each argument's slope.
        for k in range(4):
            if width[k] == 0:
                continue
            r = p.copy()
            step = (0.5 - rng.random()) * width[k]
            r[k] = np.clip(r[k] + step, lo[k], hi[k])
            d = abs(r[k] - p[k])
            if d > 1e-12 * max(1.0, width[k]):
                best = max(best, abs(f_at(t, p) - f_at(t, r)) / d)
    return best
