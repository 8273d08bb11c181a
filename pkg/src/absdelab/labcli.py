"""Command-line front end.

Subcommands: solve (grid solver), picard (Monte Carlo iteration), duality
(forward-vs-backward consistency), control (value function and objectives),
validate (the check harness) and converge (refinement study). Outputs are
deterministic given the seed and flags: identical invocations produce
byte-identical report files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import catalog, validate
from .absde import solve_absde_grid, solve_absde_picard
from .condexp import QuadratureRule, RegressionBasis
from .dualctl import duality_price, evaluate_objective, extract_control, value_function
from .errors import AbsdeLabError, ConfigError, MisalignedDelay
from .model import TimeGrid


def _resolve(problem: str, n_steps: Optional[int]):
    try:
        return catalog.resolve_problem(problem, n_steps=n_steps)
    except MisalignedDelay as exc:
        raise ConfigError(f"--n-steps {n_steps} does not fit {problem!r}: {exc}") from exc
from .paths import generate_ensemble

_SEED_ENV = "ABSDE_LAB_SEED"


@dataclass
class RunConfig:
    """Validated run parameters shared by the subcommands."""

    command: str
    problem: Optional[str] = None
    n_steps: Optional[int] = None
    x_max: Optional[float] = None
    n_x: int = 401
    n_nodes: int = 16
    n_paths: int = 100_000
    degree: int = 4
    seed: int = 0
    threads: int = 1
    out: Optional[str] = None
    fmt: str = "csv"
    refinements: int = 4
    checks: Optional[list] = None
    fast: bool = False
    n_instances: int = 10

    def validate(self):
        bounds = {
            "n_steps": (self.n_steps, 10, 10**6),
            "n_x": (self.n_x, 3, 10**5),
            "n_nodes": (self.n_nodes, 1, 256),
            "n_paths": (self.n_paths, 2, 10**8),
            "degree": (self.degree, 0, 20),
            "threads": (self.threads, 1, 256),
            "refinements": (self.refinements, 2, 10),
            "n_instances": (self.n_instances, 1, 1000),
        }
        for name, (value, lo, hi) in bounds.items():
            if value is not None and not (lo <= value <= hi):
                raise ConfigError(f"--{name.replace('_', '-')} must be in [{lo}, {hi}], got {value}")
        if self.fmt not in ("csv", "json", "junit"):
            raise ConfigError(f"unknown format {self.fmt!r}")


def _json_dump(payload, path):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_solve(cfg: RunConfig) -> int:
    spec = _resolve(cfg.problem, cfg.n_steps)
    rule = QuadratureRule(cfg.n_nodes)
    rule_a = QuadratureRule(256) if spec.gen.uses_anticipated_z and cfg.n_nodes < 256 else None
    surf = solve_absde_grid(spec, rule, x_max=cfg.x_max, n_x=cfg.n_x, rule_anticipated=rule_a)
    exact = catalog.exact_solution(cfg.problem) if cfg.problem in catalog.CATALOG else None
    if exact is not None:
        target = float(exact[0](0.0, 0.0))
        print(f"Y0 = {surf.y0:.6f} (target {target:g})")
    else:
        print(f"Y0 = {surf.y0:.6f}")
    if cfg.out:
        if cfg.fmt == "json":
            _json_dump(
                {
                    "problem": cfg.problem,
                    "y0": surf.y0,
                    "n_steps": surf.grid.n_steps,
                    "n_x": int(surf.x_nodes.size),
                },
                cfg.out,
            )
        else:
            surf.to_csv(cfg.out)
        print(f"surface written to {cfg.out}")
    return 0


def _cmd_picard(cfg: RunConfig) -> int:
    spec = _resolve(cfg.problem, cfg.n_steps)
    ens = generate_ensemble(spec.grid, cfg.n_paths, spec.brownian_dim, cfg.seed, n_workers=cfg.threads)
    report = solve_absde_picard(spec, ens, RegressionBasis(cfg.degree))
    print(
        f"Y0 = {report.y0:.6f} +- {report.y0_stderr:.2e} "
        f"(iterations={report.iterations}, converged={report.converged}, beta={report.beta_used:.4g})"
    )
    if cfg.out:
        if cfg.fmt == "json":
            _json_dump(
                {
                    "problem": cfg.problem,
                    "y0": report.y0,
                    "y0_stderr": report.y0_stderr,
                    "iterations": report.iterations,
                    "converged": report.converged,
                    "beta": report.beta_used,
                    "ratio_trace": report.ratio_trace,
                    "final_delta": report.final_delta,
                },
                cfg.out,
            )
        else:
            with open(cfg.out, "w") as fh:
                fh.write("iteration,delta,ratio\n")
                fh.write(f"1,{report.first_delta:.12g},\n")
                delta = report.first_delta
                for k, ratio in enumerate(report.ratio_trace, start=2):
                    delta = delta * ratio
                    fh.write(f"{k},{delta:.12g},{ratio:.12g}\n")
        print(f"iteration trace written to {cfg.out}")
    return 0


def _cmd_duality(cfg: RunConfig) -> int:
    entries = []
    worst = 0.0
    for idx in range(cfg.n_instances):
        lin = (
            catalog.linear_spec()
            if idx == 0 and (cfg.problem in (None, "eq2-linear"))
            else catalog.random_linear_spec(cfg.seed + idx)
        )
        n_steps = cfg.n_steps or 300
        grid = TimeGrid(1.0, lin.theta, n_steps)
        surf = solve_absde_grid(lin.to_problem_spec(grid), QuadratureRule(cfg.n_nodes), n_x=cfg.n_x)
        ens = generate_ensemble(grid, cfg.n_paths, 1, cfg.seed + 100 + idx, n_workers=cfg.threads)
        price, se = duality_price(lin, 0.0, ens)
        tol = 3 * se + 5 * grid.dt
        entries.append(
            {
                "instance": idx,
                "y0_bsde": surf.y0,
                "y0_duality": price,
                "stderr": se,
                "abs_diff": abs(price - surf.y0),
                "tolerance": tol,
                "within_tolerance": bool(abs(price - surf.y0) <= tol),
            }
        )
        worst = max(worst, abs(price - surf.y0) - tol)
        print(
            f"instance {idx}: grid Y0 = {surf.y0:.6f}, duality = {price:.6f} "
            f"+- {se:.2e} (|diff| = {abs(price - surf.y0):.4g}, tol = {tol:.4g})"
        )
    if cfg.out:
        _json_dump(entries, cfg.out)
        print(f"duality report written to {cfg.out}")
    return 0 if worst <= 0 else 1


def _cmd_control(cfg: RunConfig) -> int:
    cp = catalog.control_problem()
    n_steps = cfg.n_steps or 300
    grid = TimeGrid(1.0, cp.theta, n_steps)
    surf = value_function(cp, grid, QuadratureRule(cfg.n_nodes), x_max=cfg.x_max, n_x=cfg.n_x)
    ens = generate_ensemble(grid, cfg.n_paths, 1, cfg.seed, n_workers=cfg.threads)
    table = []
    ok = True
    for u in cp.control_set:
        j_u, se = evaluate_objective(cp, float(u), ens)
        tol = 3 * se + 5 * grid.dt
        ok = ok and (j_u <= surf.y0 + tol)
        table.append({"u": float(u), "J": j_u, "stderr": se})
        print(f"u = {u:.3f}: J = {j_u:.6f} +- {se:.2e}")
    fb = extract_control(cp, surf, rule=QuadratureRule(cfg.n_nodes))
    j_fb, se_fb = evaluate_objective(cp, fb, ens)
    print(f"value function Y0 = {surf.y0:.6f}; J(extracted feedback) = {j_fb:.6f} +- {se_fb:.2e}")
    if cfg.out:
        _json_dump(
            {
                "y0_value": surf.y0,
                "per_control": table,
                "extracted_feedback_J": j_fb,
                "extracted_feedback_stderr": se_fb,
                "value_dominates_all": bool(ok),
            },
            cfg.out,
        )
        print(f"control report written to {cfg.out}")
    return 0 if ok else 1


def _cmd_validate(cfg: RunConfig) -> int:
    names = cfg.checks or None
    results = validate.run_checks(names, seed=cfg.seed if cfg.seed else None, fast=cfg.fast)
    n_fail = sum(not r.passed for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}")
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    if cfg.out:
        if cfg.fmt == "junit":
            validate.results_to_junit(results, cfg.out)
        else:
            validate.results_to_json(results, cfg.out)
        print(f"check report written to {cfg.out}")
    return 0 if n_fail == 0 else 1


def _cmd_converge(cfg: RunConfig) -> int:
    if cfg.problem not in catalog.CATALOG or catalog.exact_solution(cfg.problem) is None:
        raise ConfigError(f"converge needs a catalog problem with an exact solution, got {cfg.problem!r}")
    exact_y, exact_z = catalog.exact_solution(cfg.problem)
    base_steps = cfg.n_steps or 75
    base_nx = cfg.n_x
    rows = []
    for r in range(cfg.refinements):
        n_steps = base_steps * 2**r
        n_x = (base_nx - 1) * 2**r + 1
        spec = catalog.build_problem(cfg.problem, n_steps=n_steps)
        rule_a = QuadratureRule(256) if spec.gen.uses_anticipated_z else None
        surf = solve_absde_grid(spec, QuadratureRule(cfg.n_nodes), n_x=n_x, rule_anticipated=rule_a)
        mask = surf.interior_mask(0.5)
        xs = surf.x_nodes[mask]
        grid = surf.grid
        err = 0.0
        for i, t in enumerate(grid.times):
            err = max(err, float(np.max(np.abs(surf.y_values[i][mask] - exact_y(t, xs)))))
        for i in range(grid.i_end):
            t = grid.times[i]
            err = max(err, float(np.max(np.abs(surf.z_values[i][mask] - exact_z(t, xs)))))
        rows.append({"n_steps": n_steps, "dt": grid.dt, "n_x": n_x, "error": err})
        print(f"n_steps = {n_steps:6d}  dt = {grid.dt:.6g}  n_x = {n_x:5d}  max error = {err:.6g}")
    dts = np.array([row["dt"] for row in rows])
    errs = np.array([max(row["error"], 1e-300) for row in rows])
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    print(f"fitted order: {slope:.3f}")
    if cfg.out:
        if cfg.fmt == "json":
            _json_dump({"rows": rows, "slope": slope}, cfg.out)
        else:
            with open(cfg.out, "w") as fh:
                fh.write("n_steps,dt,n_x,error\n")
                for row in rows:
                    fh.write(f"{row['n_steps']},{row['dt']:.12g},{row['n_x']},{row['error']:.12g}\n")
        print(f"convergence table written to {cfg.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="absdelab",
        description="Numerical laboratory for anticipated backward stochastic differential equations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, problem=True, n_x_default=401):
        if problem:
            p.add_argument("problem", help="catalog id or config file path")
        p.add_argument("--n-steps", type=int, default=None)
        p.add_argument("--x-max", type=float, default=None)
        p.add_argument("--n-x", type=int, default=n_x_default)
        p.add_argument("--n-nodes", type=int, default=16)
        p.add_argument("--n-paths", type=int, default=100_000)
        p.add_argument("--degree", type=int, default=4)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", default=None)
        p.add_argument("--format", dest="fmt", default="csv", choices=["csv", "json", "junit"])

    add_common(sub.add_parser("solve", help="deterministic grid solve"))
    add_common(sub.add_parser("picard", help="Monte Carlo Picard iteration"))

    p_dual = sub.add_parser("duality", help="forward/backward consistency on linear instances")
    p_dual.add_argument("problem", nargs="?", default="eq2-linear")
    p_dual.add_argument("--n-instances", type=int, default=10)
    add_common(p_dual, problem=False)

    p_ctrl = sub.add_parser("control", help="value function and simulated objectives")
    add_common(p_ctrl, problem=False)

    p_val = sub.add_parser("validate", help="run reproduction checks")
    p_val.add_argument("--all", action="store_true", help="run every check")
    p_val.add_argument("--check", action="append", dest="checks", choices=sorted(validate.CHECKS))
    p_val.add_argument("--fast", action="store_true", help="reduced sizes for smoke runs")
    add_common(p_val, problem=False)

    p_conv = sub.add_parser(
        "converge",
        help="coupled refinement study (dt and dx halve together) against the exact solution",
    )
    p_conv.add_argument("--refinements", type=int, default=4)
    add_common(p_conv, n_x_default=151)
    return parser


_COMMANDS = {
    "solve": _cmd_solve,
    "picard": _cmd_picard,
    "duality": _cmd_duality,
    "control": _cmd_control,
    "validate": _cmd_validate,
    "converge": _cmd_converge,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get(_SEED_ENV, "0"))
    cfg = RunConfig(
        command=args.command,
        problem=getattr(args, "problem", None),
        n_steps=args.n_steps,
        x_max=args.x_max,
        n_x=args.n_x,
        n_nodes=args.n_nodes,
        n_paths=args.n_paths,
        degree=args.degree,
        seed=seed,
        threads=args.threads,
        out=args.out,
        fmt=args.fmt,
        refinements=getattr(args, "refinements", 4),
        checks=getattr(args, "checks", None),
        fast=getattr(args, "fast", False),
        n_instances=getattr(args, "n_instances", 10),
    )
    try:
        cfg.validate()
        if cfg.command == "validate" and not cfg.checks and not getattr(args, "all", False):
            raise ConfigError("validate needs --all or at least one --check NAME")
        return _COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AbsdeLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
