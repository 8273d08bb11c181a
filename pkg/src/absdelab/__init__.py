"""Numerical laboratory for anticipated backward stochastic differential
equations: forward delayed-SDE simulation, two independent backward solvers,
the forward/backward duality formula, a finite-control value-function solver
and a reproduction harness for the theory's worked examples and estimates.
"""

from .absde import (
    SolveReport,
    contraction_beta,
    delay_sensitivity,
    monotone_iteration,
    solve_absde_grid,
    solve_absde_picard,
)
from .bsde import ValueSurface, solve_bsde_grid, solve_bsde_mc
from .condexp import QuadratureRule, RegressionBasis, quad_condexp, regress_condexp
from .dualctl import (
    ControlProblem,
    LinearAbsdeSpec,
    duality_price,
    evaluate_objective,
    extract_control,
    value_function,
)
from .model import (
    DelayFunction,
    Generator,
    ProblemSpec,
    TerminalData,
    TimeGrid,
    estimate_lipschitz,
    validate_delay,
)
from .paths import PathEnsemble, generate_ensemble, increment_slice, load_ensemble, save_ensemble
from .sdde import SddeCoefficients, StatePaths, simulate_density, simulate_sdde

__version__ = "0.1.0"

__all__ = [
    "ControlProblem",
    "DelayFunction",
    "Generator",
    "LinearAbsdeSpec",
    "PathEnsemble",
    "ProblemSpec",
    "QuadratureRule",
    "RegressionBasis",
    "SddeCoefficients",
    "SolveReport",
    "StatePaths",
    "TerminalData",
    "TimeGrid",
    "ValueSurface",
    "contraction_beta",
    "delay_sensitivity",
    "duality_price",
    "estimate_lipschitz",
    "evaluate_objective",
    "extract_control",
    "generate_ensemble",
    "increment_slice",
    "load_ensemble",
    "monotone_iteration",
    "quad_condexp",
    "regress_condexp",
    "save_ensemble",
    "simulate_density",
    "simulate_sdde",
    "solve_absde_grid",
    "solve_absde_picard",
    "solve_bsde_grid",
    "solve_bsde_mc",
    "validate_delay",
    "value_function",
    "__version__",
]
