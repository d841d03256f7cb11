"""Distributed difference-of-convex optimization for coupled multi-agent problems.

The core pieces: a block-separable DC problem container, a partially
linearized strongly convex majorizer, relaxed outer iterations with constant
or diminishing steps, and price- or slack-based decompositions of the inner
subproblem so each agent only touches its own variables.  Two application
layers build on the core: friendly-jamming secrecy-rate allocation
(:mod:`dcdecomp.secrecy`) and underlay MIMO spectrum sharing
(:mod:`dcdecomp.mimo`).
"""

from .blocks import BlockPoint, Layout
from .decomposition import (
    InfeasibleSlackError,
    MasterResult,
    Multipliers,
    SlackAllocation,
    best_response,
    dual_gradient,
    dual_solve,
    dual_solve_bisection,
    dual_value,
    master_solve,
    primal_user_solve,
    slater_probe,
)
from .instances import double_well, random_quadratic_dc
from .problem import (
    Coupling,
    DcProblem,
    LipschitzEstimates,
    Polyhedron,
    SmoothFunction,
    check_constant_step,
    coupling_lipschitz,
    descent_constant,
    estimate_lipschitz,
)
from .projections import (
    dykstra,
    project_box,
    project_capped_simplex,
    project_halfspace,
    project_psd_trace,
)
from .sca import SolveTrace, StopRule, TraceRecord, sca_run, sca_run_inexact
from .schedules import StepSchedule, next_step
from .subproblem import (
    SubproblemResult,
    SubproblemSolver,
    joint_projection,
    residual_l,
    residual_r,
    solve_subproblem,
    stationarity_residual,
)
from .surrogate import SurrogateModel, build_surrogate, surrogate_gradient, surrogate_value

__version__ = "0.1.0"

__all__ = [
    "BlockPoint",
    "Layout",
    "SmoothFunction",
    "Coupling",
    "Polyhedron",
    "DcProblem",
    "LipschitzEstimates",
    "estimate_lipschitz",
    "coupling_lipschitz",
    "descent_constant",
    "check_constant_step",
    "SurrogateModel",
    "build_surrogate",
    "surrogate_value",
    "surrogate_gradient",
    "StepSchedule",
    "next_step",
    "project_box",
    "project_halfspace",
    "project_capped_simplex",
    "project_psd_trace",
    "dykstra",
    "joint_projection",
    "residual_l",
    "residual_r",
    "stationarity_residual",
    "SubproblemSolver",
    "SubproblemResult",
    "solve_subproblem",
    "Multipliers",
    "SlackAllocation",
    "InfeasibleSlackError",
    "best_response",
    "dual_gradient",
    "dual_value",
    "dual_solve",
    "dual_solve_bisection",
    "slater_probe",
    "primal_user_solve",
    "MasterResult",
    "master_solve",
    "StopRule",
    "TraceRecord",
    "SolveTrace",
    "sca_run",
    "sca_run_inexact",
    "double_well",
    "random_quadratic_dc",
]
