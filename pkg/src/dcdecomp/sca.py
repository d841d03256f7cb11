"""Outer loop: successive convex majorization with relaxed updates.

Each iteration builds the separable majorizer at the current profile, solves
(or approximately solves) it over the joint set, and relaxes:

    x_{nu+1} = x_nu + gamma_nu (z_nu - x_nu)

where z_nu is the inner solution.  The exact loop stops on a small objective
change or a small inner step; the inexact loop additionally certifies each
inner solution with a fixed-point residual no larger than alpha * gamma_nu,
a summable error sequence under square-summable steps.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .blocks import BlockPoint
from .problem import DcProblem
from .schedules import StepSchedule
from .subproblem import SubproblemResult, SubproblemSolver, solve_subproblem
from .surrogate import build_surrogate

__all__ = ["StopRule", "TraceRecord", "SolveTrace", "sca_run", "sca_run_inexact"]

TRACE_HEADER = ("iter", "theta", "gamma", "step_norm", "coupling_violation", "inner_iters", "wall_ms")


@dataclass(frozen=True)
class StopRule:
    """Outer termination: objective stall, step-size floor, or budget.

    ``delta_objective`` stops when |theta_{nu+1} - theta_nu| drops below it;
    ``step_norm`` stops on ||z_nu - x_nu||; ``max_iterations`` always caps.
    """

    delta_objective: float | None = 1e-5
    step_norm: float | None = None
    max_iterations: int = 500

    def __post_init__(self):
        if self.delta_objective is None and self.step_norm is None and self.max_iterations <= 0:
            raise ValueError("at least one stopping criterion is required")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    theta: float
    gamma: float
    step_norm: float
    coupling_violation: float
    inner_iterations: int
    wall_ms: float
    certificate: float | None = None
    phase: str = "outer"


@dataclass
class SolveTrace:
    """Per-iteration history of an outer run.

    ``records`` covers the main loop; refinement iterations appended after
    the primary stop fired carry phase="refine".  ``main_iterations`` is the
    count at the primary stop (the number comparable across step rules).
    """

    records: list[TraceRecord] = field(default_factory=list)
    inner_records: list[tuple] = field(default_factory=list)
    converged: bool = False
    main_iterations: int = 0
    theta_initial: float = math.nan

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def theta_final(self) -> float:
        return self.records[-1].theta if self.records else self.theta_initial

    def thetas(self) -> np.ndarray:
        return np.array([r.theta for r in self.records])

    def to_csv(self, path_or_buffer=None, include_phase: bool | None = None) -> str | None:
        """Write the trace as CSV; returns the text when no target is given.

        The column set is exactly the documented header; a trailing ``phase``
        column is appended only when refinement or inner records are present
        (or when ``include_phase`` forces it).
        """
        has_phases = any(r.phase != "outer" for r in self.records) or bool(self.inner_records)
        with_phase = has_phases if include_phase is None else include_phase
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = TRACE_HEADER + (("phase",) if with_phase else ())
        writer.writerow(header)
        for r in self.records:
            row = [
                r.iteration,
                f"{r.theta:.12g}",
                f"{r.gamma:.12g}",
                f"{r.step_norm:.12g}",
                f"{r.coupling_violation:.12g}",
                r.inner_iterations,
                f"{r.wall_ms:.3f}",
            ]
            if with_phase:
                row.append(r.phase)
            writer.writerow(row)
        if with_phase:
            for rec in self.inner_records:
                writer.writerow(list(rec))
        text = buf.getvalue()
        if path_or_buffer is None:
            return text
        if hasattr(path_or_buffer, "write"):
            path_or_buffer.write(text)
            return None
        with open(path_or_buffer, "w") as fh:
            fh.write(text)
        return None


def _prepare_start(problem: DcProblem, x0, feas_tol: float = 1e-6) -> np.ndarray:
    x = problem.layout.to_vector(x0)
    err = problem.feasibility_error(x)
    if err > feas_tol:
        raise ValueError(f"infeasible starting point (feasibility error {err:.3e})")
    theta0 = problem.theta(x)
    if not math.isfinite(theta0):
        raise ValueError("objective is not finite at the starting point")
    return x


def _run(
    problem: DcProblem,
    x0,
    tau,
    schedule: StepSchedule,
    solver: SubproblemSolver,
    stop: StopRule,
    error_alpha: float | None,
    refine_step_norm: float | None,
    refine_max_iterations: int,
) -> tuple[BlockPoint, SolveTrace]:
    x = _prepare_start(problem, x0)
    trace = SolveTrace(theta_initial=problem.theta(x))
    theta_prev = trace.theta_initial
    warm_multipliers = None
    schedule = schedule.copy()
    phase = "outer"
    refine_left = refine_max_iterations if refine_step_norm is not None else 0
    budget = stop.max_iterations + refine_left

    for nu in range(budget):
        t0 = time.perf_counter()
        gamma = schedule.gamma
        model = build_surrogate(problem, x, tau)
        tol_override = None
        if error_alpha is not None:
            tol_override = error_alpha * gamma
        result: SubproblemResult = solve_subproblem(
            problem,
            model,
            solver,
            start=x,
            multipliers0=warm_multipliers if solver.warm_start else None,
            tolerance_override=tol_override,
            check_slater=(nu == 0),
        )
        warm_multipliers = result.multipliers
        z = result.point
        step = z - x
        step_norm = float(np.linalg.norm(step))
        x_next = x + gamma * step
        theta_next = problem.theta(x_next)
        if not math.isfinite(theta_next):
            raise FloatingPointError(f"objective became non-finite at outer iteration {nu}")
        wall_ms = (time.perf_counter() - t0) * 1e3
        trace.records.append(
            TraceRecord(
                iteration=nu,
                theta=theta_next,
                gamma=gamma,
                step_norm=step_norm,
                coupling_violation=problem.coupling_violation(x_next),
                inner_iterations=result.inner_iterations,
                wall_ms=wall_ms,
                certificate=result.residual,
                phase=phase,
            )
        )
        x = x_next
        schedule.advance()

        if phase == "outer":
            stalled = (
                stop.delta_objective is not None
                and abs(theta_next - theta_prev) <= stop.delta_objective
            )
            small_step = stop.step_norm is not None and step_norm <= stop.step_norm
            theta_prev = theta_next
            if stalled or small_step or nu + 1 >= stop.max_iterations:
                trace.main_iterations = nu + 1
                trace.converged = stalled or small_step
                if refine_step_norm is not None and step_norm > refine_step_norm:
                    phase = "refine"
                    continue
                break
        else:
            theta_prev = theta_next
            refine_left -= 1
            if step_norm <= refine_step_norm or refine_left <= 0:
                break
    else:
        if phase == "outer":
            trace.main_iterations = budget
    return problem.layout.to_point(x), trace


def sca_run(
    problem: DcProblem,
    x0,
    tau,
    schedule: StepSchedule,
    solver: SubproblemSolver | None = None,
    stop: StopRule | None = None,
    refine_step_norm: float | None = None,
    refine_max_iterations: int = 400,
) -> tuple[BlockPoint, SolveTrace]:
    """Run the exact outer loop from a feasible point.

    Parameters
    ----------
    problem, x0, tau : problem data, feasible start, proximal weights.
    schedule : StepSchedule
        Consumed statefully; a copy is advanced, the input is untouched.
    solver : SubproblemSolver, optional
        Inner strategy; defaults to the direct reference solver.
    stop : StopRule, optional
        Primary termination; default stops on |theta change| <= 1e-5.
    refine_step_norm : float, optional
        When set, the loop keeps iterating after the primary stop until the
        inner step norm also drops below this value (phase "refine" in the
        trace).  ``main_iterations`` still reports the primary stop.
    """
    solver = solver or SubproblemSolver()
    stop = stop or StopRule()
    return _run(problem, x0, tau, schedule, solver, stop,
                error_alpha=None,
                refine_step_norm=refine_step_norm,
                refine_max_iterations=refine_max_iterations)


def sca_run_inexact(
    problem: DcProblem,
    x0,
    tau,
    schedule: StepSchedule,
    solver: SubproblemSolver | None = None,
    error_alpha: float = 0.1,
    stop: StopRule | None = None,
) -> tuple[BlockPoint, SolveTrace]:
    """Outer loop with certified inexact inner solves.

    Every inner solution z_nu must satisfy the fixed-point certificate
    residual <= ``error_alpha`` * gamma_nu, which makes the inexactness
    sequence summable against any square-summable step schedule.  The
    certificate actually achieved is stored in each trace record.
    """
    if not error_alpha > 0:
        raise ValueError(f"error_alpha must be positive, got {error_alpha}")
    solver = solver or SubproblemSolver()
    stop = stop or StopRule()
    return _run(problem, x0, tau, schedule, solver, stop,
                error_alpha=error_alpha,
                refine_step_norm=None,
                refine_max_iterations=0)
