"""Inner convex subproblem: residuals, joint projection, reference solver.

Each outer iteration minimizes the separable majorizer m(.; anchor) over the
joint set Xi = (X_1 x ... x X_I) intersect {sum_i h_i(x_i) <= 0}.  This
module provides the Euclidean projection onto Xi (Dykstra over the local
product set and the coupling half-spaces), the two inexactness residuals
used as solution certificates, and an accelerated projected-gradient
reference solver that works directly on the stacked vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import nnls

from .problem import DcProblem
from .projections import dykstra
from .surrogate import SurrogateModel, surrogate_gradient, surrogate_value

__all__ = [
    "joint_projection",
    "residual_l",
    "residual_r",
    "stationarity_residual",
    "fista",
    "FistaResult",
    "SubproblemSolver",
    "SubproblemResult",
    "solve_subproblem",
]

Array = np.ndarray


def _joint_factors(problem: DcProblem) -> list[Callable[[Array], Array]]:
    factors: list[Callable[[Array], Array]] = [problem.project_local]
    coup = problem.coupling
    if coup is None:
        return factors
    if not coup.is_linear:
        raise NotImplementedError(
            "joint projection needs per-constraint projections; only affine couplings are supported"
        )
    A = coup.stacked_matrix()
    b = -coup.total_offset()  # rows a_k . x <= b_k
    for k in range(coup.n_c):
        a_k = A[k]
        nrm2 = float(a_k @ a_k)
        if nrm2 == 0.0:
            continue

        def proj(v: Array, a=a_k, bk=float(b[k]), nrm2=nrm2) -> Array:
            viol = float(a @ v) - bk
            if viol <= 0.0:
                return v
            return v - (viol / nrm2) * a

        factors.append(proj)
    return factors


def joint_projection(
    problem: DcProblem, v: Array, tol: float = 1e-10, max_sweeps: int = 10_000
) -> Array:
    """Project a stacked vector onto Xi by Dykstra's alternating projections."""
    return dykstra(v, _joint_factors(problem), tol=tol, max_sweeps=max_sweeps)


def residual_l(
    problem: DcProblem, model: SurrogateModel, z: Array, projection_tol: float = 1e-10
) -> float:
    """Fixed-point gap ||z - P_Xi(z - grad m(z))|| of the projected-gradient map.

    Valid for any z; bounds the distance to the exact inner solution by a
    constant depending only on the strong-convexity modulus and the gradient
    Lipschitz constant of the majorizer.
    """
    grad = surrogate_gradient(model, z, problem)
    return float(np.linalg.norm(z - joint_projection(problem, z - grad, tol=projection_tol)))


def residual_r(
    problem: DcProblem,
    model: SurrogateModel,
    z: Array,
    active_tol: float = 1e-8,
    feas_tol: float = 1e-6,
) -> float:
    """Normal-cone residual || P_{N(z, Xi)}(-grad m(z)) + grad m(z) ||.

    Requires a polyhedral description of Xi and a feasible z: the normal cone
    is then the nonnegative span of the active constraint rows, and the
    projection reduces to a nonnegative least-squares fit of -grad m(z) by
    those rows.
    """
    if problem.polyhedron is None:
        raise ValueError("residual_r needs a polyhedral description of the joint set")
    if problem.feasibility_error(z) > feas_tol:
        raise ValueError("residual_r is defined for feasible points only")
    grad = surrogate_gradient(model, z, problem)
    target = -grad
    active = problem.polyhedron.active_rows(z, tol=active_tol)
    if active.size == 0:
        return float(np.linalg.norm(target))
    basis = problem.polyhedron.A[active].T  # columns span the normal cone
    _, rnorm = nnls(basis, target)
    return float(rnorm)


def stationarity_residual(problem: DcProblem, x: Array, projection_tol: float = 1e-10) -> float:
    """||x - P_Xi(x - grad theta(x))||; zero exactly at stationary points."""
    grad = problem.grad_theta(x)
    return float(np.linalg.norm(x - joint_projection(problem, x - grad, tol=projection_tol)))


@dataclass
class FistaResult:
    point: Array
    iterations: int
    residual: float
    converged: bool


def fista(
    value: Callable[[Array], float],
    gradient: Callable[[Array], Array],
    project: Callable[[Array], Array],
    x0: Array,
    residual_target: float,
    max_iterations: int = 2000,
    lipschitz0: float = 1.0,
    strong_mu: float = 0.0,
) -> FistaResult:
    """Accelerated projected gradient with backtracking and adaptive restart.

    Minimizes a smooth convex function over a closed convex set given by an
    exact projection oracle.  Terminates when the unit-step fixed-point gap
    ||x - P(x - grad(x))|| reaches ``residual_target``.  A positive
    ``strong_mu`` switches to the constant-momentum scheme for strongly
    convex objectives, which converges linearly.

    The unit-step gap needs a second projection, so it is only evaluated
    when the cheap 1/L-step gap suggests the target is within reach (and at
    least every fifth iteration).
    """
    x = np.asarray(project(np.array(x0, dtype=float)), dtype=float)
    y = x.copy()
    t = 1.0
    # L only grows: near the solution the curvature term falls below the
    # rounding slack of the sufficient-decrease test, so any decay lets the
    # step overshoot and the iterates limit-cycle instead of converging.
    L = max(lipschitz0, 1e-12)
    res = math.inf

    def certified(pt: Array) -> float:
        gap = pt - np.asarray(project(pt - gradient(pt)), dtype=float)
        return float(np.linalg.norm(gap))

    for k in range(max_iterations):
        gy = gradient(y)
        fy = value(y)
        while True:
            z = np.asarray(project(y - gy / L), dtype=float)
            dz = z - y
            quad = fy + float(gy @ dz) + 0.5 * L * float(dz @ dz)
            if value(z) <= quad + 1e-12 * (1.0 + abs(quad)) or L > 1e16:
                break
            L *= 2.0
        if float((y - z) @ (z - x)) > 0.0:
            # momentum points uphill: restart from the last iterate
            t = 1.0
            y = x.copy()
            continue
        if strong_mu > 0.0 and strong_mu < L:
            kappa = math.sqrt(L / strong_mu)
            beta = (kappa - 1.0) / (kappa + 1.0)
        else:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_next
            t = t_next
        y = z + beta * (z - x)
        step_gap = float(np.linalg.norm(z - x)) * (1.0 + L)
        x = z
        if step_gap <= 4.0 * residual_target or (k + 1) % 5 == 0 or k + 1 == max_iterations:
            res = certified(x)
            if res <= residual_target:
                return FistaResult(point=x, iterations=k + 1, residual=res, converged=True)
    if not math.isfinite(res):
        res = certified(x)
    return FistaResult(point=x, iterations=max_iterations, residual=res, converged=res <= residual_target)


@dataclass
class SubproblemSolver:
    """Strategy and stopping configuration for the inner solve.

    ``tolerance`` is the certified fixed-point gap of the returned point;
    ``math.inf`` disables the certificate and trusts the strategy's native
    stopping rule (the cheap price-stability rule of the decomposition
    loops).  ``max_inner_iterations`` caps the strategy's own iterations.
    """

    strategy: str = "direct_projected_gradient"
    tolerance: float = 1e-8
    max_inner_iterations: int = 2000
    step_size: float | None = None      # price step for the decomposition strategies
    step_kind: str = "constant"         # or "diminishing"
    lambda_tol: float = 1e-8            # price-change stop
    inner_tol: float | None = None      # per-agent solve tolerance (None = 0.1/t^2 schedule)
    warm_start: bool = True
    parallel: bool = False

    _STRATEGIES = ("direct_projected_gradient", "dual_decomposition", "primal_decomposition")

    def __post_init__(self):
        if self.strategy not in self._STRATEGIES:
            raise ValueError(f"strategy must be one of {self._STRATEGIES}, got {self.strategy!r}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive (math.inf disables the certificate)")
        if self.max_inner_iterations < 1:
            raise ValueError("max_inner_iterations must be at least 1")


@dataclass
class SubproblemResult:
    point: Array
    multipliers: Array | None
    inner_iterations: int
    residual: float | None
    converged: bool


def solve_subproblem(
    problem: DcProblem,
    model: SurrogateModel,
    solver: SubproblemSolver,
    start: Array | None = None,
    multipliers0: Array | None = None,
    tolerance_override: float | None = None,
    check_slater: bool = False,
) -> SubproblemResult:
    """Minimize the majorizer over Xi with the configured strategy.

    The direct strategy runs accelerated projected gradient on the stacked
    vector with Dykstra projections.  The decomposition strategies delegate
    to :mod:`dcdecomp.decomposition` and, when a finite tolerance is
    requested, tighten their price loop until the fixed-point certificate
    holds or the iteration budget runs out.
    """
    from . import decomposition  # deferred: decomposition builds on this module's residuals

    tol = solver.tolerance if tolerance_override is None else tolerance_override
    start_vec = np.array(model.anchor if start is None else start, dtype=float)

    if solver.strategy == "direct_projected_gradient":
        target = tol if math.isfinite(tol) else 1e-8
        proj_tol = min(1e-10, 0.01 * target) if target < 1e-8 else 1e-10
        out = fista(
            value=lambda v: surrogate_value(model, v, problem),
            gradient=lambda v: surrogate_gradient(model, v, problem),
            project=lambda v: joint_projection(problem, v, tol=proj_tol),
            x0=start_vec,
            residual_target=target,
            max_iterations=solver.max_inner_iterations,
            lipschitz0=1.0 + float(np.max(model.tau)),
            strong_mu=float(np.min(model.tau + np.asarray(problem.c_f_lower))),
        )
        return SubproblemResult(
            point=out.point,
            multipliers=None,
            inner_iterations=out.iterations,
            residual=out.residual,
            converged=out.converged,
        )

    if problem.coupling is None:
        raise ValueError("decomposition strategies need a coupling constraint; use the direct strategy")

    if solver.strategy == "dual_decomposition":
        lam_tol = solver.lambda_tol
        total_iters = 0
        lam = multipliers0
        result = None
        inner_tol = solver.inner_tol
        if math.isfinite(tol):
            # a certified assembled point needs per-agent solves at least as tight
            inner_tol = min(inner_tol or math.inf, max(0.1 * tol, 1e-12), 1e-6)
        for attempt in range(6):
            result = decomposition.dual_solve(
                model,
                problem,
                lambda0=lam,
                step_size=solver.step_size,
                step_kind=solver.step_kind,
                lambda_tol=lam_tol,
                max_iterations=solver.max_inner_iterations,
                inner_tol=inner_tol,
                parallel=solver.parallel,
                check_slater=check_slater and attempt == 0,
            )
            total_iters += result.iterations
            if not math.isfinite(tol):
                return SubproblemResult(
                    point=result.point,
                    multipliers=result.multipliers,
                    inner_iterations=total_iters,
                    residual=None,
                    converged=result.converged,
                )
            res = residual_l(problem, model, result.point)
            if res <= tol:
                return SubproblemResult(
                    point=result.point,
                    multipliers=result.multipliers,
                    inner_iterations=total_iters,
                    residual=res,
                    converged=True,
                )
            lam = result.multipliers
            lam_tol = max(lam_tol * 0.05, 1e-14)
            inner_tol = max(0.05 * inner_tol, 1e-12)
        return SubproblemResult(
            point=result.point,
            multipliers=result.multipliers,
            inner_iterations=total_iters,
            residual=res,
            converged=False,
        )

    # primal decomposition
    result = decomposition.master_solve(
        model,
        problem,
        max_iterations=solver.max_inner_iterations,
        parallel=solver.parallel,
    )
    res = residual_l(problem, model, result.point) if math.isfinite(tol) else None
    return SubproblemResult(
        point=result.point,
        multipliers=None,
        inner_iterations=result.iterations,
        residual=res,
        converged=(res <= tol) if res is not None else result.converged,
    )
