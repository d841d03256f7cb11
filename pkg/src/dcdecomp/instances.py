"""Synthetic DC program generators with analytically known constants.

Used by the test-suite oracles and by the generic experiment runner: every
instance carries exact gradient Lipschitz constants and convexity moduli so
step-size certificates and descent inequalities can be checked without
sampling error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import Coupling, DcProblem, LipschitzEstimates, Polyhedron, SmoothFunction
from .projections import project_box

__all__ = ["QuadraticDcInstance", "random_quadratic_dc", "double_well"]

Array = np.ndarray


@dataclass(frozen=True)
class QuadraticDcInstance:
    """A random quadratic DC program with its exact constants.

    f_i(x) = 0.5 x.A_i x + p_i.x and g_i(x) = 0.5 x.B_i x + q_i.x with
    A_i, B_i symmetric positive semidefinite, box-constrained blocks and an
    affine coupling with nonnegative rows, so the origin is strictly
    feasible (a Slater point) whenever the offsets are negative.
    """

    problem: DcProblem
    A: tuple[Array, ...]
    B: tuple[Array, ...]
    p: tuple[Array, ...]
    q: tuple[Array, ...]
    lower: Array
    upper: Array
    estimates: LipschitzEstimates

    def interior_point(self) -> Array:
        return np.zeros(self.problem.total_dim)


def _psd(rng: np.random.Generator, n: int, scale: float, ridge: float) -> Array:
    F = rng.standard_normal((n, n)) * scale / np.sqrt(n)
    return F.T @ F + ridge * np.eye(n)


def random_quadratic_dc(
    num_agents: int = 3,
    dims=None,
    n_c: int = 1,
    seed: int = 0,
    box_radius: float = 1.0,
    curvature: float = 1.0,
    ridge: float = 0.05,
) -> QuadraticDcInstance:
    """Draw a random box-and-budget constrained quadratic DC program.

    Parameters
    ----------
    num_agents : int
        Number of blocks I.
    dims : sequence of int, optional
        Block sizes; defaults to sizes drawn in {1, ..., 4}.
    n_c : int
        Number of coupling rows (0 disables the coupling).
    seed : int
        RNG seed; instances are a pure function of their arguments.
    box_radius : float
        Half-width of the per-coordinate boxes.
    curvature : float
        Scale of the random PSD factors.
    ridge : float
        Diagonal shift added to every A_i and B_i, so c_{f_i} >= ridge.
    """
    rng = np.random.default_rng(seed)
    if dims is None:
        dims = tuple(int(d) for d in rng.integers(1, 5, size=num_agents))
    else:
        dims = tuple(int(d) for d in dims)
        num_agents = len(dims)
    n = int(np.sum(dims))

    A = tuple(_psd(rng, n, curvature, ridge) for _ in range(num_agents))
    B = tuple(_psd(rng, n, 0.6 * curvature, ridge) for _ in range(num_agents))
    # downward drift in the convex parts pushes minimizers into the budget,
    # so the coupling is active on a healthy fraction of instances
    p = tuple(rng.standard_normal(n) * 0.5 - 0.6 for _ in range(num_agents))
    q = tuple(rng.standard_normal(n) * 0.3 for _ in range(num_agents))

    def make_quad(M: Array, lin: Array) -> SmoothFunction:
        return SmoothFunction(
            value=lambda x, M=M, lin=lin: 0.5 * float(x @ (M @ x)) + float(lin @ x),
            gradient=lambda x, M=M, lin=lin: M @ x + lin,
        )

    f = tuple(make_quad(Ai, pi) for Ai, pi in zip(A, p))
    g = tuple(make_quad(Bi, qi) for Bi, qi in zip(B, q))

    lower = np.full(n, -box_radius)
    upper = np.full(n, box_radius)
    offsets = np.concatenate([[0], np.cumsum(dims)])
    projections = tuple(
        (lambda v, lo=lower[offsets[i]: offsets[i + 1]], hi=upper[offsets[i]: offsets[i + 1]]:
         project_box(v, lo, hi))
        for i in range(num_agents)
    )

    coupling = None
    rows_A = []
    rows_b = []
    if n_c > 0:
        mats, offs = [], []
        budget = 0.05 + 0.25 * rng.random(n_c)       # tight, strictly interior at 0
        for i in range(num_agents):
            Ai = rng.random((n_c, dims[i]))          # nonnegative rows
            mats.append(Ai)
            offs.append(-budget / num_agents)
        coupling = Coupling.linear(mats, offs)
        rows_A.append(coupling.stacked_matrix())
        rows_b.append(-coupling.total_offset())

    # polyhedral description: boxes as +-identity rows plus coupling rows
    eye = np.eye(n)
    rows_A = [eye, -eye] + rows_A
    rows_b = [upper, -lower] + rows_b
    poly = Polyhedron(A=np.vstack(rows_A), b=np.concatenate(rows_b))

    # exact constants for quadratics
    L_f = tuple(float(np.linalg.norm(Ai, 2)) for Ai in A)
    L_g = tuple(float(np.linalg.norm(Bi, 2)) for Bi in B)
    c_f = []
    for i, Ai in enumerate(A):
        sl = slice(offsets[i], offsets[i + 1])
        c_f.append(float(np.linalg.eigvalsh(Ai[sl, sl]).min()))
    M_theta = sum(A) - sum(B)
    L_theta = float(np.linalg.norm(M_theta, 2))

    problem = DcProblem(
        dims=dims,
        f=f,
        g=g,
        local_projections=projections,
        coupling=coupling,
        c_f_lower=tuple(c_f),
        polyhedron=poly,
    )
    estimates = LipschitzEstimates(
        L_f=L_f, L_g=L_g, c_f=tuple(c_f), L_theta=L_theta, source="user"
    )
    return QuadraticDcInstance(
        problem=problem, A=A, B=B, p=p, q=q, lower=lower, upper=upper, estimates=estimates
    )


def double_well(radius: float = 2.0) -> tuple[DcProblem, LipschitzEstimates]:
    """Scalar nonconvex benchmark theta(x) = x^4 - x^2 on [-radius, radius].

    Split as f(x) = x^4 + x^2 and g(x) = 2 x^2, both convex; the interior
    stationary points are 0 and +-sqrt(1/2).
    """
    f = SmoothFunction(
        value=lambda x: float(x[0] ** 4 + x[0] ** 2),
        gradient=lambda x: np.array([4.0 * x[0] ** 3 + 2.0 * x[0]]),
    )
    g = SmoothFunction(
        value=lambda x: float(2.0 * x[0] ** 2),
        gradient=lambda x: np.array([4.0 * x[0]]),
    )
    problem = DcProblem(
        dims=(1,),
        f=(f,),
        g=(g,),
        local_projections=(lambda v: np.clip(v, -radius, radius),),
        c_f_lower=(2.0,),
        polyhedron=Polyhedron(A=np.array([[1.0], [-1.0]]), b=np.array([radius, radius])),
    )
    L_f = 12.0 * radius**2 + 2.0
    estimates = LipschitzEstimates(
        L_f=(L_f,), L_g=(4.0,), c_f=(2.0,), L_theta=L_f + 4.0, source="user"
    )
    return problem, estimates
