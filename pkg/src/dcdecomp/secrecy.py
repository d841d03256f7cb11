"""Cooperative-jamming secrecy game instantiated on the DC solver core.

A set of Q source-destination pairs transmits in orthogonal slots while J
friendly jammers spend per-jammer power budgets across the slots to degrade
a common eavesdropper.  With the positivity margin (the linear expression
whose nonnegativity keeps each user's secrecy rate clamp inactive) enforced
inside every private strategy set, the social problem of maximizing the
system secrecy rate (SSR) becomes a block-separable DC program with one
linear coupling row per jammer budget, solved by the generic relaxed
majorize-and-decompose loop.  All rates use the natural logarithm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .problem import Coupling, DcProblem, Polyhedron, SmoothFunction
from .projections import dykstra, project_halfspace
from .sca import SolveTrace, StopRule, sca_run
from .schedules import StepSchedule
from .subproblem import SubproblemSolver, joint_projection

__all__ = [
    "SecrecyNetwork",
    "PowerProfile",
    "rate_legit",
    "rate_eve",
    "secrecy_rate",
    "smooth_secrecy_rate",
    "smooth_rate_gradient",
    "positivity_margin",
    "attainable_margin",
    "feasible_users",
    "system_secrecy_rate",
    "profile_to_vector",
    "vector_to_profile",
    "build_social_problem",
    "initial_profile",
    "algorithm4_run",
    "QgneReport",
    "qgne_check",
    "plus_directional_derivative",
    "baselines",
    "generate_network",
]

Array = np.ndarray


@dataclass(frozen=True)
class SecrecyNetwork:
    """Channel gains, noise power, and budgets of the jamming network.

    ``H_SD[q]``/``H_SE[q]`` are user q's gains to its destination and to the
    eavesdropper; ``H_JD[j][q]`` is jammer j's gain to user q's destination;
    ``H_JE[j]`` is jammer j's gain to the (single) eavesdropper, which does
    not depend on the slot.  All gains are linear power gains.
    """

    H_SD: Array
    H_SE: Array
    H_JD: Array
    H_JE: Array
    sigma2: float
    P_user: Array
    P_jam: Array

    def __post_init__(self):
        object.__setattr__(self, "H_SD", np.asarray(self.H_SD, dtype=float).ravel())
        object.__setattr__(self, "H_SE", np.asarray(self.H_SE, dtype=float).ravel())
        object.__setattr__(self, "H_JE", np.asarray(self.H_JE, dtype=float).ravel())
        object.__setattr__(self, "P_user", np.asarray(self.P_user, dtype=float).ravel())
        object.__setattr__(self, "P_jam", np.asarray(self.P_jam, dtype=float).ravel())
        jd = np.asarray(self.H_JD, dtype=float)
        if jd.size == 0:
            jd = jd.reshape(0, self.H_SD.size)
        object.__setattr__(self, "H_JD", np.atleast_2d(jd))
        Q, J = self.H_SD.size, self.H_JE.size
        if self.H_SE.size != Q or self.P_user.size != Q:
            raise ValueError("H_SE and P_user must have one entry per user")
        if self.H_JD.shape != (J, Q):
            raise ValueError(f"H_JD must have shape {(J, Q)}, got {self.H_JD.shape}")
        if self.P_jam.size != J:
            raise ValueError("P_jam must have one entry per jammer")
        if not self.sigma2 > 0:
            raise ValueError("noise power sigma2 must be positive")
        for name in ("H_SD", "H_SE", "H_JD", "H_JE"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} entries must be nonnegative")
        if np.any(self.P_user <= 0) or np.any(self.P_jam <= 0):
            raise ValueError("power budgets must be positive")

    @property
    def Q(self) -> int:
        return self.H_SD.size

    @property
    def J(self) -> int:
        return self.H_JE.size


@dataclass(frozen=True)
class PowerProfile:
    """Source powers ``p[q]`` and jammer allocations ``pJ[j][q]`` (slot q)."""

    p: Array
    pJ: Array

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).ravel())
        pj = np.asarray(self.pJ, dtype=float)
        if pj.size == 0:
            pj = pj.reshape(0, self.p.size)
        object.__setattr__(self, "pJ", np.atleast_2d(pj))
        if self.pJ.shape[1] != self.p.size:
            raise ValueError("pJ must have one column per user")

    def is_feasible(self, net: SecrecyNetwork, tol: float = 1e-6) -> bool:
        if np.any(self.p < -tol) or np.any(self.pJ < -tol):
            return False
        if np.any(self.p > net.P_user + tol):
            return False
        return bool(np.all(self.pJ.sum(axis=1) <= net.P_jam + tol))


def _jam_column(pJ_col, J: int) -> Array:
    col = np.asarray(pJ_col, dtype=float).ravel()
    if col.size != J:
        raise ValueError(f"expected a jammer column of length {J}, got {col.size}")
    return col


def rate_legit(net: SecrecyNetwork, q: int, p_q: float, pJ_col_q) -> float:
    """Slot-q rate to the legitimate destination (natural log)."""
    col = _jam_column(pJ_col_q, net.J)
    return math.log1p(net.H_SD[q] * p_q / (net.sigma2 + float(net.H_JD[:, q] @ col)))


def rate_eve(net: SecrecyNetwork, q: int, p_q: float, pJ_col_q) -> float:
    """Slot-q rate leaked to the eavesdropper (natural log)."""
    col = _jam_column(pJ_col_q, net.J)
    return math.log1p(net.H_SE[q] * p_q / (net.sigma2 + float(net.H_JE @ col)))


def smooth_secrecy_rate(net: SecrecyNetwork, q: int, p_q: float, pJ_col_q) -> float:
    """Unclamped rate difference r~_q = rate_legit - rate_eve."""
    return rate_legit(net, q, p_q, pJ_col_q) - rate_eve(net, q, p_q, pJ_col_q)


def secrecy_rate(net: SecrecyNetwork, q: int, p_q: float, pJ_col_q) -> float:
    """Clamped secrecy rate max(0, rate_legit - rate_eve)."""
    return max(0.0, smooth_secrecy_rate(net, q, p_q, pJ_col_q))


def smooth_rate_gradient(net: SecrecyNetwork, q: int, p_q: float, pJ_col_q) -> Array:
    """Gradient of r~_q with respect to the block (p_q, pJ[.][q])."""
    col = _jam_column(pJ_col_q, net.J)
    a, e = net.H_SD[q], net.H_SE[q]
    hjd, hje, s2 = net.H_JD[:, q], net.H_JE, net.sigma2
    D0 = s2 + float(hjd @ col)
    E0 = s2 + float(hje @ col)
    D1 = D0 + a * p_q
    E1 = E0 + e * p_q
    out = np.empty(1 + net.J)
    out[0] = a / D1 - e / E1
    out[1:] = hjd / D1 - hjd / D0 - hje / E1 + hje / E0
    return out


def _margin_terms(net: SecrecyNetwork, q: int) -> tuple[Array, float]:
    """Coefficients (c, offset) of margin_q(pJ_col) = c . pJ_col + offset."""
    c = net.H_SD[q] * net.H_JE - net.H_SE[q] * net.H_JD[:, q]
    return c, float((net.H_SD[q] - net.H_SE[q]) * net.sigma2)


def positivity_margin(net: SecrecyNetwork, q: int, pJ_col_q) -> float:
    """Linear margin whose nonnegativity makes r~_q >= 0 for every p_q >= 0."""
    col = _jam_column(pJ_col_q, net.J)
    c, off = _margin_terms(net, q)
    return float(c @ col) + off


def attainable_margin(net: SecrecyNetwork, q: int) -> float:
    """Largest margin_q over the per-jammer budget boxes (each jammer may
    dedicate its whole budget to slot q); the margin is linear, so the
    maximum puts full budget on every positive coefficient."""
    c, off = _margin_terms(net, q)
    return off + float(np.maximum(c, 0.0) @ net.P_jam)


def feasible_users(net: SecrecyNetwork) -> Array:
    """Mask of users whose margin constraint is attainable at all."""
    return np.array([attainable_margin(net, q) >= 0.0 for q in range(net.Q)])


def system_secrecy_rate(net: SecrecyNetwork, profile: PowerProfile) -> float:
    """SSR recomputed from scratch: sum of clamped per-user secrecy rates."""
    return float(
        sum(secrecy_rate(net, q, profile.p[q], profile.pJ[:, q]) for q in range(net.Q))
    )


def profile_to_vector(net: SecrecyNetwork, profile: PowerProfile) -> Array:
    """Stack per-user blocks (p_q, pJ[.][q]) into the solver layout."""
    blocks = [
        np.concatenate([[profile.p[q]], profile.pJ[:, q]]) for q in range(net.Q)
    ]
    return np.concatenate(blocks) if blocks else np.zeros(0)


def vector_to_profile(net: SecrecyNetwork, x) -> PowerProfile:
    """Inverse of :func:`profile_to_vector`; accepts stacked or block input."""
    vec = np.asarray(getattr(x, "stack", lambda: x)(), dtype=float).ravel()
    w = 1 + net.J
    if vec.size != net.Q * w:
        raise ValueError(f"expected a stacked vector of size {net.Q * w}, got {vec.size}")
    mat = vec.reshape(net.Q, w)
    return PowerProfile(p=mat[:, 0].copy(), pJ=mat[:, 1:].T.copy())


def _safe_neg_log(t: float, floor: float) -> float:
    """-log(t), continued below ``floor`` by its convex second-order Taylor
    model.  Inner-solver momentum steps can leave the nonnegative orthant,
    where the affine log arguments may cross zero; on the feasible set the
    arguments are at least sigma2 > floor, so values there are exact."""
    if t >= floor:
        return -math.log(t)
    d = t - floor
    return -math.log(floor) - d / floor + 0.5 * d * d / (floor * floor)


def _safe_neg_log_grad(t: float, floor: float) -> float:
    if t >= floor:
        return -1.0 / t
    return -1.0 / floor + (t - floor) / (floor * floor)


def _user_pieces(
    net: SecrecyNetwork, q: int, sl: slice
) -> tuple[SmoothFunction, SmoothFunction]:
    """Convex pair (f_q, g_q) with f_q - g_q = -r~_q on the user block."""
    a, e = float(net.H_SD[q]), float(net.H_SE[q])
    hjd = net.H_JD[:, q].copy()
    hje = net.H_JE.copy()
    s2 = float(net.sigma2)
    floor = 0.5 * s2

    def f_value(x: Array) -> float:
        xq = x[sl]
        p, pj = xq[0], xq[1:]
        return _safe_neg_log(s2 + a * p + float(hjd @ pj), floor) + _safe_neg_log(
            s2 + float(hje @ pj), floor
        )

    def f_gradient(x: Array) -> Array:
        xq = x[sl]
        p, pj = xq[0], xq[1:]
        gD1 = _safe_neg_log_grad(s2 + a * p + float(hjd @ pj), floor)
        gE0 = _safe_neg_log_grad(s2 + float(hje @ pj), floor)
        out = np.zeros_like(x)
        block = out[sl]
        block[0] = a * gD1
        block[1:] = hjd * gD1 + hje * gE0
        return out

    def g_value(x: Array) -> float:
        xq = x[sl]
        p, pj = xq[0], xq[1:]
        return _safe_neg_log(s2 + e * p + float(hje @ pj), floor) + _safe_neg_log(
            s2 + float(hjd @ pj), floor
        )

    def g_gradient(x: Array) -> Array:
        xq = x[sl]
        p, pj = xq[0], xq[1:]
        gE1 = _safe_neg_log_grad(s2 + e * p + float(hje @ pj), floor)
        gD0 = _safe_neg_log_grad(s2 + float(hjd @ pj), floor)
        out = np.zeros_like(x)
        block = out[sl]
        block[0] = e * gE1
        block[1:] = hje * gE1 + hjd * gD0
        return out

    return (
        SmoothFunction(value=f_value, gradient=f_gradient),
        SmoothFunction(value=g_value, gradient=g_gradient),
    )


def _user_projection(net: SecrecyNetwork, q: int, dykstra_tol: float = 1e-10):
    """Euclidean projection onto X_q = {x >= 0, p <= P_q, margin_q >= 0}."""
    c, off = _margin_terms(net, q)
    upper = np.full(1 + net.J, np.inf)
    upper[0] = float(net.P_user[q])

    def box(v: Array) -> Array:
        return np.clip(v, 0.0, upper)

    if off >= 0.0 and np.all(c >= 0.0):
        # the margin is nonnegative everywhere on the orthant
        return box

    normal = np.concatenate([[0.0], -c])

    def halfspace(v: Array) -> Array:
        return project_halfspace(v, normal, off)

    def project(v: Array) -> Array:
        return dykstra(v, [box, halfspace], tol=dykstra_tol)

    return project


def _zero_projection(v: Array) -> Array:
    return np.zeros_like(v)


def build_social_problem(net: SecrecyNetwork) -> DcProblem:
    """Social SSR-maximization problem in minimization form.

    Each user's block is x_q = (p_q, pJ[.][q]) of size 1+J with
    f_q - g_q = -r~_q, so the objective theta = -SSR on the feasible set
    (where all margins hold and the clamp is inactive).  Users whose margin
    is unattainable under the full jammer budgets are pinned to the zero
    block and contribute nothing; at least one user must remain.  One
    coupling row per jammer carries the shared budget.
    """
    Q, J = net.Q, net.J
    active = feasible_users(net)
    if not bool(active.any()):
        margins = ", ".join(
            f"user {q}: max margin {attainable_margin(net, q):.3e}" for q in range(Q)
        )
        raise ValueError(
            "the joint strategy set is empty: no user can attain a nonnegative "
            f"positivity margin under the jammer budgets ({margins})"
        )

    w = 1 + J
    dims = (w,) * Q
    f: list[SmoothFunction] = []
    g: list[SmoothFunction] = []
    projections = []
    for q in range(Q):
        if active[q]:
            fq, gq = _user_pieces(net, q, slice(q * w, (q + 1) * w))
            f.append(fq)
            g.append(gq)
            projections.append(_user_projection(net, q))
        else:
            f.append(SmoothFunction.zero())
            g.append(SmoothFunction.zero())
            projections.append(_zero_projection)

    coupling = None
    if J > 0:
        A_q = np.hstack([np.zeros((J, 1)), np.eye(J)])
        offsets = [-net.P_jam / Q] * Q
        coupling = Coupling.linear([A_q] * Q, offsets)

    rows, rhs = [], []
    n = Q * w
    for q in range(Q):
        base = q * w
        eye = np.zeros((w, n))
        eye[:, base : base + w] = np.eye(w)
        rows.append(-eye)
        rhs.extend([0.0] * w)
        if active[q]:
            rows.append(eye[:1])
            rhs.append(float(net.P_user[q]))
            c, off = _margin_terms(net, q)
            row = np.zeros((1, n))
            row[0, base + 1 : base + w] = -c
            rows.append(row)
            rhs.append(off)
        else:
            rows.append(eye)
            rhs.extend([0.0] * w)
    for j in range(J):
        row = np.zeros((1, n))
        for q in range(Q):
            row[0, q * w + 1 + j] = 1.0
        rows.append(row)
        rhs.append(float(net.P_jam[j]))

    return DcProblem(
        dims=dims,
        f=f,
        g=g,
        local_projections=projections,
        coupling=coupling,
        c_f_lower=(0.0,) * Q,
        polyhedron=Polyhedron(np.vstack(rows), np.array(rhs)),
    )


def initial_profile(
    net: SecrecyNetwork, problem: DcProblem | None = None, feas_tol: float = 1e-8
) -> PowerProfile:
    """Zero power profile, repaired into the joint set when necessary.

    Users whose margin is negative at zero jamming get the minimal-norm
    jammer column achieving margin = 0 (supported on the positive margin
    coefficients); if the combined repairs overrun a budget, the profile is
    projected back onto the joint set.
    """
    problem = build_social_problem(net) if problem is None else problem
    active = feasible_users(net)
    pJ = np.zeros((net.J, net.Q))
    for q in range(net.Q):
        if not active[q]:
            continue
        c, off = _margin_terms(net, q)
        if off >= 0.0:
            continue
        cpos = np.maximum(c, 0.0)
        nrm2 = float(cpos @ cpos)
        if nrm2 <= 0.0:  # attainability guarantees a positive coefficient
            raise ValueError(f"user {q} margin cannot be repaired (no positive coefficient)")
        pJ[:, q] = cpos * (-off) / nrm2
    profile = PowerProfile(p=np.zeros(net.Q), pJ=pJ)
    x = profile_to_vector(net, profile)
    if problem.feasibility_error(x) > feas_tol:
        x = joint_projection(problem, x)
        if problem.feasibility_error(x) > 1e-6:
            raise ValueError(
                "no feasible initial profile: simultaneous margin repairs exceed "
                "the jammer budgets and projection could not reconcile them"
            )
        profile = vector_to_profile(net, x)
    return profile


def algorithm4_run(
    net: SecrecyNetwork,
    tau=1.0,
    schedule: StepSchedule | None = None,
    dual_step: float | None = None,
    stop: StopRule | None = None,
    lambda_tol: float = 1e-2,
    max_inner_iterations: int = 300,
    parallel: bool = False,
) -> tuple[PowerProfile, SolveTrace]:
    """Distributed SSR maximization: relaxed outer loop, priced inner loop.

    Starts from the (repaired) zero profile; the inner subproblems decouple
    per user through one price per jammer budget, iterated until the price
    vector moves less than ``lambda_tol``; the outer loop stops once the SSR
    change drops below 1e-5 (theta = -SSR, so the trace's theta column is
    the negated SSR history).  Returns the final profile and the trace.
    """
    problem = build_social_problem(net)
    schedule = StepSchedule.rule1(1e-5) if schedule is None else schedule
    stop = StopRule(delta_objective=1e-5, max_iterations=500) if stop is None else stop
    if problem.coupling is not None:
        solver = SubproblemSolver(
            strategy="dual_decomposition",
            tolerance=math.inf,
            step_size=dual_step,
            lambda_tol=lambda_tol,
            max_inner_iterations=max_inner_iterations,
            parallel=parallel,
        )
    else:  # no jammers: the subproblem needs no prices
        solver = SubproblemSolver(strategy="direct_projected_gradient")
    x0 = profile_to_vector(net, initial_profile(net, problem))
    point, trace = sca_run(problem, x0, tau, schedule, solver=solver, stop=stop)
    x = point.stack()
    if problem.feasibility_error(x) > 1e-9:
        # the loose price stop can leave an O(lambda_tol) budget overrun;
        # restore exact feasibility without measurably moving the profile
        x = joint_projection(problem, x)
    return vector_to_profile(net, x), trace


def plus_directional_derivative(value: float, slope: float, zero_tol: float = 0.0) -> float:
    """Directional derivative of t -> max(0, t) composed with a smooth map.

    ``value`` is the smooth map's value and ``slope`` its directional
    derivative; the composite derivative is ``slope`` where the map is
    positive, 0 where negative, and max(0, slope) on the boundary.
    """
    if value > zero_tol:
        return slope
    if value < -zero_tol:
        return 0.0
    return max(0.0, slope)


@dataclass(frozen=True)
class QgneReport:
    """Per-player equilibrium certificate for a power profile.

    ``residuals[q]`` is the fixed-point gap of the projected best-ascent map
    on player q's feasible set given the others' allocations; ``cases[q]``
    classifies the smooth rate value (positive / boundary / excluded), and
    ``max_directional`` is the largest clamped-payoff directional derivative
    over sampled feasible directions (nonpositive up to tolerance at an
    equilibrium of the clamped game).
    """

    ok: bool
    residuals: Array
    rtilde: Array
    cases: tuple[str, ...]
    directional_ok: bool
    max_directional: float
    tol: float


def qgne_check(
    net: SecrecyNetwork,
    profile: PowerProfile,
    tol: float = 1e-3,
    samples: int = 20,
    seed: int = 0,
    feas_tol: float = 1e-6,
) -> QgneReport:
    """Verify the per-player minimum principle at ``profile``.

    For each participating user q the test projects one ascent step of the
    smooth rate r~_q onto P_q(pJ_others) = {x >= 0, p <= P_q, margin >= 0,
    pJ[j] <= remaining budget of jammer j} and measures the fixed-point gap.
    The clamped game is certified through the plus-function case split on
    sampled feasible directions.
    """
    problem = build_social_problem(net)
    x = profile_to_vector(net, profile)
    err = problem.feasibility_error(x)
    if err > feas_tol:
        raise ValueError(f"profile is infeasible (feasibility error {err:.3e})")

    rng = np.random.default_rng(seed)
    active = feasible_users(net)
    residuals = np.zeros(net.Q)
    rtilde = np.zeros(net.Q)
    cases = []
    max_directional = -math.inf
    remaining = net.P_jam - profile.pJ.sum(axis=1)
    for q in range(net.Q):
        if not active[q]:
            cases.append("excluded")
            continue
        xq = np.concatenate([[profile.p[q]], profile.pJ[:, q]])
        rt = smooth_secrecy_rate(net, q, xq[0], xq[1:])
        rtilde[q] = rt
        cases.append("positive" if rt > 1e-9 else "boundary")
        grad = smooth_rate_gradient(net, q, xq[0], xq[1:])

        upper = np.concatenate([[net.P_user[q]], np.maximum(used + profile.pJ[:, q], 0.0)])
        c, off = _margin_terms(net, q)
        normal = np.concatenate([[0.0], -c])

        def project(v: Array, upper=upper, normal=normal, off=off) -> Array:
            factors = [lambda u, hi=upper: np.clip(u, 0.0, hi)]
            if not (off >= 0.0 and np.all(normal <= 0.0)):
                factors.append(lambda u, a=normal, b=off: project_halfspace(u, a, b))
            return dykstra(v, factors, tol=1e-10)

        residuals[q] = float(np.linalg.norm(xq - project(xq + grad)))
        scale = max(1.0, float(np.max(upper[np.isfinite(upper)], initial=1.0)))
        for _ in range(samples):
            target = project(xq + scale * rng.standard_normal(xq.size))
            d = target - xq
            nrm = float(np.linalg.norm(d))
            if nrm < 1e-12:
                continue
            d /= nrm
            max_directional = max(
                max_directional, plus_directional_derivative(rt, float(grad @ d), zero_tol=1e-9)
            )

    if not math.isfinite(max_directional):
        max_directional = 0.0
    ok = bool(np.all(residuals <= tol))
    return QgneReport(
        ok=ok,
        residuals=residuals,
        rtilde=rtilde,
        cases=tuple(cases),
        directional_ok=bool(max_directional <= tol),
        max_directional=float(max_directional),
        tol=tol,
    )


def _fixed_jammer_problem(net: SecrecyNetwork, pJ: Array) -> tuple[DcProblem, Array]:
    """Reduced source-power problem with the jammer allocation frozen.

    Returns the problem over scalar blocks p_q plus the mask of users whose
    frozen margin is nonnegative; the rest transmit nothing.
    """
    active = np.array(
        [positivity_margin(net, q, pJ[:, q]) >= 0.0 for q in range(net.Q)]
    )
    f: list[SmoothFunction] = []
    g: list[SmoothFunction] = []
    projections = []
    s2 = float(net.sigma2)
    floor = 0.5 * s2
    for q in range(net.Q):
        if not active[q]:
            f.append(SmoothFunction.zero())
            g.append(SmoothFunction.zero())
            projections.append(_zero_projection)
            continue
        a, e = float(net.H_SD[q]), float(net.H_SE[q])
        ID = float(net.H_JD[:, q] @ pJ[:, q])
        IE = float(net.H_JE @ pJ[:, q])

        def f_value(x, q=q, a=a, ID=ID):
            return _safe_neg_log(s2 + ID + a * x[q], floor)

        def f_gradient(x, q=q, a=a, ID=ID):
            out = np.zeros_like(x)
            out[q] = a * _safe_neg_log_grad(s2 + ID + a * x[q], floor)
            return out

        def g_value(x, q=q, e=e, IE=IE):
            return _safe_neg_log(s2 + IE + e * x[q], floor)

        def g_gradient(x, q=q, e=e, IE=IE):
            out = np.zeros_like(x)
            out[q] = e * _safe_neg_log_grad(s2 + IE + e * x[q], floor)
            return out

        f.append(SmoothFunction(value=f_value, gradient=f_gradient))
        g.append(SmoothFunction(value=g_value, gradient=g_gradient))
        cap = float(net.P_user[q])
        projections.append(lambda v, cap=cap: np.clip(v, 0.0, cap))

    problem = DcProblem(
        dims=(1,) * net.Q,
        f=f,
        g=g,
        local_projections=projections,
        coupling=None,
    )
    return problem, active


def _optimize_source_powers(
    net: SecrecyNetwork,
    pJ: Array,
    tau,
    schedule: StepSchedule | None,
    stop: StopRule | None,
) -> PowerProfile:
    problem, _ = _fixed_jammer_problem(net, pJ)
    schedule = StepSchedule.rule1(1e-5) if schedule is None else schedule
    stop = StopRule(delta_objective=1e-5, max_iterations=500) if stop is None else stop
    point, _ = sca_run(problem, np.zeros(net.Q), tau, schedule, stop=stop)
    return PowerProfile(p=point.stack(), pJ=pJ)


def baselines(
    net: SecrecyNetwork,
    kind: str,
    tau=1.0,
    schedule: StepSchedule | None = None,
    stop: StopRule | None = None,
) -> tuple[PowerProfile, float]:
    """Reference schemes: frozen-jamming source optimization and joint SCA.

    ``uniform_jammer`` splits every jammer budget evenly across slots and
    optimizes source powers only; ``no_jammer`` switches the jammers off;
    ``centralized_sca`` solves the full social problem with the joint
    projected-gradient inner solver (no decomposition).  Returns the profile
    and its recomputed SSR.
    """
    if kind == "uniform_jammer":
        pJ = np.repeat(net.P_jam[:, None] / net.Q, net.Q, axis=1)
        profile = _optimize_source_powers(net, pJ, tau, schedule, stop)
    elif kind == "no_jammer":
        profile = _optimize_source_powers(net, np.zeros((net.J, net.Q)), tau, schedule, stop)
    elif kind == "centralized_sca":
        problem = build_social_problem(net)
        schedule = StepSchedule.rule1(1e-5) if schedule is None else schedule
        stop = StopRule(delta_objective=1e-5, max_iterations=500) if stop is None else stop
        x0 = profile_to_vector(net, initial_profile(net, problem))
        point, _ = sca_run(
            problem,
            x0,
            tau,
            schedule,
            solver=SubproblemSolver(strategy="direct_projected_gradient"),
            stop=stop,
        )
        profile = vector_to_profile(net, point)
    else:
        raise ValueError(
            "kind must be one of 'uniform_jammer', 'no_jammer', 'centralized_sca'; "
            f"got {kind!r}"
        )
    return profile, system_secrecy_rate(net, profile)


def generate_network(
    Q: int,
    J: int,
    seed: int,
    area_side: float = 1.0,
    snr_db: float = 10.0,
    max_attempts: int = 1000,
) -> SecrecyNetwork:
    """Random network on a square: Rayleigh fading over squared distance.

    Sources, destinations, jammers, and the eavesdropper are uniform on the
    square; each link gain is E^2/d^2 with E Rayleigh of mean 1.  Budgets
    follow the target SNR with sigma2 = 1.  Draws are rejected until every
    user's positivity margin is attainable under the jammer budgets, so the
    social problem never starts empty.
    """
    if Q < 1 or J < 0:
        raise ValueError("need Q >= 1 users and J >= 0 jammers")
    rng = np.random.default_rng(seed)
    scale = math.sqrt(2.0 / math.pi)  # Rayleigh scale giving mean 1
    sigma2 = 1.0
    power = sigma2 * 10.0 ** (snr_db / 10.0)

    def sq_dists(a: Array, b: Array) -> Array:
        return np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)

    for _ in range(max_attempts):
        src = rng.uniform(0.0, area_side, (Q, 2))
        dst = rng.uniform(0.0, area_side, (Q, 2))
        jam = rng.uniform(0.0, area_side, (J, 2))
        eve = rng.uniform(0.0, area_side, (1, 2))
        d2_sd = np.sum((src - dst) ** 2, axis=1)
        d2_se = sq_dists(src, eve)[:, 0]
        d2_jd = sq_dists(jam, dst)
        d2_je = sq_dists(jam, eve)[:, 0] if J else np.zeros(0)
        if (
            np.any(d2_sd < 1e-12)
            or np.any(d2_se < 1e-12)
            or (J and (np.any(d2_jd < 1e-12) or np.any(d2_je < 1e-12)))
        ):
            continue
        net = SecrecyNetwork(
            H_SD=rng.rayleigh(scale, Q) ** 2 / d2_sd,
            H_SE=rng.rayleigh(scale, Q) ** 2 / d2_se,
            H_JD=rng.rayleigh(scale, (J, Q)) ** 2 / d2_jd if J else np.zeros((0, Q)),
            H_JE=rng.rayleigh(scale, J) ** 2 / d2_je if J else np.zeros(0),
            sigma2=sigma2,
            P_user=np.full(Q, power),
            P_jam=np.full(max(J, 0), power),
        )
        if bool(feasible_users(net).all()):
            return net
    raise RuntimeError(
        f"no admissible network found in {max_attempts} draws "
        f"(Q={Q}, J={J}, snr={snr_db} dB)"
    )
