"""Distributed inner solvers: price coordination and slack allocation.

Both schemes exploit the block-separability of the majorizer m(x) =
sum_i m_i(x_i) and of the coupling h(x) = sum_i h_i(x_i), so each agent only
ever solves a small strongly convex problem over its private set.

* Dual decomposition: ascend the concave dual d(lam) = min_x sum_i [m_i + lam.h_i]
  by projected gradient on lam >= 0; the dual gradient is the coupling value
  at the agents' best responses, and its Lipschitz constant is
  L_h^2 sqrt(n_c) / c_tau.
* Primal decomposition: split the budget as h_i(x_i) <= t_i with
  sum_i t_i <= 0 and move the slacks by a projected subgradient step, the
  subgradient being the negative of the per-agent constraint multipliers.

Primal iterates of the slack scheme are feasible at every step; dual
iterates are only feasible in the limit.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .problem import DcProblem, coupling_lipschitz
from .surrogate import SurrogateModel
from .subproblem import fista

__all__ = [
    "Multipliers",
    "SlackAllocation",
    "InfeasibleSlackError",
    "best_response",
    "dual_gradient",
    "dual_value",
    "DualResult",
    "dual_solve",
    "dual_solve_bisection",
    "slater_probe",
    "primal_user_solve",
    "MasterResult",
    "master_solve",
]

Array = np.ndarray


@dataclass(frozen=True)
class Multipliers:
    """Nonnegative prices, one per coupling row."""

    values: Array

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if np.any(v < 0):
            raise ValueError("multipliers must be nonnegative")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class SlackAllocation:
    """Per-agent budget slices t_i; feasible when sum_i t_i <= 0 componentwise."""

    values: Array  # shape (I, n_c)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", v)

    @property
    def feasible(self) -> bool:
        return bool(np.all(self.values.sum(axis=0) <= 1e-12))


class InfeasibleSlackError(RuntimeError):
    """A per-agent slack problem has no feasible point (multipliers diverged).

    ``agent`` and ``floor`` (when available) identify the failing slice and an
    estimate of the componentwise minimum of h_i over X_i, so a master loop
    can repair the allocation instead of guessing.
    """

    def __init__(self, message: str, agent: int | None = None, floor: Array | None = None):
        super().__init__(message)
        self.agent = agent
        self.floor = floor


def _as_lambda(lam, n_c: int) -> Array:
    if lam is None:
        return np.zeros(n_c)
    if isinstance(lam, Multipliers):
        return np.array(lam.values, dtype=float)
    return np.asarray(lam, dtype=float).ravel()


def _strong_modulus(model: SurrogateModel, problem: DcProblem, i: int) -> float:
    mu = float(model.tau[i]) + float(problem.c_f_lower[i])
    if mu <= 0.0:
        raise ValueError(
            f"agent {i} majorizer is not strongly convex (tau_i + c_f_i = {mu}); "
            "increase tau_i so per-agent solutions are unique"
        )
    return mu


def best_response(
    i: int,
    lam,
    model: SurrogateModel,
    problem: DcProblem,
    tol: float = 1e-10,
    start: Array | None = None,
    max_iterations: int = 4000,
    extra_linear: Array | None = None,
) -> Array:
    """Agent i's priced solve: argmin over X_i of m_i(x_i) + lam . h_i(x_i).

    ``extra_linear`` adds a constant linear term (used by the slack scheme,
    where the -lam . t_i offset does not move the argmin but callers may want
    a shifted objective).  Requires tau_i + c_{f_i} > 0 so the minimizer is
    unique; raises if the inner loop fails to certify ``tol``.
    """
    _strong_modulus(model, problem, i)
    layout = problem.layout
    sl = layout.sl(i)
    coup = problem.coupling
    lam_vec = _as_lambda(lam, coup.n_c if coup is not None else 0)
    if coup is None and lam_vec.size:
        raise ValueError("multipliers supplied for a problem without coupling")

    def value(xi: Array) -> float:
        v = model.piece_value(problem, i, xi)
        if coup is not None and lam_vec.size:
            v += float(lam_vec @ coup.h[i](xi))
        if extra_linear is not None:
            v += float(extra_linear @ xi)
        return v

    def gradient(xi: Array) -> Array:
        grad = model.piece_gradient(problem, i, xi)
        if coup is not None and lam_vec.size:
            grad = grad + coup.jacobian[i](xi).T @ lam_vec
        if extra_linear is not None:
            grad = grad + extra_linear
        return grad

    x0 = model.anchor[sl] if start is None else np.asarray(start, dtype=float)
    out = fista(
        value=value,
        gradient=gradient,
        project=problem.local_projections[i],
        x0=x0,
        residual_target=tol,
        max_iterations=max_iterations,
        lipschitz0=1.0 + float(model.tau[i]),
        strong_mu=float(model.tau[i]) + float(problem.c_f_lower[i]),
    )
    if not out.converged:
        raise RuntimeError(
            f"agent {i} best response did not reach tol={tol} within {max_iterations} "
            f"iterations (residual {out.residual:.3e}); consider a larger tau_i"
        )
    return out.point


def _all_best_responses(
    lam: Array,
    model: SurrogateModel,
    problem: DcProblem,
    tol: float,
    starts: list[Array] | None,
    parallel: bool,
) -> list[Array]:
    I = problem.num_agents
    args = [
        (i, lam, model, problem, tol, None if starts is None else starts[i])
        for i in range(I)
    ]
    if parallel and I > 1:
        with ThreadPoolExecutor(max_workers=min(I, 8)) as pool:
            return list(pool.map(lambda a: best_response(*a), args))
    return [best_response(*a) for a in args]


def dual_gradient(
    lam,
    model: SurrogateModel,
    problem: DcProblem,
    tol: float = 1e-10,
    starts: list[Array] | None = None,
    parallel: bool = False,
) -> Array:
    """Gradient of the dual function: sum_i h_i of the best responses at lam."""
    if problem.coupling is None:
        raise ValueError("dual_gradient needs a coupling constraint")
    lam_vec = _as_lambda(lam, problem.coupling.n_c)
    xs = _all_best_responses(lam_vec, model, problem, tol, starts, parallel)
    out = np.zeros(problem.coupling.n_c)
    for i, xi in enumerate(xs):
        out += problem.coupling.h[i](xi)
    return out


def dual_value(lam, model: SurrogateModel, problem: DcProblem, tol: float = 1e-10) -> float:
    """d(lam) = min_x sum_i [m_i(x_i) + lam . h_i(x_i)] over the private sets."""
    lam_vec = _as_lambda(lam, problem.coupling.n_c)
    xs = _all_best_responses(lam_vec, model, problem, tol, None, False)
    total = 0.0
    for i, xi in enumerate(xs):
        total += model.piece_value(problem, i, xi) + float(lam_vec @ problem.coupling.h[i](xi))
    return total


def slater_probe(
    problem: DcProblem,
    start: Array,
    margin: float = 1e-6,
    max_iterations: int = 200,
) -> bool:
    """Search for a strictly feasible point of the coupling over the local sets.

    Minimizes max_k h_k by projected subgradient from ``start``; a point with
    max_k h_k <= -margin certifies a strict interior.  Failure only warns:
    the price iteration may still work, but multipliers can be unbounded.
    """
    coup = problem.coupling
    if coup is None:
        return True
    x = problem.project_local(np.array(start, dtype=float))
    layout = problem.layout
    best = float(np.max(coup.total(x, layout)))
    if best <= -margin:
        return True
    scale = max(1.0, float(np.linalg.norm(x)))
    for k in range(max_iterations):
        h = coup.total(x, layout)
        top = int(np.argmax(h))
        if h[top] <= -margin:
            return True
        sub = np.zeros_like(x)
        for i in range(problem.num_agents):
            sl = layout.sl(i)
            sub[sl] = coup.jacobian[i](x[sl])[top]
        nrm = float(np.linalg.norm(sub))
        if nrm == 0.0:
            break
        x = problem.project_local(x - (0.5 * scale / ((k + 1) ** 0.5 * nrm)) * sub)
        best = min(best, float(np.max(coup.total(x, layout))))
    if best > -margin:
        warnings.warn(
            f"no strictly interior point found for the coupling (best max_k h_k = {best:.3e}); "
            "price multipliers may be unbounded",
            RuntimeWarning,
            stacklevel=2,
        )
        return False
    return True


def _default_price_step(model: SurrogateModel, problem: DcProblem) -> float:
    """1 / L_grad_d with L_grad_d = L_h^2 sqrt(n_c) / c_tau (safe half of 2/L)."""
    c_tau = float(np.min(model.tau + np.asarray(problem.c_f_lower)))
    L_h = coupling_lipschitz(problem)
    n_c = problem.coupling.n_c
    L_grad = (L_h**2) * math.sqrt(n_c) / c_tau
    if L_grad <= 0.0:
        return 1.0
    return 1.0 / L_grad


@dataclass
class DualResult:
    point: Array
    multipliers: Array
    iterations: int
    converged: bool
    records: list[tuple] = field(default_factory=list)  # (t, ||lam||, step, violation)


def dual_solve(
    model: SurrogateModel,
    problem: DcProblem,
    lambda0=None,
    step_size: float | None = None,
    step_kind: str = "constant",
    lambda_tol: float = 1e-8,
    max_iterations: int = 500,
    inner_tol: float | None = None,
    parallel: bool = False,
    check_slater: bool = True,
    collect: bool = False,
) -> DualResult:
    """Projected gradient ascent on the dual of the inner subproblem.

    lam_{t+1} = [lam_t + alpha_t * sum_i h_i(xhat_i(lam_t))]_+ until the
    price change drops below ``lambda_tol``.  The default constant step is
    half the 2/L bound; ``step_kind="diminishing"`` uses alpha_t = alpha_0/(t+1).
    Per-agent solves are warm-started and, unless ``inner_tol`` pins it, get
    the tightening tolerance max(1e-10, 0.1/t^2).
    """
    if problem.coupling is None:
        raise ValueError("dual_solve needs a coupling constraint")
    if step_kind not in ("constant", "diminishing"):
        raise ValueError(f"step_kind must be 'constant' or 'diminishing', got {step_kind!r}")
    n_c = problem.coupling.n_c
    lam = np.maximum(_as_lambda(lambda0, n_c), 0.0)
    if lam.size != n_c:
        raise ValueError(f"lambda0 has size {lam.size}, expected {n_c}")
    if check_slater:
        slater_probe(problem, model.anchor)
    alpha0 = _default_price_step(model, problem) if step_size is None else float(step_size)
    if alpha0 <= 0:
        raise ValueError("price step must be positive")

    starts: list[Array] | None = None
    records: list[tuple] = []
    xs = None
    for t in range(max_iterations):
        tol_t = inner_tol if inner_tol is not None else max(1e-10, 0.1 / (t + 1) ** 2)
        xs = _all_best_responses(lam, model, problem, tol_t, starts, parallel)
        starts = xs
        grad = np.zeros(n_c)
        for i, xi in enumerate(xs):
            grad += problem.coupling.h[i](xi)
        alpha = alpha0 if step_kind == "constant" else alpha0 / (t + 1.0)
        lam_next = np.maximum(lam + alpha * grad, 0.0)
        change = float(np.linalg.norm(lam_next - lam))
        if collect:
            records.append((t, float(np.linalg.norm(lam)), alpha, float(np.max(grad, initial=0.0))))
        if change <= lambda_tol:
            point = np.concatenate(xs)
            return DualResult(point=point, multipliers=lam_next, iterations=t + 1,
                              converged=True, records=records)
        lam = lam_next
    point = np.concatenate(xs)
    return DualResult(point=point, multipliers=lam, iterations=max_iterations,
                      converged=False, records=records)


def dual_solve_bisection(
    model: SurrogateModel,
    problem: DcProblem,
    tol: float = 1e-10,
    inner_tol: float = 1e-10,
    max_doublings: int = 60,
) -> DualResult:
    """Scalar-price alternative for a single coupling row.

    The dual derivative d'(lam) = h(xhat(lam)) is nonincreasing, so the
    optimal price is either 0 (already feasible) or the root of d', found by
    bracketing and bisection.
    """
    coup = problem.coupling
    if coup is None or coup.n_c != 1:
        raise ValueError("the bisection variant handles exactly one coupling row")

    evals = 0

    def h_at(lam: float):
        nonlocal evals
        xs = _all_best_responses(np.array([lam]), model, problem, inner_tol, None, False)
        evals += 1
        return float(sum(coup.h[i](xi)[0] for i, xi in enumerate(xs))), xs

    h0, xs = h_at(0.0)
    if h0 <= 0.0:
        return DualResult(point=np.concatenate(xs), multipliers=np.zeros(1),
                          iterations=evals, converged=True)
    lo, hi = 0.0, 1.0
    h_hi, xs = h_at(hi)
    d = 0
    while h_hi > 0.0 and d < max_doublings:
        lo, hi = hi, 2.0 * hi
        h_hi, xs = h_at(hi)
        d += 1
    if h_hi > 0.0:
        raise RuntimeError("could not bracket the optimal price; the coupling may be infeasible")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        h_mid, xs_mid = h_at(mid)
        if h_mid > 0.0:
            lo = mid
        else:
            hi, xs = mid, xs_mid
    return DualResult(point=np.concatenate(xs), multipliers=np.array([hi]),
                      iterations=evals, converged=True)


def _face_curvature(model: SurrogateModel, problem: DcProblem, i: int,
                    x_hat: Array, mu_vec: Array) -> Array:
    """Price sensitivity G = -d viol / d mu of agent i at its response x_hat.

    Raising the price of coupling row r moves the response along the active
    face of X_i by -K^{-1} Pi a_r, so G = A K^{-1} (Pi A)^T with
    K = Pi H Pi + (I - Pi), H the curvature of m_i, and Pi the projector of
    the active face.  Both come from cheap oracle probes, not inner solves.
    The face is probed around the pre-projection point z = x - b*grad L,
    which sits strictly on the normal-cone side of the active face, so the
    probe reads off which side pins each direction (probing around x itself
    would call a lower-bound coordinate free).
    """
    coup = problem.coupling
    assert coup is not None
    jac_i = coup.jacobian[i]
    proj_i = problem.local_projections[i]
    n_i = x_hat.size
    A_here = np.atleast_2d(jac_i(x_hat))
    eps = 1e-5 * (1.0 + float(np.abs(x_hat).max(initial=0.0)))
    grad0 = model.piece_gradient(problem, i, x_hat)
    g_lag = grad0 + A_here.T @ mu_vec
    g_max = float(np.abs(g_lag).max(initial=0.0))
    z = x_hat - (50.0 * eps / g_max) * g_lag if g_max > 1e-12 else x_hat
    base_z = np.asarray(proj_i(z), dtype=float)
    face = np.empty((n_i, n_i))
    heps = 1e-6 * (1.0 + float(np.abs(x_hat).max(initial=0.0)))
    hess = np.empty((n_i, n_i))
    for j in range(n_i):
        probe = z.copy()
        probe[j] += eps
        face[:, j] = (np.asarray(proj_i(probe), dtype=float) - base_z) / eps
        probe = x_hat.copy()
        probe[j] += heps
        hess[:, j] = (model.piece_gradient(problem, i, probe) - grad0) / heps
    hess = 0.5 * (hess + hess.T)
    K = face @ hess @ face + (np.eye(n_i) - face)
    rhs = face @ A_here.T
    try:
        S = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        S = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return A_here @ S


def primal_user_solve(
    i: int,
    t_i: Array,
    model: SurrogateModel,
    problem: DcProblem,
    tol: float = 1e-8,
    mu0: Array | None = None,
    max_iterations: int = 2000,
    inner_tol: float = 1e-10,
    mu_cap: float = 1e8,
) -> tuple[Array, Array]:
    """Agent i's slack problem: min m_i(x_i) s.t. x_i in X_i, h_i(x_i) <= t_i.

    Solved through its own dual: projected Newton ascent of the concave dual
    d_i(mu) = min_{X_i} [m_i + mu.(h_i - t_i)] over mu >= 0.  Every step must
    pass an Armijo test on the exact dual value, so progress is monotone;
    the Newton model takes the curvature of m_i on the active face of X_i,
    which resolves the nearly flat price directions where a plain ascent
    crawls.  Returns the primal point and the constraint multipliers.
    Unattainable slices raise :class:`InfeasibleSlackError`, certified
    either by the multipliers diverging beyond ``mu_cap`` or, earlier, by a
    direct feasibility probe that also reports the attainable floor.
    """
    coup = problem.coupling
    if coup is None:
        raise ValueError("primal_user_solve needs a coupling constraint")
    t_i = np.asarray(t_i, dtype=float).ravel()
    n_c = coup.n_c
    if t_i.size != n_c:
        raise ValueError(f"t_i has size {t_i.size}, expected {n_c}")
    mu = np.maximum(_as_lambda(mu0, n_c), 0.0)
    sigma_i = _strong_modulus(model, problem, i)
    h_i = coup.h[i]
    jac_i = coup.jacobian[i]
    proj_i = problem.local_projections[i]

    inner_eff = inner_tol

    def solve_at(mu_vec: Array, start=None) -> Array:
        return best_response(i, mu_vec, model, problem, tol=inner_eff, start=start)

    x = solve_at(mu)
    viol = h_i(x) - t_i
    n_i = x.size
    A_norm = float(np.linalg.norm(coup.matrices[i] if coup.is_linear else jac_i(x), 2))
    ascent_step = sigma_i / max(A_norm**2, 1e-12)  # 1/Lipschitz of the dual gradient
    # the response error is about residual/sigma, so the constraint values
    # wobble by ||A||/sigma times the inner residual; keep that noise floor
    # safely below the KKT tolerance or the certificate can never fire
    inner_eff = min(inner_tol, 0.05 * tol * sigma_i / max(A_norm, 1.0))
    if inner_eff < inner_tol:
        x = solve_at(mu, start=x)
        viol = h_i(x) - t_i

    def kkt_ok(mu_vec: Array, v: Array) -> bool:
        return (
            float(np.max(v, initial=0.0)) <= tol
            and abs(float(mu_vec @ v)) <= tol * (1.0 + float(np.linalg.norm(mu_vec)))
        )

    def dual_at(mu_vec: Array, x_hat: Array, v: Array) -> float:
        return model.piece_value(problem, i, x_hat) + float(mu_vec @ v)

    def kkt_res(mu_vec: Array, v: Array) -> float:
        return max(
            float(np.max(v, initial=0.0)),
            abs(float(mu_vec @ v)) / (1.0 + float(np.linalg.norm(mu_vec))),
        )

    if kkt_ok(mu, viol):
        return x, mu

    def newton_dir(x_hat: Array, mu_vec: Array, v: Array, free: Array) -> Array:
        # the free-block dual Hessian is -G[free, free]; its probed estimate
        # drives a Newton step on the prices of the non-binding rows
        G = _face_curvature(model, problem, i, x_hat, mu_vec)
        idx = np.flatnonzero(free)
        G = G[np.ix_(idx, idx)]
        m = idx.size
        reg = max(1e-12, 1e-9 * abs(float(np.trace(G))) / m)
        try:
            return np.linalg.solve(G + reg * np.eye(m), v[free])
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(G + reg * np.eye(m), v[free], rcond=None)[0]

    def attainable_floor(start: Array) -> Array:
        # phase-1 probe: the attainable coupling values nearest the slice
        def val(z: Array) -> float:
            return 0.5 * float(np.sum(np.maximum(h_i(z) - t_i, 0.0) ** 2))

        def grad(z: Array) -> Array:
            return np.atleast_2d(jac_i(z)).T @ np.maximum(h_i(z) - t_i, 0.0)

        probe = fista(val, grad, proj_i, start, residual_target=1e-3 * tol,
                      max_iterations=4000, lipschitz0=max(A_norm**2, 1e-6))
        return probe.point

    d_cur = dual_at(mu, x, viol)
    cap = 1.0 + float(np.linalg.norm(mu))
    boost = 1.0
    probe_at = 50.0 * (1.0 + float(np.linalg.norm(mu)))
    max_steps = min(150, max_iterations)
    for _ in range(max_steps):
        binding = (mu <= 1e-12 * (1.0 + float(np.linalg.norm(mu)))) & (viol < 0.0)
        free = ~binding
        accepted = False
        endgame = False
        full_step = False
        flat_step = False
        if bool(np.any(free)):
            p = np.zeros(n_c)
            p[free] = newton_dir(x, mu, viol, free)
            pred_gain = 0.5 * float(viol[free] @ p[free])
            value_noise = 1e-10 * (1.0 + abs(d_cur))
            if bool(np.all(np.isfinite(p))) and 0.0 <= pred_gain <= 10.0 * value_noise:
                # endgame: the whole remaining dual improvement is beneath
                # the precision of the dual value itself, so value-based
                # accept tests are coin flips that induce limit cycles, and
                # the probed curvature is untrustworthy near degenerate
                # faces.  Fixed-step projected ascent never expands the
                # distance to the maximizer, so it is immune to both; run
                # it as a dedicated polish loop, keeping the best residual.
                endgame = True
                best_e = (kkt_res(mu, viol), mu, x, viol)
                checkpoint = best_e[0]
                for it_e in range(20000):
                    mu_new = np.maximum(mu + ascent_step * viol, 0.0)
                    if not np.any(mu_new != mu):
                        break
                    mu = mu_new
                    x = solve_at(mu, start=x)
                    viol = h_i(x) - t_i
                    if kkt_ok(mu, viol):
                        return x, mu.copy()
                    r = kkt_res(mu, viol)
                    if r < best_e[0]:
                        best_e = (r, mu, x, viol)
                    if it_e % 500 == 499:
                        if best_e[0] > 0.9 * checkpoint:
                            break
                        checkpoint = best_e[0]
                _, mu, x, viol = best_e
                d_cur = dual_at(mu, x, viol)
        if not endgame and bool(np.any(free)):
            p *= boost
            pmax = float(np.max(np.abs(p), initial=0.0))
            if bool(np.all(np.isfinite(p))) and pmax > 1e-14 * (1.0 + float(np.linalg.norm(mu))):
                if pmax > cap:
                    p *= cap / pmax
                s = 1.0
                for _bt in range(8):
                    mu_try = np.maximum(mu + s * p, 0.0)
                    move = mu_try - mu
                    if not np.any(move):
                        break
                    x_try = solve_at(mu_try, start=x)
                    v_try = h_i(x_try) - t_i
                    d_try = dual_at(mu_try, x_try, v_try)
                    slack = 1e-10 * (1.0 + abs(d_cur))
                    if d_try >= d_cur + 1e-4 * float(viol @ move) - slack:
                        flat_step = float(np.max(np.abs(v_try - viol))) <= 1e-6 * (
                            1.0 + float(np.max(np.abs(viol)))
                        )
                        mu, x, viol, d_cur = mu_try, x_try, v_try, d_try
                        accepted = True
                        full_step = s == 1.0
                        break
                    s *= 0.5
        if endgame:
            pass
        elif accepted:
            # a full step against the cap earns a longer leash, and a full
            # step that left the violation unchanged sits on a linear stretch
            # of the dual, where doubling the length walks the stretch (or
            # certifies divergence) in logarithmic time
            cap = min(cap * 2.0, 1e12) if full_step else cap
            boost = min(boost * 2.0, 1e12) if full_step and flat_step else 1.0
        else:
            cap = max(cap * 0.25, 1e-3)
            boost = 1.0
            # guaranteed-ascent fallback: line-search the projected gradient
            # ray with doubling lengths, keeping the best dual value seen.
            # The safe step alone crawls on nearly flat ridges of the dual;
            # doubling covers those stretches in logarithmic time while the
            # monotone accept keeps every installed point an improvement.
            s = ascent_step
            best = None
            x_warm = x
            for _ in range(25):
                mu_try = np.maximum(mu + s * viol, 0.0)
                if not np.any(mu_try != mu):
                    break
                x_try = solve_at(mu_try, start=x_warm)
                x_warm = x_try
                v_try = h_i(x_try) - t_i
                d_try = dual_at(mu_try, x_try, v_try)
                improved = d_try > d_cur
                if best is None:
                    if not improved:
                        # base step overshot a stiff face: shrink instead
                        s *= 0.25
                        x_warm = x
                        if s < 1e-12 * ascent_step:
                            break
                        continue
                elif d_try <= best[3]:
                    break
                best = (mu_try, x_try, v_try, d_try)
                s *= 2.0
            if best is not None:
                mu, x, viol, d_cur = best
        if kkt_ok(mu, viol):
            return x, mu.copy()
        mu_norm = float(np.linalg.norm(mu))
        if mu_norm > mu_cap:
            raise InfeasibleSlackError(
                f"agent {i}: slack slice t_i={t_i} unattainable (multiplier norm above {mu_cap:.1e})",
                agent=i, floor=h_i(x),
            )
        if mu_norm > probe_at and float(np.max(viol, initial=0.0)) > tol:
            floor = h_i(attainable_floor(x))
            gap = float(np.max(floor - t_i, initial=0.0))
            if gap > 0.5 * tol:
                raise InfeasibleSlackError(
                    f"agent {i}: slack slice t_i={t_i} unattainable "
                    f"(attainable floor exceeds the slice by {gap:.3e})",
                    agent=i, floor=floor,
                )
            probe_at *= 10.0
    raise RuntimeError(f"agent {i} slack solve did not settle in {max_steps} price steps")


@dataclass
class MasterResult:
    point: Array
    slacks: "SlackAllocation"
    multipliers_per_agent: Array  # (I, n_c)
    objective: float
    iterations: int
    converged: bool
    records: list[tuple] = field(default_factory=list)  # (k, objective, ||t change||)


def _project_slacks(t: Array) -> Array:
    """Componentwise projection onto {t : sum_i t_i <= 0}."""
    excess = np.maximum(t.sum(axis=0), 0.0) / t.shape[0]
    return t - excess[None, :]


def master_solve(
    model: SurrogateModel,
    problem: DcProblem,
    t0: Array | None = None,
    step_size: float | None = None,
    max_iterations: int = 200,
    slack_tol: float = 1e-7,
    user_tol: float = 1e-8,
    parallel: bool = False,
    collect: bool = False,
) -> MasterResult:
    """Projected subgradient descent on the slack allocation.

    The master objective P(t) = sum_i min{m_i : h_i <= t_i, x_i in X_i} has
    -mu_i(t_i) as a subgradient block, so the slacks move along the agent
    multipliers and are re-projected onto sum_i t_i <= 0.  Every assembled
    iterate is feasible for the original coupling; the best objective seen
    is returned.

    The default allocation gives each agent the coupling value of its
    unpriced minimizer, less the excess needed for feasibility; if that free
    allocation is already feasible the prices are zero and the loop is
    skipped.  Allocations an agent certifies as unattainable are repaired
    first by lifting the offending slice to its certified attainable floor,
    then by halving toward a known-attainable allocation (the last workable
    iterate, or the anchor's own coupling split at the start); attainable
    allocations form a convex set, so the blend always lands.  The step is a
    Polyak step sized by a measured duality gap: evaluating the agents at
    their mean quoted price gives a weak-duality lower bound on the master
    optimum, the gap to it over the squared price norm sets the move, and
    feedback trims the relaxation factor -- a diminishing-step rule driven
    by the geometry instead of a schedule.  Convergence is certified by the
    same gap, or by the master's first-order condition (all agents quote one
    price and every strictly slack budget row is unpriced).
    """
    coup = problem.coupling
    if coup is None:
        raise ValueError("master_solve needs a coupling constraint")
    I, n_c = problem.num_agents, coup.n_c
    layout = problem.layout

    # the anchor's own coupling split is attainable by construction (the
    # anchor itself attains it), so it anchors every repair blend; its spare
    # budget is spread out so the repaired slices keep interior room
    anchor_t = np.stack([coup.h[i](model.anchor[layout.sl(i)]) for i in range(I)])
    anchor_sum = anchor_t.sum(axis=0)
    if np.any(anchor_sum > 1e-8):
        raise ValueError("the surrogate anchor violates the coupling budget")
    t_safe = anchor_t - 0.9 * np.minimum(anchor_sum, 0.0)[None, :] / I

    free_start = t0 is None
    if free_start:
        xs0 = [best_response(i, np.zeros(n_c), model, problem, tol=user_tol) for i in range(I)]
        free = np.stack([coup.h[i](xs0[i]) for i in range(I)])
        excess = np.maximum(free.sum(axis=0), 0.0)
        if not np.any(excess > 0.0):
            point = np.concatenate(xs0)
            return MasterResult(point=point, slacks=SlackAllocation(values=free),
                                multipliers_per_agent=np.zeros((I, n_c)), iterations=0,
                                objective=sum(model.piece_value(problem, i, xs0[i]) for i in range(I)),
                                converged=True)
        t = free - excess[None, :] / I
        scale = float(np.abs(excess).max()) / I
    else:
        t = np.atleast_2d(np.asarray(t0, dtype=float)).copy()
        if t.shape != (I, n_c):
            raise ValueError(f"t0 must have shape {(I, n_c)}, got {t.shape}")
        if np.any(t.sum(axis=0) > 1e-10):
            raise ValueError("t0 must satisfy sum_i t_i <= 0 componentwise")
        scale = max(0.1, float(np.abs(t).max()))

    def solve_all(t_mat: Array, mus: Array, tol: float) -> tuple[list[Array], Array, float]:
        xs: list[Array] = [None] * I  # type: ignore[list-item]
        mu_out = np.zeros((I, n_c))

        def one(i: int):
            return primal_user_solve(i, t_mat[i], model, problem, tol=tol,
                                     mu0=mus[i], inner_tol=tol * 1e-2)

        if parallel and I > 1:
            with ThreadPoolExecutor(max_workers=min(I, 8)) as pool:
                results = list(pool.map(one, range(I)))
        else:
            results = [one(i) for i in range(I)]
        obj = 0.0
        for i, (xi, mui) in enumerate(results):
            xs[i] = xi
            mu_out[i] = mui
            obj += model.piece_value(problem, i, xi)
        return xs, mu_out, obj

    def solve_repaired(t_mat: Array, mus: Array, tol: float, fallback: Array):
        t_try = t_mat
        for attempt in range(8):
            try:
                xs, mu_out, obj = solve_all(t_try, mus, tol)
                return t_try, xs, mu_out, obj, attempt
            except InfeasibleSlackError:
                t_try = _project_slacks(0.5 * (t_try + fallback))
        # the blend has all but reached the attainable allocation; use it
        # outright, and let a failure there surface as the genuine error
        xs, mu_out, obj = solve_all(fallback, mus, tol)
        return fallback, xs, mu_out, obj, 8

    # the loop runs a notch looser than the requested accuracy and only the
    # returned allocation is re-solved at full tolerance
    tol_iter = max(user_tol, 1e-7)
    mus = np.zeros((I, n_c))
    t, xs, mus, obj, _ = solve_repaired(t, mus, tol_iter, t_safe)
    best = (obj, xs, t.copy(), mus.copy())

    # lower bound on the master optimum from weak duality: at any common
    # price lam, sum_i min_x [m_i + lam.h_i] lies below every feasible
    # allocation's value.  The responses are unique (strongly convex
    # pieces), so the bound is differentiable in lam with gradient
    # sum_i h_i(y_i), and a cheap ascent on it tightens the certificate
    # even while the allocation loop zigzags
    q_starts: list[Array | None] = [None] * I
    resp_h = [np.zeros(n_c) for _ in range(I)]

    def dual_bound(lam: Array) -> float:
        q = 0.0
        for i in range(I):
            y = best_response(i, lam, model, problem, tol=tol_iter * 1e-2, start=q_starts[i])
            q_starts[i] = y
            resp_h[i] = np.asarray(coup.h[i](y), dtype=float)
            q += model.piece_value(problem, i, y) + float(lam @ resp_h[i])
        return q

    gap_tol = max(100.0 * slack_tol, 10.0 * tol_iter) * (1.0 + abs(obj))
    price_tol = max(100.0 * slack_tol, 1e-6)
    beta = 1.0
    q_best = -math.inf
    lam_hat: Array | None = None
    grad_hat: Array | None = None
    rows_hat: Array | None = None
    step_hat = 1.0
    recovered_at = -math.inf
    records: list[tuple] = []
    converged = False
    iters_done = 0
    for k in range(max_iterations):
        lam_bar = mus.mean(axis=0)
        q_bar = dual_bound(lam_bar)
        if q_bar > q_best:
            q_best = q_bar
            lam_hat = lam_bar.copy()
            rows_hat = np.array(resp_h)
            grad_hat = rows_hat.sum(axis=0)
        if lam_hat is not None and grad_hat is not None:
            lam_try = np.maximum(lam_hat + step_hat * grad_hat, 0.0)
            if float(np.abs(lam_try - lam_hat).max(initial=0.0)) > 0.0:
                q_try = dual_bound(lam_try)
                if q_try > q_best:
                    q_best = q_try
                    lam_hat = lam_try
                    rows_hat = np.array(resp_h)
                    grad_hat = rows_hat.sum(axis=0)
                    step_hat *= 1.5
                else:
                    step_hat *= 0.5
        # when the bound has moved meaningfully -- and periodically while
        # the certificate stays open -- the responses at the best price
        # recover a candidate allocation directly; it competes for the
        # returned best but never steers the allocation iterates
        if rows_hat is not None and (
            q_best > recovered_at + 0.05 * max(best[0] - q_best, 0.0)
            or (k % 8 == 7 and best[0] - q_best > gap_tol)
        ):
            recovered_at = q_best
            t_rec = rows_hat - np.maximum(rows_hat.sum(axis=0), 0.0)[None, :] / I
            try:
                t_rec, xs_r, mus_r, obj_r, _ = solve_repaired(t_rec, mus, tol_iter, t_safe)
            except InfeasibleSlackError:
                pass
            else:
                if obj_r < best[0]:
                    best = (obj_r, xs_r, t_rec.copy(), mus_r.copy())
        # both sides of the certificate are monotone: the best value found
        # against the best bound found, so a crossing is permanent
        gap_cert = best[0] - q_best
        # step sizing aims at the midpoint between the two bounds; with a
        # loose lower bound the raw gap oversizes the step badly, while the
        # midpoint keeps it inside the contraction range
        gap = max(obj - 0.5 * (best[0] + q_best), 0.0)
        t_scale = 1.0 + float(np.abs(t).max(initial=0.0))
        price_scale = 1.0 + float(np.abs(mus).max(initial=0.0))
        spread = float(np.max(mus.max(axis=0) - mus.min(axis=0), initial=0.0))
        sigma = t.sum(axis=0)
        comp = float(np.max(mus.mean(axis=0) * np.maximum(-sigma, 0.0), initial=0.0))
        # the projection strips the across-agent mean of the price update on
        # every tight budget coordinate (raising all slices of a tight row
        # equally is immediately subtracted back), so the path actually
        # taken moves along d, and the decrease rate of the master value is
        # slope_sq = sum_i mu_i . d_i, not the raw price norm
        d_dir = mus.copy()
        tight = (sigma >= -1e-12 * t_scale) & (mus.sum(axis=0) > 0.0)
        d_dir[:, tight] -= mus[:, tight].mean(axis=0, keepdims=True)
        slope_sq = float(np.sum(mus * d_dir))
        # stop on a certified gap, or on the master's first-order condition:
        # all agents quote one price on tight rows, slack rows are unpriced
        if gap_cert <= gap_tol or slope_sq <= (price_tol * price_scale) ** 2 or (
            spread <= price_tol * price_scale
            and comp <= price_tol * price_scale * t_scale
        ):
            converged = True
            break
        if not gap > 0.0:
            # the current iterate already sits at the level target; without
            # a sized step the loop cannot move, so fall back on the raw gap
            gap = max(obj - q_best, 0.0)
        alpha_gap = beta * gap / max(slope_sq, 1e-12)
        if step_size is not None:
            candidates = [float(step_size) / math.sqrt(k + 1.0)]
        else:
            # scalar step that minimizes the local quadratic model of the
            # master along the projected direction: the actively priced rows
            # of each agent contribute d^T G^{-1} d of curvature, the probed
            # G being the same sensitivity the per-agent Newton solver uses
            curv = 0.0
            for i in range(I):
                act = np.flatnonzero(mus[i] > 1e-10 * (1.0 + float(np.linalg.norm(mus[i]))))
                if act.size == 0:
                    continue
                G_i = _face_curvature(model, problem, i, xs[i], mus[i])
                G_act = (0.5 * (G_i + G_i.T))[np.ix_(act, act)]
                reg = max(1e-12, 1e-9 * abs(float(np.trace(G_act))) / act.size)
                try:
                    y = np.linalg.solve(G_act + reg * np.eye(act.size), d_dir[i][act])
                except np.linalg.LinAlgError:
                    y = np.linalg.lstsq(G_act + reg * np.eye(act.size), d_dir[i][act], rcond=None)[0]
                curv += float(d_dir[i][act] @ y)
            alpha_model = slope_sq / curv if curv > 1e-12 else alpha_gap
            candidates = None
        noise = 10.0 * tol_iter * (1.0 + abs(obj) + price_scale)
        chosen = None
        if candidates is not None:
            for alpha in candidates:
                if not alpha > 0.0:
                    continue
                t_prop = _project_slacks(t + alpha * mus)
                try:
                    chosen = solve_repaired(t_prop, mus, tol_iter, t)
                except InfeasibleSlackError:
                    continue
                break
        else:
            # fast path: a short backtracking ladder from the model step,
            # with sufficient decrease measured against the honest slope of
            # the projected path; where the model holds, the first or second
            # probe passes.  A model step smaller than the gap step signals a
            # needle-thin kink the value search would crawl across, so the
            # fast path only runs when it can out-stride the gap step
            alpha = alpha_model
            if alpha >= alpha_gap:
                for _bt in range(4):
                    t_prop = _project_slacks(t + alpha * mus)
                    try:
                        outcome = solve_repaired(t_prop, mus, tol_iter, t)
                    except InfeasibleSlackError:
                        outcome = None
                    if (
                        outcome is not None
                        and outcome[4] == 0
                        and outcome[3] <= obj - 0.1 * alpha * slope_sq + noise
                    ):
                        chosen = outcome
                        break
                    alpha *= 0.5
                    if alpha < alpha_gap:
                        break
            if chosen is None:
                # kinked valley: no scalar step along the current prices
                # decreases the value, so take the gap-sized step outright --
                # it contracts the distance to the optimal allocation even
                # when the value transiently rises, and the best iterate is
                # kept separately
                try:
                    chosen = solve_repaired(
                        _project_slacks(t + alpha_gap * mus), mus, tol_iter, t
                    )
                except InfeasibleSlackError:
                    chosen = None
        if chosen is None:
            break
        t_next, xs_n, mus_n, obj_n, repairs = chosen
        iters_done = k + 1
        if collect:
            records.append((k, obj_n, float(np.linalg.norm(t_next - t))))
        # the measured gap over-sizes the escape step when the common price
        # is far from optimal, so feedback trims its relaxation factor
        worse = obj_n > obj + noise
        beta = max(0.5 * beta, 0.1) if (worse or repairs) else min(1.2 * beta, 1.0)
        t, xs, mus, obj = t_next, xs_n, mus_n, obj_n
        if obj < best[0]:
            best = (obj, xs, t.copy(), mus.copy())
    obj, xs, t, mus = best
    if user_tol < tol_iter:
        try:
            xs, mus, obj = solve_all(t, mus, user_tol)
        except (InfeasibleSlackError, RuntimeError):
            warnings.warn(
                "returned slack allocation could not be re-solved at the final "
                "tolerance; keeping the loose-loop solution",
                stacklevel=2,
            )
    return MasterResult(
        point=np.concatenate(xs),
        slacks=SlackAllocation(values=t),
        multipliers_per_agent=mus,
        objective=obj,
        iterations=iters_done,
        converged=converged,
        records=records,
    )
