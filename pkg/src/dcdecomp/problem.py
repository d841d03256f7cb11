"""Problem container for block-separable difference-of-convex programs.

The objective is theta(x) = sum_i [f_i(x) - g_i(x)] with every f_i, g_i
convex and continuously differentiable in the full profile x, each agent
constrained to a private closed convex set X_i (given through a projection
oracle), and an optional coupling constraint sum_i h_i(x_i) <= 0 shared by
all agents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .blocks import Layout

__all__ = [
    "SmoothFunction",
    "Coupling",
    "Polyhedron",
    "DcProblem",
    "LipschitzEstimates",
    "estimate_lipschitz",
    "coupling_lipschitz",
    "descent_constant",
    "check_constant_step",
]

Array = np.ndarray
Projection = Callable[[Array], Array]


@dataclass(frozen=True)
class SmoothFunction:
    """Differentiable scalar function of the stacked profile.

    ``value(x) -> float`` and ``gradient(x) -> ndarray(n)`` where n is the
    total stacked dimension.
    """

    value: Callable[[Array], float]
    gradient: Callable[[Array], Array]

    @classmethod
    def zero(cls) -> "SmoothFunction":
        return cls(value=lambda x: 0.0, gradient=lambda x: np.zeros_like(x))


@dataclass(frozen=True)
class Coupling:
    """Separable coupling constraint sum_i h_i(x_i) <= 0 in R^{n_c}.

    ``h[i]`` maps an agent block to R^{n_c} and ``jacobian[i]`` returns the
    (n_c, n_i) Jacobian.  When the constraint is affine, ``matrices`` and
    ``offsets`` hold h_i(x_i) = A_i x_i + b_i exactly; the solvers use them
    for closed-form half-space projections and exact Lipschitz constants.
    """

    n_c: int
    h: tuple[Callable[[Array], Array], ...]
    jacobian: tuple[Callable[[Array], Array], ...]
    matrices: tuple[Array, ...] | None = None
    offsets: tuple[Array, ...] | None = None

    @classmethod
    def linear(cls, matrices: Sequence[Array], offsets: Sequence[Array]) -> "Coupling":
        mats = tuple(np.atleast_2d(np.asarray(m, dtype=float)) for m in matrices)
        offs = tuple(np.asarray(b, dtype=float).ravel() for b in offsets)
        n_c = mats[0].shape[0]
        if any(m.shape[0] != n_c for m in mats) or any(b.size != n_c for b in offs):
            raise ValueError("all coupling blocks must share the same row count n_c")
        h = tuple((lambda xi, A=A, b=b: A @ xi + b) for A, b in zip(mats, offs))
        jac = tuple((lambda xi, A=A: A) for A in mats)
        return cls(n_c=n_c, h=h, jacobian=jac, matrices=mats, offsets=offs)

    @property
    def is_linear(self) -> bool:
        return self.matrices is not None

    def total(self, x: Array, layout: Layout) -> Array:
        """Evaluate sum_i h_i(x_i) on a stacked profile."""
        out = np.zeros(self.n_c)
        for i in range(layout.num_blocks):
            out += self.h[i](layout.block(x, i))
        return out

    def stacked_matrix(self) -> Array:
        if not self.is_linear:
            raise ValueError("coupling is not affine")
        return np.hstack(self.matrices)

    def total_offset(self) -> Array:
        if not self.is_linear:
            raise ValueError("coupling is not affine")
        return np.sum(self.offsets, axis=0)


@dataclass(frozen=True)
class Polyhedron:
    """Inequality description A x <= b of the joint feasible set.

    Only needed by operations that require an explicit normal-cone basis
    (the projection residual onto active constraint normals).
    """

    A: Array
    b: Array

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.size} entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    def active_rows(self, z: Array, tol: float = 1e-8) -> np.ndarray:
        """Indices of constraints active at ``z`` (slack below a scaled tol)."""
        slack = self.b - self.A @ z
        return np.flatnonzero(slack <= tol * (1.0 + np.abs(self.b)))


@dataclass(frozen=True)
class DcProblem:
    """Block-separable DC program over private sets with a shared coupling.

    Parameters
    ----------
    dims : tuple of int
        Block sizes (n_1, ..., n_I).
    f, g : sequences of SmoothFunction
        Convex components per agent; both take the stacked profile.
    local_projections : sequence of callables
        Exact Euclidean projection onto each X_i, acting on a block.
    coupling : Coupling, optional
        Shared constraint sum_i h_i(x_i) <= 0; None means only private sets.
    c_f_lower : tuple of float, optional
        Known lower bounds on the strong-monotonicity modulus of
        grad_{x_i} f_i(., x_{-i}); defaults to zeros when unknown.
    polyhedron : Polyhedron, optional
        Linear-inequality description of the joint set when available.
    """

    dims: tuple[int, ...]
    f: tuple[SmoothFunction, ...]
    g: tuple[SmoothFunction, ...]
    local_projections: tuple[Projection, ...]
    coupling: Coupling | None = None
    c_f_lower: tuple[float, ...] = ()
    polyhedron: Polyhedron | None = None
    layout: Layout = field(init=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "f", tuple(self.f))
        object.__setattr__(self, "g", tuple(self.g))
        object.__setattr__(self, "local_projections", tuple(self.local_projections))
        object.__setattr__(self, "layout", Layout(dims))
        I = len(dims)
        if not (len(self.f) == len(self.g) == len(self.local_projections) == I):
            raise ValueError("f, g, local_projections and dims must all have one entry per agent")
        if not self.c_f_lower:
            object.__setattr__(self, "c_f_lower", (0.0,) * I)
        elif len(self.c_f_lower) != I:
            raise ValueError("c_f_lower needs one entry per agent")

    @property
    def num_agents(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return self.layout.total_dim

    def theta(self, x: Array) -> float:
        return float(sum(fi.value(x) for fi in self.f) - sum(gi.value(x) for gi in self.g))

    def grad_theta(self, x: Array) -> Array:
        out = np.zeros_like(x)
        for fi in self.f:
            out += fi.gradient(x)
        for gi in self.g:
            out -= gi.gradient(x)
        return out

    def project_local(self, x: Array) -> Array:
        """Blockwise projection onto the Cartesian product of the X_i."""
        out = np.empty_like(x)
        for i in range(self.num_agents):
            sl = self.layout.sl(i)
            out[sl] = self.local_projections[i](x[sl])
        return out

    def coupling_values(self, x: Array) -> Array:
        if self.coupling is None:
            return np.zeros(0)
        return self.coupling.total(x, self.layout)

    def coupling_violation(self, x: Array) -> float:
        h = self.coupling_values(x)
        return float(np.max(h, initial=0.0))

    def feasibility_error(self, x: Array) -> float:
        """Max of local projection displacement and coupling violation."""
        local = float(np.linalg.norm(x - self.project_local(x), ord=np.inf))
        return max(local, self.coupling_violation(x))


@dataclass(frozen=True)
class LipschitzEstimates:
    """Gradient Lipschitz constants and convexity moduli for a problem.

    ``source`` records whether the numbers are exact ("user") or sampled;
    sampled values get a 1.5x safety factor inside step-size certification.
    """

    L_f: tuple[float, ...]
    L_g: tuple[float, ...]
    c_f: tuple[float, ...]
    L_theta: float
    source: str = "user"

    def __post_init__(self):
        if self.source not in ("user", "sampled"):
            raise ValueError(f"source must be 'user' or 'sampled', got {self.source!r}")


def estimate_lipschitz(
    problem: DcProblem,
    region: tuple[Array, Array],
    samples: int = 64,
    seed: int | None = 0,
) -> LipschitzEstimates:
    """Sample gradient difference quotients over a box region.

    Parameters
    ----------
    problem : DcProblem
    region : (lower, upper)
        Stacked bounds of the sampling box; must have positive volume.
    samples : int
        Number of sample points (>= 2).
    seed : int or None
        Seed for the sampling RNG.

    Returns
    -------
    LipschitzEstimates
        Per-agent max difference quotients for grad f_i and grad g_i, the
        min block-monotonicity quotient as the c_{f_i} estimate, and
        L_theta = sum_i (L_f_i + L_g_i).  All tagged ``source="sampled"``.
    """
    lower = np.asarray(region[0], dtype=float).ravel()
    upper = np.asarray(region[1], dtype=float).ravel()
    n = problem.total_dim
    if lower.size != n or upper.size != n:
        raise ValueError(f"region bounds must have the stacked dimension {n}")
    if np.any(upper <= lower):
        raise ValueError("sampling region has zero volume in at least one coordinate")
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    pts = lower + (upper - lower) * rng.random((samples, n))

    if samples <= 40:
        pairs = [(a, b) for a in range(samples) for b in range(a + 1, samples)]
    else:
        idx = rng.permutation(samples)
        pairs = list(zip(idx[:-1], idx[1:]))
        pairs += [(int(a), int(b)) for a, b in rng.integers(0, samples, size=(2 * samples, 2)) if a != b]

    I = problem.num_agents
    grads_f = [[problem.f[i].gradient(p) for i in range(I)] for p in pts]
    grads_g = [[problem.g[i].gradient(p) for i in range(I)] for p in pts]

    L_f, L_g = np.zeros(I), np.zeros(I)
    for a, b in pairs:
        gap = float(np.linalg.norm(pts[a] - pts[b]))
        if gap < 1e-12:
            continue
        for i in range(I):
            L_f[i] = max(L_f[i], float(np.linalg.norm(grads_f[a][i] - grads_f[b][i])) / gap)
            L_g[i] = max(L_g[i], float(np.linalg.norm(grads_g[a][i] - grads_g[b][i])) / gap)

    # c_{f_i}: monotonicity quotient of grad_{x_i} f_i(., x_{-i}) along pairs
    # that differ only in block i, minimized over samples.
    c_f = np.full(I, np.inf)
    layout = problem.layout
    for k in range(min(samples, 32)):
        base = pts[k]
        for i in range(I):
            sl = layout.sl(i)
            zi = lower[sl] + (upper[sl] - lower[sl]) * rng.random(layout.dims[i])
            other = layout.compose(base, i, zi)
            d = other[sl] - base[sl]
            gap2 = float(d @ d)
            if gap2 < 1e-16:
                continue
            diff = problem.f[i].gradient(other)[sl] - grads_f[k][i][sl]
            c_f[i] = min(c_f[i], float(d @ diff) / gap2)
    c_f = np.where(np.isfinite(c_f), np.maximum(c_f, 0.0), 0.0)

    return LipschitzEstimates(
        L_f=tuple(float(v) for v in L_f),
        L_g=tuple(float(v) for v in L_g),
        c_f=tuple(float(v) for v in c_f),
        L_theta=float(L_f.sum() + L_g.sum()),
        source="sampled",
    )


def coupling_lipschitz(
    problem: DcProblem,
    region: tuple[Array, Array] | None = None,
    samples: int = 64,
    seed: int | None = 0,
) -> float:
    """Lipschitz constant of the stacked coupling map h.

    Exact (largest singular value of the stacked Jacobian) for affine
    couplings, sampled difference quotients otherwise.
    """
    coup = problem.coupling
    if coup is None:
        return 0.0
    if coup.is_linear:
        return float(np.linalg.norm(coup.stacked_matrix(), 2))
    if region is None:
        raise ValueError("a sampling region is required for non-affine couplings")
    lower = np.asarray(region[0], dtype=float).ravel()
    upper = np.asarray(region[1], dtype=float).ravel()
    rng = np.random.default_rng(seed)
    pts = lower + (upper - lower) * rng.random((samples, problem.total_dim))
    vals = [coup.total(p, problem.layout) for p in pts]
    L = 0.0
    for a in range(samples - 1):
        gap = float(np.linalg.norm(pts[a] - pts[a + 1]))
        if gap < 1e-12:
            continue
        L = max(L, float(np.linalg.norm(vals[a] - vals[a + 1])) / gap)
    return L


def descent_constant(tau: Sequence[float], estimates: LipschitzEstimates) -> float:
    """c_tau = min_i (tau_i + c_{f_i}), the uniform strong-convexity modulus
    of the per-agent majorizers.  Positive c_tau is what makes every exact
    inner solution a descent direction for theta."""
    tau = np.asarray(tau, dtype=float)
    c_f = np.asarray(estimates.c_f, dtype=float)
    if tau.size != c_f.size:
        raise ValueError(f"tau has {tau.size} entries but estimates cover {c_f.size} agents")
    return float(np.min(tau + c_f))


def check_constant_step(
    gamma: float,
    tau: Sequence[float],
    estimates: LipschitzEstimates,
    variant: str = "with_memory",
) -> bool:
    """Certify a constant relaxation step against the convergence conditions.

    ``with_memory`` checks 2 c_tau > gamma * L_theta.  ``no_memory`` is the
    tau-only sufficient condition for full steps, min_i tau_i > 2 sum_i L_f_i,
    and requires gamma == 1.  Sampled estimates are inflated by 1.5x before
    the comparison, since sampling can only under-estimate a supremum.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    tau = np.asarray(tau, dtype=float)
    safety = 1.5 if estimates.source == "sampled" else 1.0
    if variant == "with_memory":
        c_tau = descent_constant(tau, estimates)
        return bool(2.0 * c_tau > gamma * safety * estimates.L_theta)
    if variant == "no_memory":
        if not math.isclose(gamma, 1.0):
            raise ValueError("the no_memory condition applies to full steps (gamma = 1) only")
        return bool(np.min(tau) > 2.0 * safety * float(np.sum(estimates.L_f)))
    raise ValueError(f"variant must be 'with_memory' or 'no_memory', got {variant!r}")
