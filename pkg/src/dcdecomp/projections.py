"""Euclidean projections onto the constraint sets used by the solvers.

Closed-form pieces (boxes, half-spaces, capped simplex, spectral sets) plus
Dykstra's alternating projections for intersections given through per-factor
projection oracles.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "project_box",
    "project_halfspace",
    "project_capped_simplex",
    "project_psd_trace",
    "dykstra",
    "DykstraError",
]


def project_box(v: np.ndarray, lower, upper) -> np.ndarray:
    """Project onto the box {lower <= x <= upper} (entries may be +-inf)."""
    return np.clip(v, lower, upper)


def project_halfspace(v: np.ndarray, a: np.ndarray, b: float) -> np.ndarray:
    """Project onto {x : a.x <= b}; ``a`` must be nonzero."""
    viol = float(a @ v) - b
    if viol <= 0.0:
        return np.array(v, dtype=float)
    return v - (viol / float(a @ a)) * a


def project_capped_simplex(v: np.ndarray, cap: float, tol: float = 1e-12) -> np.ndarray:
    """Project onto {x >= 0, sum(x) <= cap}.

    If clipping at zero already satisfies the budget the clip is the answer;
    otherwise the sum constraint is active and the shifted clip
    max(v - s, 0) is tuned by bisection on s until its sum equals ``cap``.
    """
    if cap < 0:
        raise ValueError(f"cap must be nonnegative, got {cap}")
    v = np.asarray(v, dtype=float)
    clipped = np.maximum(v, 0.0)
    if clipped.sum() <= cap:
        return clipped
    # sum(max(v-s, 0)) is continuous, nonincreasing in s; bracket the root.
    lo, hi = 0.0, float(v.max())
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if np.maximum(v - mid, 0.0).sum() > cap:
            lo = mid
        else:
            hi = mid
    s = 0.5 * (lo + hi)
    out = np.maximum(v - s, 0.0)
    total = out.sum()
    if total > 0:  # remove the residual bisection slack exactly
        out *= cap / total
    return out


def project_psd_trace(mat: np.ndarray, trace_cap: float) -> np.ndarray:
    """Project a Hermitian matrix onto {Q >= 0, tr Q <= trace_cap}.

    The set is spectral (unitarily invariant with a permutation-invariant
    convex eigenvalue set), so projecting the eigenvalues onto the capped
    simplex in the eigenbasis of the symmetrized input is exact.
    """
    sym = 0.5 * (mat + mat.conj().T)
    w, u = np.linalg.eigh(sym)
    w_proj = project_capped_simplex(w, trace_cap)
    return (u * w_proj) @ u.conj().T


class DykstraError(RuntimeError):
    """Alternating projections failed to settle within the sweep cap."""


def dykstra(
    x0: np.ndarray,
    projections: Sequence[Callable[[np.ndarray], np.ndarray]],
    tol: float = 1e-10,
    max_sweeps: int = 10_000,
) -> np.ndarray:
    """Project onto an intersection of convex sets by Dykstra's method.

    Parameters
    ----------
    x0 : ndarray
        Point to project.
    projections : sequence of callables
        Exact projection oracle for each factor set.  The intersection must
        be nonempty.
    tol : float
        Sweep-to-sweep change threshold on both the iterate and the
        correction increments.
    max_sweeps : int
        Hard cap; exceeded caps raise :class:`DykstraError`.
    """
    x = np.array(x0, dtype=float)
    if len(projections) == 0:
        return x
    if len(projections) == 1:
        return np.asarray(projections[0](x), dtype=float)
    incr = [np.zeros_like(x) for _ in projections]
    for _ in range(max_sweeps):
        x_prev = x.copy()
        max_incr_change = 0.0
        for m, proj in enumerate(projections):
            y = np.asarray(proj(x + incr[m]), dtype=float)
            new_incr = x + incr[m] - y
            max_incr_change = max(max_incr_change, float(np.linalg.norm(new_incr - incr[m], ord=np.inf)))
            incr[m] = new_incr
            x = y
        if max(float(np.linalg.norm(x - x_prev, ord=np.inf)), max_incr_change) <= tol:
            return x
    raise DykstraError(f"no convergence after {max_sweeps} sweeps (tol={tol})")
