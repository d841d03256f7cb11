"""Separable strongly convex majorizer built at an anchor profile.

For each agent the convex part keeps its own-block dependence exact while the
other agents' convex parts and the whole concave part are linearized at the
anchor, and a proximal term (tau_i / 2) ||x_i - anchor_i||^2 is added:

    m_i(x_i) = f_i(x_i, anchor_{-i})
               + [sum_{j != i} grad_i f_j(anchor)].(x_i - anchor_i)
               - g_i(anchor) - [sum_j grad_i g_j(anchor)].(x_i - anchor_i)
               + (tau_i / 2) ||x_i - anchor_i||^2

The sum m(x) = sum_i m_i(x_i) is block-separable, matches theta in value and
gradient at the anchor, and is strongly convex with modulus min_i(tau_i + c_{f_i}).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import DcProblem

__all__ = ["SurrogateModel", "build_surrogate", "surrogate_value", "surrogate_gradient"]

Array = np.ndarray


@dataclass(frozen=True)
class SurrogateModel:
    """Anchor-point cache for the separable majorizer.

    Immutable after construction; agents may evaluate their pieces
    concurrently.  ``linear_coeff`` stacks the per-agent vectors
    d_i = sum_{j != i} grad_i f_j(anchor) - sum_j grad_i g_j(anchor).
    """

    anchor: Array
    tau: Array
    f_values: Array        # (I,)   f_j(anchor)
    g_values: Array        # (I,)   g_j(anchor)
    f_gradients: Array     # (I, n) full gradients of the f_j at the anchor
    g_gradients: Array     # (I, n)
    linear_coeff: Array    # (n,)   d_i stacked by block
    theta_anchor: float

    def piece_value(self, problem: DcProblem, i: int, x_i: Array) -> float:
        """m_i(x_i), the agent-i majorizer piece."""
        layout = problem.layout
        sl = layout.sl(i)
        step = x_i - self.anchor[sl]
        mixed = layout.compose(self.anchor, i, x_i)
        return (
            float(problem.f[i].value(mixed))
            + float(self.linear_coeff[sl] @ step)
            - float(self.g_values[i])
            + 0.5 * float(self.tau[i]) * float(step @ step)
        )

    def piece_gradient(self, problem: DcProblem, i: int, x_i: Array) -> Array:
        """grad m_i(x_i) with respect to the agent block."""
        layout = problem.layout
        sl = layout.sl(i)
        mixed = layout.compose(self.anchor, i, x_i)
        own = problem.f[i].gradient(mixed)[sl]
        return own + self.linear_coeff[sl] + self.tau[i] * (x_i - self.anchor[sl])


def build_surrogate(problem: DcProblem, anchor: Array, tau) -> SurrogateModel:
    """Evaluate and cache everything the majorizer needs at ``anchor``.

    ``tau`` may be a scalar (shared by all agents) or one value per agent;
    all entries must be nonnegative.
    """
    anchor = np.array(np.asarray(anchor, dtype=float).ravel())
    n = problem.total_dim
    if anchor.size != n:
        raise ValueError(f"anchor has size {anchor.size}, expected {n}")
    I = problem.num_agents
    tau_arr = np.broadcast_to(np.asarray(tau, dtype=float).ravel(), (I,)).copy() \
        if np.ndim(tau) else np.full(I, float(tau))
    if np.any(tau_arr < 0):
        raise ValueError("tau entries must be nonnegative")

    f_vals = np.array([fi.value(anchor) for fi in problem.f])
    g_vals = np.array([gi.value(anchor) for gi in problem.g])
    f_grads = np.stack([fi.gradient(anchor) for fi in problem.f])
    g_grads = np.stack([gi.gradient(anchor) for gi in problem.g])
    if not (np.all(np.isfinite(f_vals)) and np.all(np.isfinite(g_vals))
            and np.all(np.isfinite(f_grads)) and np.all(np.isfinite(g_grads))):
        raise ValueError("non-finite objective data at the anchor")

    layout = problem.layout
    coeff = np.zeros(n)
    sum_f = f_grads.sum(axis=0)
    sum_g = g_grads.sum(axis=0)
    for i in range(I):
        sl = layout.sl(i)
        # own f_i stays nonlinear, so its anchor gradient is excluded here
        coeff[sl] = sum_f[sl] - f_grads[i, sl] - sum_g[sl]

    for arr in (anchor, tau_arr, f_vals, g_vals, f_grads, g_grads, coeff):
        arr.flags.writeable = False

    return SurrogateModel(
        anchor=anchor,
        tau=tau_arr,
        f_values=f_vals,
        g_values=g_vals,
        f_gradients=f_grads,
        g_gradients=g_grads,
        linear_coeff=coeff,
        theta_anchor=float(f_vals.sum() - g_vals.sum()),
    )


def surrogate_value(model: SurrogateModel, x: Array, problem: DcProblem) -> float:
    """m(x) = sum_i m_i(x_i) evaluated on a stacked profile."""
    layout = problem.layout
    return float(
        sum(model.piece_value(problem, i, layout.block(x, i)) for i in range(problem.num_agents))
    )


def surrogate_gradient(model: SurrogateModel, x: Array, problem: DcProblem) -> Array:
    """Stacked gradient of the majorizer; block i is grad m_i(x_i)."""
    layout = problem.layout
    out = np.empty_like(np.asarray(x, dtype=float))
    for i in range(problem.num_agents):
        sl = layout.sl(i)
        out[sl] = model.piece_gradient(problem, i, x[sl])
    return out
