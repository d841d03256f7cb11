"""Relaxation step-size schedules for the outer majorization loop.

Three rules are supported, all emitting gamma in (0, 1]:

* ``constant``: gamma_nu = gamma for all nu.
* ``rule1``:    gamma_nu = gamma_{nu-1} * (1 - eps * gamma_{nu-1}),  eps in (0,1).
* ``rule2``:    gamma_nu = (gamma_{nu-1} + beta1) / (1 + beta2 * nu),
                0 < beta1 <= beta2 < 1.

The diminishing rules start from gamma_0 = 1 and are nonincreasing after the
first step; both are summable-square but not summable, which is what the
convergence theory for diminishing relaxation requires.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["StepSchedule", "next_step"]


@dataclass
class StepSchedule:
    """Stateful step-size sequence.

    ``gamma`` holds the current value gamma_nu and ``iteration`` the index nu.
    Use the classmethod constructors; they validate the parameter ranges.
    """

    kind: str
    gamma: float = 1.0
    iteration: int = 0
    epsilon: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    _gamma0: float = field(default=1.0, repr=False)

    @classmethod
    def constant(cls, gamma: float) -> "StepSchedule":
        if not 0.0 < gamma <= 1.0:
            raise ValueError(f"constant step needs gamma in (0, 1], got {gamma}")
        return cls(kind="constant", gamma=gamma, _gamma0=gamma)

    @classmethod
    def rule1(cls, epsilon: float) -> "StepSchedule":
        if not 0.0 < epsilon < 1.0:
            raise ValueError(f"rule1 needs epsilon in (0, 1), got {epsilon}")
        return cls(kind="rule1", epsilon=epsilon)

    @classmethod
    def rule2(cls, beta1: float, beta2: float) -> "StepSchedule":
        if not (0.0 < beta1 < 1.0 and 0.0 < beta2 < 1.0):
            raise ValueError(f"rule2 needs beta1, beta2 in (0, 1), got {beta1}, {beta2}")
        if beta1 > beta2:
            raise ValueError(f"rule2 needs beta1 <= beta2, got {beta1} > {beta2}")
        return cls(kind="rule2", beta1=beta1, beta2=beta2)

    def advance(self) -> float:
        """Advance nu by one and return the new gamma_nu."""
        nu = self.iteration + 1
        if self.kind == "constant":
            pass
        elif self.kind == "rule1":
            self.gamma = self.gamma * (1.0 - self.epsilon * self.gamma)
        elif self.kind == "rule2":
            self.gamma = (self.gamma + self.beta1) / (1.0 + self.beta2 * nu)
        else:  # pragma: no cover - constructors forbid this
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        self.iteration = nu
        self.gamma = min(self.gamma, 1.0)
        return self.gamma

    def reset(self) -> "StepSchedule":
        self.gamma = self._gamma0
        self.iteration = 0
        return self

    def copy(self) -> "StepSchedule":
        return StepSchedule(
            kind=self.kind,
            gamma=self.gamma,
            iteration=self.iteration,
            epsilon=self.epsilon,
            beta1=self.beta1,
            beta2=self.beta2,
            _gamma0=self._gamma0,
        )


def next_step(schedule: StepSchedule) -> float:
    """Advance ``schedule`` and return the freshly emitted gamma_nu."""
    return schedule.advance()
