from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StepSchedule:
    """Deterministic step sizes.

    ``constant``: alpha_t = alpha0.
    ``polynomial``: alpha_t = alpha0 * (t0 / (t0 + t)) ** power.
    """

    alpha0: float
    kind: str = "constant"
    t0: float = 1.0
    power: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "polynomial"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.alpha0 > 0:
            raise ValueError(f"alpha0 must be positive, got {self.alpha0}")
        if self.kind == "polynomial" and (self.t0 <= 0 or self.power < 0):
            raise ValueError("polynomial schedule needs t0 > 0 and power >= 0")

    @classmethod
    def constant(cls, alpha: float) -> "StepSchedule":
        return cls(float(alpha))

    @classmethod
    def polynomial(cls, alpha0: float, t0: float, power: float) -> "StepSchedule":
        return cls(float(alpha0), "polynomial", float(t0), float(power))

    def __call__(self, t: int) -> float:
        return float(self.values(1, start=t)[0])

    def values(self, n: int, start: int = 0) -> np.ndarray:
        """alpha_t for t = start, ..., start + n - 1."""
        if self.kind == "constant":
            return np.full(n, self.alpha0)
        t = np.arange(start, start + n, dtype=float)
        return self.alpha0 * (self.t0 / (self.t0 + t)) ** self.power

    @property
    def robbins_monro(self) -> bool:
        """Whether sum alpha_t diverges while sum alpha_t^2 converges."""
        return self.kind == "polynomial" and 0.5 < self.power <= 1.0


def as_schedule(value) -> StepSchedule:
    if isinstance(value, StepSchedule):
        return value
    return StepSchedule.constant(float(value))


def check_two_timescale(critic: StepSchedule, actor: StepSchedule) -> int:
    """Validate that the actor runs on the slower timescale.

    Returns the smallest integer d with sum (beta_t / alpha_t)^d < infinity,
    i.e. d * (p_actor - p_critic) > 1.
    """
    if not (critic.robbins_monro and actor.robbins_monro):
        raise ValueError("both critic and actor schedules must be Robbins-Monro polynomials")
    gap = actor.power - critic.power
    if gap <= 0:
        raise ValueError(
            f"actor power ({actor.power}) must exceed critic power ({critic.power})"
        )
    return int(np.floor(1.0 / gap)) + 1
