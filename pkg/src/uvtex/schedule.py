"""Forward-process noise schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta ramp with cumulative alpha-bar table; alpha_bar[0] = 1."""

    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    alpha_bar: np.ndarray = field(init=False, repr=False)
    betas: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.timesteps < 1:
            raise ScheduleError("timesteps must be >= 1")
        if not (0.0 < self.beta_start < self.beta_end < 1.0):
            raise ScheduleError("need 0 < beta_start < beta_end < 1")
        betas = np.linspace(self.beta_start, self.beta_end, self.timesteps, dtype=np.float64)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bar", alpha_bar)

    def check_t(self, t: int) -> int:
        t = int(t)
        if not 0 <= t <= self.timesteps:
            raise ScheduleError(f"t={t} outside [0, {self.timesteps}]")
        return t


def add_noise(x0, eps, t: int, schedule: NoiseSchedule):
    """x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.

    Works on numpy arrays and torch tensors alike; t = 0 returns x0
    exactly.
    """
    t = schedule.check_t(t)
    ab = float(schedule.alpha_bar[t])
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps
