"""Stochastic gradient ASCENT steppers (Adam, RMSprop) and schedules.

All steppers move in the +gradient direction; the caller supplies the raw
(possibly weight-scaled) gradient estimate.  A step with a non-finite
gradient is rejected before any state is touched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NonFiniteGradientError(ValueError):
    pass


def _require_finite(g):
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        bad = np.flatnonzero(~np.isfinite(g))
        raise NonFiniteGradientError(f"non-finite gradient at coordinates {bad.tolist()}")
    return g


class Adam:
    """Bias-corrected adaptive ascent (constant step size)."""

    def __init__(self, step_size=0.05, beta1=0.9, beta2=0.999, eps=1e-8):
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, lam, g):
        g = _require_finite(g)
        lam = np.asarray(lam, dtype=float)
        if g.shape != lam.shape:
            raise ValueError("gradient and parameter shapes differ")
        if self.m is None:
            self.m = np.zeros_like(lam)
            self.v = np.zeros_like(lam)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * g**2
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return lam + self.step_size * m_hat / (np.sqrt(v_hat) + self.eps)


class RMSprop:
    """Mean-square-scaled ascent."""

    def __init__(self, step_size=0.01, decay=0.9, eps=1e-8):
        self.step_size = step_size
        self.decay = decay
        self.eps = eps
        self.sq = None
        self.t = 0

    def step(self, lam, g):
        g = _require_finite(g)
        lam = np.asarray(lam, dtype=float)
        if g.shape != lam.shape:
            raise ValueError("gradient and parameter shapes differ")
        if self.sq is None:
            self.sq = np.zeros_like(lam)
        self.t += 1
        self.sq = self.decay * self.sq + (1.0 - self.decay) * g**2
        return lam + self.step_size * g / (np.sqrt(self.sq) + self.eps)


def make_optimizer(name, step_size=None, **kw):
    name = name.lower()
    if name == "adam":
        return Adam(step_size=0.05 if step_size is None else step_size, **kw)
    if name == "rmsprop":
        return RMSprop(step_size=0.01 if step_size is None else step_size, **kw)
    raise ValueError(f"unknown optimizer '{name}'")


@dataclass(frozen=True)
class StepSchedule:
    """Either a constant rate or the power family a / (b + t)^kappa."""

    kind: str  # "constant" | "power"
    a: float = 1.0
    b: float = 0.0
    kappa: float = 1.0

    def rate(self, t):
        if self.kind == "constant":
            return self.a
        return self.a / (self.b + t) ** self.kappa


def robbins_monro_check(schedule: StepSchedule) -> bool:
    """True iff sum(rho_t) diverges while sum(rho_t^2) converges.

    For a/(b+t)^kappa this holds exactly when 1/2 < kappa <= 1; constant
    schedules fail the second condition (they remain usable in practice).
    """
    if schedule.kind == "constant":
        return False
    if schedule.kind == "power":
        return 0.5 < schedule.kappa <= 1.0
    raise ValueError(f"unknown schedule kind '{schedule.kind}'")
