"""Phase drift of the fiber analyzers under an alternating measure/lock schedule.

Between locks the analyzer phase error performs a Wiener random walk that
starts from a Gaussian lock residual.  The pump interferometer is locked
continuously and is not modelled here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq


@dataclass(frozen=True)
class DriftModel:
    diffusion: float = 0.0  # rad^2 / s
    lock_residual_sigma: float = 0.0  # rad

    def __post_init__(self):
        if not self.diffusion >= 0 or not self.lock_residual_sigma >= 0:
            raise ValueError("diffusion and lock_residual_sigma must be >= 0")


@dataclass(frozen=True)
class Schedule:
    measure_s: float = 100.0
    lock_s: float = 5.0

    def __post_init__(self):
        if not self.measure_s > 0 or not self.lock_s > 0:
            raise ValueError("measure_s and lock_s must be > 0")

    @property
    def period_s(self) -> float:
        return self.measure_s + self.lock_s

    @property
    def duty_cycle(self) -> float:
        return self.measure_s / self.period_s


def window_time(schedule: Schedule, t):
    """Time since the start of the current measurement window, and the cycle index.

    During a lock period the window time is reported as 0 (phase held at the
    lock point).
    """
    t = np.asarray(t, dtype=float)
    cycle = np.floor(t / schedule.period_s)
    tau = t - cycle * schedule.period_s
    tau = np.where(tau < schedule.measure_s, tau, 0.0)
    return tau, cycle.astype(np.int64)


def evolve_phase(model: DriftModel, schedule: Schedule, t, rng: np.random.Generator):
    """Sample the analyzer phase error at time(s) ``t``.

    A scalar ``t`` gives one draw from the marginal law
    ``N(0, lock_residual_sigma**2 + diffusion*tau)``.  An array of times is
    treated as one trajectory: increments inside a window are correlated
    like a random walk, and every new window (or lock period) restarts from
    a fresh lock residual.
    """
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be >= 0")
    if np.ndim(t) == 0:
        tau, _ = window_time(schedule, t)
        return float(rng.normal(0.0, math.sqrt(model.lock_residual_sigma**2 + model.diffusion * float(tau))))

    times = np.asarray(t, dtype=float)
    order = np.argsort(times, kind="stable")
    tau, cycle = window_time(schedule, times[order])
    out = np.empty_like(tau)
    start = np.ones(tau.shape, dtype=bool)
    start[1:] = (cycle[1:] != cycle[:-1]) | (tau[1:] == 0.0)
    residual = rng.normal(0.0, model.lock_residual_sigma, size=tau.shape)
    steps = rng.standard_normal(tau.shape)
    current = 0.0
    for k in range(tau.size):
        if start[k]:
            current = residual[k] + math.sqrt(model.diffusion * tau[k]) * steps[k]
        else:
            current += math.sqrt(model.diffusion * (tau[k] - tau[k - 1])) * steps[k]
        out[k] = current
    result = np.empty_like(out)
    result[order] = out
    return result


def residual_visibility_factor(model: DriftModel, schedule: Schedule) -> float:
    """Window-averaged ``E[cos(error)]``, the factor applied to alignment visibility.

    >>> residual_visibility_factor(DriftModel(), Schedule())
    1.0
    """
    x = model.diffusion * schedule.measure_s / 2.0
    # mean of exp(-D*tau/2) over the window, written to stay accurate as x -> 0
    window_mean = 1.0 if x == 0 else -math.expm1(-x) / x
    return math.exp(-model.lock_residual_sigma**2 / 2.0) * window_mean


def diffusion_for_factor(target: float, schedule: Schedule, lock_residual_sigma: float = 0.0) -> float:
    """Diffusion constant that gives ``residual_visibility_factor == target``."""
    ceiling = residual_visibility_factor(DriftModel(0.0, lock_residual_sigma), schedule)
    if not 0.0 < target <= ceiling:
        raise ValueError(f"target factor must lie in (0, {ceiling}], got {target!r}")
    if target == ceiling:
        return 0.0

    def gap(d):
        return residual_visibility_factor(DriftModel(d, lock_residual_sigma), schedule) - target

    hi = 1.0 / schedule.measure_s
    while gap(hi) > 0:
        hi *= 2.0
    return brentq(gap, 0.0, hi, xtol=1e-15, rtol=1e-13)
