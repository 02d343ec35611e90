"""Correlation estimates, fringe fits, CHSH combination and visibility budgets."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .records import TallyMatrix

SQRT2 = math.sqrt(2.0)

# Maximising CHSH settings for E = V*cos(alpha + beta).
CHSH_SETTINGS = {"alpha": 0.0, "alpha_prime": math.pi / 2, "beta": -math.pi / 4, "beta_prime": math.pi / 4}


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class CorrelationEstimate:
    e_value: float
    sigma: float
    total: int
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if abs(self.e_value) > 1.0 + 1e-12:
            raise ValueError(f"|E| must not exceed 1, got {self.e_value!r}")
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")


@dataclass(frozen=True)
class VisibilityFit:
    v: float
    v_sigma: float
    phase_offset: float
    mean_rate: float
    residual_chi2: float
    at_bound: bool = False
    dof: int = 0


@dataclass(frozen=True)
class ChshResult:
    estimates: tuple
    s_value: float
    s_sigma: float

    @property
    def n_sigma_violation(self) -> float:
        if self.s_sigma == 0:
            return math.copysign(math.inf, self.s_value - 2.0) if self.s_value != 2.0 else 0.0
        return (self.s_value - 2.0) / self.s_sigma


def estimate_E(tally: TallyMatrix) -> CorrelationEstimate:
    """Correlation coefficient of a tally with its binomial standard error.

    >>> estimate_E(TallyMatrix.from_counts(50, 50, 50, 50)).sigma  # doctest: +ELLIPSIS
    0.0707...
    """
    n = tally.total
    if n < 1:
        raise ValueError("cannot estimate E from an empty tally")
    same = tally.n(1, 1) + tally.n(-1, -1)
    p = same / n
    e = 2.0 * p - 1.0
    sigma = 2.0 * math.sqrt(p * (1.0 - p) / n)
    return CorrelationEstimate(e, sigma, n, tally.alpha, tally.beta)


def _circular_coverage(angles: np.ndarray) -> float:
    a = np.sort(np.unique(np.mod(angles, 2 * math.pi)))
    if a.size < 2:
        return 0.0
    gaps = np.diff(np.concatenate([a, [a[0] + 2 * math.pi]]))
    return 2 * math.pi - gaps.max()


def _check_scan(betas: np.ndarray) -> None:
    if np.unique(np.round(np.mod(betas, 2 * math.pi), 12)).size < 4:
        raise ValueError("a fringe fit needs at least 4 distinct phase settings")
    if _circular_coverage(betas) < math.pi - 1e-9:
        raise ValueError("phase settings must span at least half a fringe period")


def _first_harmonic(betas: np.ndarray, values: np.ndarray) -> tuple[float, float, float]:
    # least-squares projection onto {1, cos, sin}; equals the DFT bin on a uniform grid
    design = np.column_stack([np.ones_like(betas), np.cos(betas), np.sin(betas)])
    (c0, a, b), *_ = np.linalg.lstsq(design, values, rcond=None)
    return c0, math.hypot(a, b), math.atan2(-b, a)


def _finish(v, v_sigma, delta, mean_rate, chi2, dof) -> VisibilityFit:
    if v < 0:
        v, delta = -v, delta + math.pi
    at_bound = bool(v >= 1.0)
    v = min(v, 1.0)
    delta = (delta + math.pi) % (2 * math.pi) - math.pi
    return VisibilityFit(float(v), float(v_sigma), float(delta), float(mean_rate), float(chi2), at_bound, dof)


def fit_visibility(betas, e_values, sigma=None, max_iter: int = 200) -> VisibilityFit:
    """Fit ``E(beta) = V*cos(beta + delta)`` to correlation coefficients.

    ``sigma`` weights the points; without it the fit is unweighted and the
    reported ``v_sigma`` is scaled by the residual scatter.  ``mean_rate``
    is the fitted constant offset of E, which should be near zero.
    """
    betas = np.asarray(betas, dtype=float)
    e_values = np.asarray(e_values, dtype=float)
    _check_scan(betas)
    c0, v0, d0 = _first_harmonic(betas, e_values)

    def model(b, v, delta):
        return v * np.cos(b + delta)

    absolute = sigma is not None
    if absolute:
        sigma = np.asarray(sigma, dtype=float)
        if np.any(sigma <= 0):
            # perfect-correlation points have zero binomial error; floor them
            floor = np.min(sigma[sigma > 0]) if np.any(sigma > 0) else 1.0
            sigma = np.where(sigma > 0, sigma, floor)
    try:
        with warnings.catch_warnings():
            # exact data leaves no residual to scale the covariance; v_sigma is then 0
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, pcov = curve_fit(
                model, betas, e_values, p0=(v0, d0), sigma=sigma, absolute_sigma=absolute, maxfev=max_iter
            )
    except RuntimeError as exc:
        raise FitError(f"fringe fit did not converge: {exc}") from exc
    resid = e_values - model(betas, *popt)
    chi2 = float(np.sum((resid / sigma) ** 2)) if absolute else float(np.sum(resid**2))
    v_sigma = math.sqrt(pcov[0, 0]) if np.isfinite(pcov[0, 0]) else 0.0
    return _finish(popt[0], v_sigma, popt[1], c0, chi2, betas.size - 2)


def fit_visibility_tallies(tallies, betas=None, max_iter: int = 200) -> VisibilityFit:
    """Fringe fit on a scan of tallies, weighting each E by its binomial sigma."""
    tallies = list(tallies)
    betas = np.array([t.beta for t in tallies]) if betas is None else np.asarray(betas, dtype=float)
    estimates = [estimate_E(t) for t in tallies]
    return fit_visibility(betas, [e.e_value for e in estimates], [e.sigma for e in estimates], max_iter=max_iter)


def fit_fringe(betas, counts, max_iter: int = 200) -> VisibilityFit:
    """Fit a single detector-pair rate ``R(beta) = C*(1 + V*cos(beta + delta))``.

    Counts are weighted with Poisson errors ``sqrt(max(n, 1))``.
    """
    betas = np.asarray(betas, dtype=float)
    counts = np.asarray(counts, dtype=float)
    _check_scan(betas)
    c0, amp, d0 = _first_harmonic(betas, counts)
    if c0 <= 0:
        raise FitError("fringe has no positive mean rate")

    def model(b, c, v, delta):
        return c * (1.0 + v * np.cos(b + delta))

    sigma = np.sqrt(np.maximum(counts, 1.0))
    try:
        popt, pcov = curve_fit(
            model, betas, counts, p0=(c0, amp / c0, d0), sigma=sigma, absolute_sigma=True, maxfev=max_iter
        )
    except RuntimeError as exc:
        raise FitError(f"fringe fit did not converge: {exc}") from exc
    chi2 = float(np.sum(((counts - model(betas, *popt)) / sigma) ** 2))
    return _finish(popt[1], math.sqrt(pcov[1, 1]), popt[2], popt[0], chi2, betas.size - 3)


def chsh_s(e1: CorrelationEstimate, e2: CorrelationEstimate, e3: CorrelationEstimate, e4: CorrelationEstimate) -> ChshResult:
    """``S = |E(a,b) + E(a,b') + E(a',b) - E(a',b')|`` with quadrature error."""
    estimates = (e1, e2, e3, e4)
    for e in estimates:
        if not (math.isfinite(e.e_value) and math.isfinite(e.sigma)):
            raise ValueError("CHSH inputs must have finite values and sigmas")
    s = abs(e1.e_value + e2.e_value + e3.e_value - e4.e_value)
    s_sigma = math.sqrt(sum(e.sigma**2 for e in estimates))
    return ChshResult(estimates, s, s_sigma)


def s_from_visibility(v: float, v_sigma: float | None = None):
    """CHSH value implied by a sinusoidal, rotationally invariant fringe of visibility ``v``.

    Returns ``S`` or, when ``v_sigma`` is given, ``(S, sigma_S)``.
    """
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {v!r}")
    s = 2.0 * SQRT2 * v
    if v_sigma is None:
        return s
    return s, 2.0 * SQRT2 * v_sigma


def visibility_budget(multipair: float, accidental: float, misalignment: float) -> float:
    """First-order additive visibility budget, ``1 - (sum of reductions)``."""
    parts = (multipair, accidental, misalignment)
    if any(not 0.0 <= p <= 1.0 for p in parts):
        raise ValueError("budget fractions must each lie in [0, 1]")
    total = math.fsum(parts)
    if total > 1.0:
        raise ValueError(f"budget fractions sum to {total}, more than 1")
    return 1.0 - total
