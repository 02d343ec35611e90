"""Multi-run experiments: phase scans, four-setting CHSH runs and QKD runs.

Every setting of an experiment draws from its own random stream under the
run seed, so a scan point does not depend on how many points precede it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import analysis, qkd
from .montecarlo import ExperimentConfig, SimulationResult, simulate

_SCAN_STREAM, _CHSH_STREAM, _QKD_STREAM = 1, 2, 3
SCAN_COLUMNS = ("beta_rad", "n_pp", "n_pm", "n_mp", "n_mm", "e_value", "e_sigma")


def fmt(x) -> str:
    """Fixed CSV number format: integers as is, floats with 9 significant digits."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".9g")


@dataclass
class ScanResult:
    betas: np.ndarray
    tallies: list
    estimates: list
    fit: analysis.VisibilityFit
    s_implied: float
    s_sigma: float
    n_pulses: int
    multi_click_drops: int


@dataclass
class ChshRun:
    settings: tuple
    tallies: list
    result: analysis.ChshResult
    n_pulses: int


@dataclass
class QkdRun:
    simulation: SimulationResult
    sifted: qkd.SiftResult
    result: qkd.QkdResult
    verdict: qkd.SecurityVerdict | None


def scan_betas(points: int) -> np.ndarray:
    return np.linspace(0.0, 2.0 * math.pi, points, endpoint=False)


def bell_scan(
    config: ExperimentConfig, pulses_per_point: int, seed: int, points: int | None = None, workers: int = 1
) -> ScanResult:
    """Scan Bob's phase over a full period at Alice's configured phase and fit the fringe."""
    config = config.replace(mode="bell_scan")
    betas = scan_betas(points or config.scan_points)
    tallies, drops = [], 0
    for k, beta in enumerate(betas):
        run = simulate(
            config.with_phases(beta=beta), pulses_per_point, seed,
            record_events=False, workers=workers, stream=(_SCAN_STREAM, k),
        )
        tallies.append(run.tally)
        drops += run.multi_click_drops
    estimates = [analysis.estimate_E(t) for t in tallies]
    fit = analysis.fit_visibility(betas, [e.e_value for e in estimates], [e.sigma for e in estimates])
    s, s_sigma = analysis.s_from_visibility(fit.v, fit.v_sigma)
    return ScanResult(betas, tallies, estimates, fit, s, s_sigma, pulses_per_point * betas.size, drops)


def chsh_settings(config: ExperimentConfig) -> tuple:
    a, ap, b, bp = config.chsh_alpha, config.chsh_alpha_prime, config.chsh_beta, config.chsh_beta_prime
    return ((a, b), (a, bp), (ap, b), (ap, bp))


def chsh_experiment(config: ExperimentConfig, pulses_per_setting: int, seed: int, workers: int = 1) -> ChshRun:
    """Accumulate the four CHSH settings and combine them into S."""
    config = config.replace(mode="bell_chsh")
    settings = chsh_settings(config)
    tallies = []
    for k, (alpha, beta) in enumerate(settings):
        run = simulate(
            config.with_phases(alpha, beta), pulses_per_setting, seed,
            record_events=False, workers=workers, stream=(_CHSH_STREAM, k),
        )
        tallies.append(run.tally)
    result = analysis.chsh_s(*(analysis.estimate_E(t) for t in tallies))
    return ChshRun(settings, tallies, result, 4 * pulses_per_setting)


def qkd_experiment(config: ExperimentConfig, n_pulses: int, seed: int, workers: int = 1) -> QkdRun:
    """Monitor all three windows, sift into the two bases and compute the QBER."""
    config = config.replace(mode="qkd", trigger_window="cycle_all_three")
    sim = simulate(config, n_pulses, seed, record_events=False, workers=workers, stream=(_QKD_STREAM,))
    sifted = qkd.classify_and_sift(sim.records)
    result = qkd.qber(sifted, n_pulses, config.source.rep_rate_hz)
    verdict = qkd.security_check(result) if result.populated else None
    return QkdRun(sim, sifted, result, verdict)


def write_scan_csv(path, scan: ScanResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCAN_COLUMNS)
        for beta, t, e in zip(scan.betas, scan.tallies, scan.estimates):
            c = t.counts
            w.writerow([fmt(float(beta)), *(fmt(n) for n in (c[0, 0], c[0, 1], c[1, 0], c[1, 1])), fmt(e.e_value), fmt(e.sigma)])


def write_tally_csv(path, settings, tallies) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("alpha_rad", "beta_rad", "n_pp", "n_pm", "n_mp", "n_mm", "e_value", "e_sigma"))
        for (alpha, beta), t in zip(settings, tallies):
            e = analysis.estimate_E(t)
            c = t.counts
            w.writerow([fmt(float(alpha)), fmt(float(beta)), *(fmt(n) for n in c.ravel()), fmt(e.e_value), fmt(e.sigma)])
