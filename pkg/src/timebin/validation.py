"""Self-contained consistency checks behind ``timebin validate``.

The reference enumerator below walks every pump bin, analyzer arm and
output port explicitly and shares no code with :mod:`timebin.quantum`.
"""

from __future__ import annotations

import cmath
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from . import quantum
from .analysis import CHSH_SETTINGS, CorrelationEstimate, chsh_s
from .quantum import AnalyzerSetting, PairState

GRID_PHASES = tuple(k * math.pi / 4 for k in range(8))
GRID_V = (0.0, 0.5, 1.0)
TOLERANCE = 1e-12


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    max_error: float
    cases: int
    seconds: float


def enumerate_paths(phi: float, alpha: float, beta: float, v_a: float = 1.0, v_b: float = 1.0,
                    w_early: float = math.sqrt(0.5), w_late: float = math.sqrt(0.5)) -> dict:
    """Outcome probabilities of ``w_early|00> - w_late e^{i phi}|11>`` by explicit path sums.

    Returns ``{(slot_a, port_a, slot_b, port_b): probability}``.  Paths that
    end in the same outcome add coherently with weight ``v_a*v_b`` and
    incoherently with the rest.
    """
    pumps = ((0, complex(w_early)), (1, -w_late * cmath.exp(1j * phi)))
    paths = {}
    for (t, c), arm_a, arm_b, port_a, port_b in itertools.product(pumps, (0, 1), (0, 1), (1, -1), (1, -1)):
        amp_a = 0.5 if arm_a == 0 else port_a * cmath.exp(1j * alpha) / 2
        amp_b = 0.5 if arm_b == 0 else port_b * cmath.exp(1j * beta) / 2
        key = (t + arm_a, port_a, t + arm_b, port_b)
        paths.setdefault(key, []).append(c * amp_a * amp_b)
    v = v_a * v_b
    out = {}
    for sa, pa, sb, pb in itertools.product((0, 1, 2), (1, -1), (0, 1, 2), (1, -1)):
        amps = paths.get((sa, pa, sb, pb), [])
        classical = sum(abs(a) ** 2 for a in amps)
        coherent = abs(sum(amps)) ** 2
        out[(sa, pa, sb, pb)] = classical + v * (coherent - classical)
    return out


def _timed(name, fn) -> CheckResult:
    start = time.perf_counter()
    err, cases = fn()
    return CheckResult(name, bool(err < TOLERANCE), float(err), cases, time.perf_counter() - start)


def oracle_equivalence() -> CheckResult:
    """Engine table against the path enumerator over the full phase and visibility grid."""

    def run():
        worst, cases = 0.0, 0
        for phi, alpha, beta, v in itertools.product(GRID_PHASES, GRID_PHASES, GRID_PHASES, GRID_V):
            table = quantum.joint_outcome_table(
                PairState(phi), AnalyzerSetting(alpha, v), AnalyzerSetting(beta, 1.0)
            )
            ref = enumerate_paths(phi, alpha, beta, v, 1.0)
            for (sa, pa, sb, pb), p in ref.items():
                worst = max(worst, abs(table.prob(sa, pa, sb, pb) - p))
            cases += 1
        return worst, cases

    return _timed("oracle_equivalence", run)


def normalization(draws: int = 1000, seed: int = 0) -> CheckResult:
    """Entries plus loss mass sum to one for random states, phases, visibilities and losses."""

    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(draws):
            phi, alpha, beta = rng.uniform(0, 2 * math.pi, 3)
            va, vb = rng.uniform(0, 1, 2)
            la, lb = rng.uniform(0, 10, 2)
            w0 = rng.uniform(0, 1)
            state = PairState(phi, w0, math.sqrt(1 - w0 * w0))
            t = quantum.joint_outcome_table(state, AnalyzerSetting(alpha, va, la), AnalyzerSetting(beta, vb, lb))
            worst = max(worst, abs(t.total() - 1.0))
            if np.any(t.probabilities < 0):
                worst = math.inf
        return worst, draws

    return _timed("normalization", run)


def rotational_invariance() -> CheckResult:
    """Alice's central-slot marginal per port does not depend on any phase."""

    def run():
        worst, cases = 0.0, 0
        for phi, alpha, beta, v in itertools.product(GRID_PHASES, GRID_PHASES, GRID_PHASES, GRID_V):
            t = quantum.joint_outcome_table(PairState(phi), AnalyzerSetting(alpha, v), AnalyzerSetting(beta))
            worst = max(worst, float(np.abs(t.alice_marginal()[1] - 0.25).max()))
            cases += 1
        return worst, cases

    return _timed("rotational_invariance", run)


def conditional_law() -> CheckResult:
    """Central-central conditional probabilities follow ``(1 + ij V cos(a + b - phi'))/4``."""

    def run():
        worst, cases = 0.0, 0
        for phi, alpha, beta, v in itertools.product(GRID_PHASES, GRID_PHASES, GRID_PHASES, GRID_V):
            state = PairState(phi)
            t = quantum.joint_outcome_table(state, AnalyzerSetting(alpha, v), AnalyzerSetting(beta))
            cond = t.central_conditional()
            for (ii, i), (jj, j) in itertools.product(enumerate((1, -1)), repeat=2):
                law = quantum.central_coincidence_prob(i, j, alpha, beta, state.effective_phase, v)
                worst = max(worst, abs(cond[ii, jj] - law))
            cases += 1
        return worst, cases

    return _timed("conditional_law", run)


def forbidden_slots() -> CheckResult:
    """Early-late and late-early satellite coincidences are exactly zero."""

    def run():
        worst, cases = 0.0, 0
        for phi, alpha, beta, v in itertools.product(GRID_PHASES, GRID_PHASES, GRID_PHASES, GRID_V):
            t = quantum.joint_outcome_table(PairState(phi), AnalyzerSetting(alpha, v), AnalyzerSetting(beta))
            p = t.probabilities
            worst = max(worst, float(np.abs(p[0, :, 2, :]).max()), float(np.abs(p[2, :, 0, :]).max()))
            cases += 1
        # exact zero is required, so any residue fails regardless of size
        return (math.inf if worst != 0.0 else 0.0), cases

    return _timed("forbidden_slots", run)


def chsh_consistency() -> CheckResult:
    """CHSH over ``expected_E`` at the maximising settings equals ``2 sqrt(2) V``."""

    def run():
        worst = 0.0
        vs = [k / 4 for k in range(5)]
        a, ap, b, bp = (CHSH_SETTINGS[k] for k in ("alpha", "alpha_prime", "beta", "beta_prime"))
        for v in vs:
            es = [CorrelationEstimate(quantum.expected_E(x, y, v), 0.0, 1) for x, y in ((a, b), (a, bp), (ap, b), (ap, bp))]
            worst = max(worst, abs(chsh_s(*es).s_value - 2 * math.sqrt(2) * v))
        return worst, len(vs)

    return _timed("chsh_consistency", run)


SUITE = (oracle_equivalence, normalization, rotational_invariance, conditional_law, forbidden_slots, chsh_consistency)


def run_all() -> list[CheckResult]:
    return [check() for check in SUITE]
