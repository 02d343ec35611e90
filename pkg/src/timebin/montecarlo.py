"""Pulse-by-pulse Monte-Carlo of the distribution experiment, plus its closed-form twin.

Every pump pulse draws a pair number, each pair draws a joint outcome from
:func:`~timebin.quantum.lossless_table`, photons survive their fiber,
analyzer and detector independently, and dark counts fire per slot.  Alice's
click inside the trigger window opens Bob's gates; only then do Bob's
detectors register anything.

Pulses on which Alice's trigger stays silent produce no events, so the
engine does not visit them one by one.  It draws the number of triggered
pulses in a block from the exact binomial law, places them uniformly, and
samples each triggered pulse from the distribution conditioned on the
trigger.  Splitting a Poisson pair number by outcome category gives
independent Poisson counts per category, which makes the conditioning exact.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import quantum
from .errors import ConfigError
from .photonics import ChannelParams, DetectorParams, SourceParams, channel_transmittance
from .quantum import AnalyzerSetting, PairState
from .records import (
    EVENT_DTYPE,
    ORIGIN_DARK,
    ORIGIN_PHOTON,
    RECORD_DTYPE,
    SIDE_A,
    SIDE_B,
    TallyMatrix,
    events_to_array,
)
from .stabilization import DriftModel, Schedule, residual_visibility_factor

MODES = ("bell_scan", "bell_chsh", "qkd")
TRIGGER_WINDOWS = ("central_only", "cycle_all_three")
DETECTOR_NAMES = ("a_plus", "a_minus", "b_plus", "b_minus")

MAX_PULSES = 2**62
TRIGGERS_PER_BLOCK = 2**17

# cell = 2*slot + port_index, port_index 0 for +1
CELL_SLOT = np.array([0, 0, 1, 1, 2, 2], dtype=np.int8)
CELL_PORT = np.array([1, -1, 1, -1, 1, -1], dtype=np.int8)
CENTRAL_CELLS = np.array([2, 3])
ALL_CELLS = np.arange(6)


@dataclass(frozen=True)
class Detectors:
    a_plus: DetectorParams = DetectorParams()
    a_minus: DetectorParams = DetectorParams()
    b_plus: DetectorParams = DetectorParams(gated=True)
    b_minus: DetectorParams = DetectorParams(gated=True)

    def side(self, side: str) -> tuple[DetectorParams, DetectorParams]:
        return (self.a_plus, self.a_minus) if side == "A" else (self.b_plus, self.b_minus)


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete parameter set of one simulated run.

    ``pump_phase`` is the effective phase of the coincidence law (zero means
    ``E = V*cos(alpha + beta)``).  The static ``alignment_visibility`` of each
    analyzer is multiplied by the drift factor of ``drift`` under ``schedule``.
    """

    source: SourceParams = SourceParams()
    channel_a: ChannelParams = ChannelParams()
    channel_b: ChannelParams = ChannelParams()
    analyzer_a: AnalyzerSetting = AnalyzerSetting()
    analyzer_b: AnalyzerSetting = AnalyzerSetting()
    detectors: Detectors = Detectors()
    pump_phase: float = 0.0
    mode: str = "bell_scan"
    trigger_window: str = "central_only"
    drift: DriftModel = DriftModel()
    schedule: Schedule = Schedule()
    scan_points: int = 24
    chsh_alpha: float = 0.0
    chsh_alpha_prime: float = math.pi / 2
    chsh_beta: float = -math.pi / 4
    chsh_beta_prime: float = math.pi / 4

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"run.mode must be one of {MODES}, got {self.mode!r}")
        if self.trigger_window not in TRIGGER_WINDOWS:
            raise ConfigError(f"run.trigger_window must be one of {TRIGGER_WINDOWS}, got {self.trigger_window!r}")
        if self.mode == "qkd" and self.trigger_window != "cycle_all_three":
            raise ConfigError("run.trigger_window must be cycle_all_three in qkd mode")
        if not isinstance(self.scan_points, int) or self.scan_points < 4:
            raise ConfigError(f"run.scan_points must be an integer >= 4, got {self.scan_points!r}")
        for name in ("pump_phase", "chsh_alpha", "chsh_alpha_prime", "chsh_beta", "chsh_beta_prime"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"run.{name} must be finite")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def with_phases(self, alpha: float | None = None, beta: float | None = None) -> "ExperimentConfig":
        a, b = self.analyzer_a, self.analyzer_b
        if alpha is not None:
            a = dataclasses.replace(a, phase=alpha)
        if beta is not None:
            b = dataclasses.replace(b, phase=beta)
        return self.replace(analyzer_a=a, analyzer_b=b)

    def state(self) -> PairState:
        return PairState.from_effective_phase(self.pump_phase)

    @property
    def drift_factor(self) -> float:
        return residual_visibility_factor(self.drift, self.schedule)

    def effective_analyzers(self) -> tuple[AnalyzerSetting, AnalyzerSetting]:
        f = self.drift_factor
        return tuple(
            dataclasses.replace(an, alignment_visibility=an.alignment_visibility * f)
            for an in (self.analyzer_a, self.analyzer_b)
        )


class PulseModel:
    """Per-pulse probabilities derived from a config; shared by the sampler and the closed forms."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        eff_a, eff_b = config.effective_analyzers()
        self.table = quantum.lossless_table(config.state(), eff_a, eff_b).reshape(6, 6)
        det_a, det_b = config.detectors.side("A"), config.detectors.side("B")
        t_a = channel_transmittance(config.channel_a) * eff_a.transmittance
        t_b = channel_transmittance(config.channel_b) * eff_b.transmittance
        self.p_a = t_a * np.tile([det_a[0].efficiency, det_a[1].efficiency], 3)
        self.p_b = t_b * np.tile([det_b[0].efficiency, det_b[1].efficiency], 3)
        self.d_a = np.tile([det_a[0].dark_prob_per_gate, det_a[1].dark_prob_per_gate], 3)
        self.d_b = np.tile([det_b[0].dark_prob_per_gate, det_b[1].dark_prob_per_gate], 3)
        self.window = CENTRAL_CELLS if config.trigger_window == "central_only" else ALL_CELLS
        self.gated = self.window.copy()
        self.mu = config.source.mean_pairs_per_pulse
        self.single_pair = config.source.single_pair

        w, g = self.window, self.gated
        marg_a = self.table.sum(axis=1)
        # per-pair probability that Alice registers the photon in window cell x
        self.pi_a = marg_a[w] * self.p_a[w]
        # per-pair joint category probabilities, Alice window cell x and Bob gated cell y
        self.pi_ab = self.table[np.ix_(w, g)] * self.p_a[w][:, None] * self.p_b[g][None, :]
        # per-pair probability of a Bob photon at y with Alice not registering in the window
        alice_in_window = (self.table[np.ix_(w, g)] * self.p_a[w][:, None]).sum(axis=0)
        self.pi_b_only = np.clip(self.table[:, g].sum(axis=0) - alice_in_window, 0.0, None) * self.p_b[g]
        with np.errstate(invalid="ignore", divide="ignore"):
            self.bob_given_alice = np.where(self.pi_a[:, None] > 0, self.pi_ab / self.pi_a[:, None], 0.0)
        self.dark_a_window = self.d_a[w]
        self.dark_b_gated = self.d_b[g]

    # trigger statistics -------------------------------------------------
    @property
    def pair_trigger_mass(self) -> float:
        """Poisson mean (or single-pair probability) of a window-registered Alice photon."""
        total = float(self.pi_a.sum())
        return total if self.single_pair else self.mu * total

    @property
    def no_trigger_probability(self) -> float:
        silent_darks = float(np.prod(1.0 - self.dark_a_window))
        if self.single_pair:
            return (1.0 - self.pair_trigger_mass) * silent_darks
        return math.exp(-self.pair_trigger_mass) * silent_darks

    @property
    def trigger_probability(self) -> float:
        if self.single_pair:
            return 1.0 - self.no_trigger_probability
        silent_darks = float(np.prod(1.0 - self.dark_a_window))
        # 1 - exp(-L)*s written to keep precision when both are tiny
        return -math.expm1(-self.pair_trigger_mass) * silent_darks + (1.0 - silent_darks)


def _zero_truncated_poisson(lam: float, size: int, rng: np.random.Generator) -> np.ndarray:
    # first arrival of a rate-lam process on [0, 1] given at least one arrival,
    # then an ordinary Poisson count for the remaining interval
    u = rng.random(size)
    t = -np.log1p(u * math.expm1(-lam)) / lam
    return 1 + rng.poisson(lam * (1.0 - t))


def _categorical(probs: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    return np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), probs.size - 1)


def _first_dark(d: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Dark pattern over cells conditioned on at least one dark click."""
    survive_before = np.concatenate([[1.0], np.cumprod(1.0 - d)[:-1]])
    first = _categorical(survive_before * d, size, rng)
    darks = rng.random((size, d.size)) < d
    idx = np.arange(d.size)
    darks &= idx[None, :] > first[:, None]
    darks[np.arange(size), first] = True
    return darks


def _sample_block(model: PulseModel, start: int, length: int, rng: np.random.Generator):
    """Events of ``length`` pulses starting at ``start``; returns (events, n_triggers)."""
    q = model.trigger_probability
    m = int(rng.binomial(length, q)) if q > 0 else 0
    if m == 0:
        return np.empty(0, dtype=EVENT_DTYPE), 0
    pulses = np.sort(rng.choice(length, size=m, replace=False)).astype(np.int64) + start
    nw, ng = model.window.size, model.gated.size

    mass = model.pair_trigger_mass
    p_pairs = (mass if model.single_pair else -math.expm1(-mass)) / q
    has_pairs = rng.random(m) < p_pairs
    rows_p = np.flatnonzero(has_pairs)
    rows_d = np.flatnonzero(~has_pairs)

    if model.single_pair:
        k = np.ones(rows_p.size, dtype=np.int64)
    else:
        k = _zero_truncated_poisson(mass, rows_p.size, rng)
    pair_row = np.repeat(rows_p, k)
    pair_cell = _categorical(model.pi_a, pair_row.size, rng)

    photon_a = np.zeros((m, nw), dtype=bool)
    photon_a[pair_row, pair_cell] = True
    dark_a = np.zeros((m, nw), dtype=bool)
    dark_a[rows_p] = rng.random((rows_p.size, nw)) < model.dark_a_window
    if rows_d.size:
        dark_a[rows_d] = _first_dark(model.dark_a_window, rows_d.size, rng)

    # Bob: twins of the window-registered pairs
    photon_b = np.zeros((m, ng), dtype=bool)
    cond = np.concatenate([model.bob_given_alice, 1.0 - model.bob_given_alice.sum(axis=1, keepdims=True)], axis=1)
    cond = np.clip(cond, 0.0, None)
    cdf = np.cumsum(cond, axis=1)
    u = rng.random(pair_row.size)
    bob_cell = (u[:, None] >= cdf[pair_cell, :]).sum(axis=1)
    hit = bob_cell < ng
    photon_b[pair_row[hit], bob_cell[hit]] = True

    # Bob: photons of pairs Alice did not register, plus dark counts
    u = rng.random((m, ng))
    if model.single_pair:
        bg = np.zeros((m, ng), dtype=bool)
        free = np.flatnonzero(~has_pairs)
        if free.size:
            probs = np.concatenate([model.pi_b_only, [max(0.0, 1.0 - model.pair_trigger_mass - model.pi_b_only.sum())]])
            which = _categorical(probs, free.size, rng)
            ok = which < ng
            bg[free[ok], which[ok]] = True
        dark_b = u < model.dark_b_gated
        photon_b |= bg
    else:
        nu = model.mu * model.pi_b_only
        p_photon = -np.expm1(-nu)
        p_any = 1.0 - np.exp(-nu) * (1.0 - model.dark_b_gated)
        photon_b |= u < p_photon
        dark_b = u < p_any

    click_a = photon_a | dark_a
    click_b = photon_b | dark_b
    ra, ca = np.nonzero(click_a)
    rb, cb = np.nonzero(click_b)
    events = np.empty(ra.size + rb.size, dtype=EVENT_DTYPE)
    na = ra.size
    events["pulse_index"][:na] = pulses[ra]
    events["side"][:na] = SIDE_A
    events["slot"][:na] = CELL_SLOT[model.window[ca]]
    events["port"][:na] = CELL_PORT[model.window[ca]]
    events["origin"][:na] = np.where(photon_a[ra, ca], ORIGIN_PHOTON, ORIGIN_DARK)
    events["pulse_index"][na:] = pulses[rb]
    events["side"][na:] = SIDE_B
    events["slot"][na:] = CELL_SLOT[model.gated[cb]]
    events["port"][na:] = CELL_PORT[model.gated[cb]]
    events["origin"][na:] = np.where(photon_b[rb, cb], ORIGIN_PHOTON, ORIGIN_DARK)
    order = np.lexsort((-events["port"], events["slot"], events["side"], events["pulse_index"]))
    return events[order], m


@dataclass
class CoincidenceResult:
    records: np.ndarray
    tally: TallyMatrix
    multi_click_drops: int = 0


def coincide(events, live_pulses: int = 0, alpha: float = 0.0, beta: float = 0.0) -> CoincidenceResult:
    """Pair Alice and Bob clicks of the same pulse into coincidence records.

    Pulses with two or more clicks on one side form no record and are
    counted in ``multi_click_drops``.  The tally collects central-central
    records only.

    >>> from timebin.records import DetectionEvent as Ev
    >>> r = coincide([Ev(7, "A", +1, 1), Ev(7, "B", -1, 1)])
    >>> r.tally.n(+1, -1), len(r.records)
    (1, 1)
    """
    ev = events_to_array(events)
    pulse = ev["pulse_index"]
    if pulse.size > 1 and np.any(np.diff(pulse) < 0):
        raise ValueError("events must be sorted by pulse_index")
    tally = TallyMatrix(alpha=alpha, beta=beta, live_pulses=live_pulses)
    if ev.size == 0:
        return CoincidenceResult(np.empty(0, dtype=RECORD_DTYPE), tally, 0)

    uniq, first, inverse = np.unique(pulse, return_index=True, return_inverse=True)
    is_a = ev["side"] == SIDE_A
    n_a = np.bincount(inverse, weights=is_a, minlength=uniq.size).astype(np.int64)
    n_b = np.bincount(inverse, weights=~is_a, minlength=uniq.size).astype(np.int64)
    drops = int(np.count_nonzero((n_a >= 2) | (n_b >= 2)))
    good = (n_a == 1) & (n_b == 1)

    sel = good[inverse]
    a_rows = np.flatnonzero(sel & is_a)
    b_rows = np.flatnonzero(sel & ~is_a)
    records = np.empty(a_rows.size, dtype=RECORD_DTYPE)
    records["pulse_index"] = pulse[a_rows]
    records["slot_a"] = ev["slot"][a_rows]
    records["port_a"] = ev["port"][a_rows]
    records["slot_b"] = ev["slot"][b_rows]
    records["port_b"] = ev["port"][b_rows]

    central = (records["slot_a"] == 1) & (records["slot_b"] == 1)
    i = (records["port_a"][central] == -1).astype(np.int64)
    j = (records["port_b"][central] == -1).astype(np.int64)
    tally.counts = np.bincount(2 * i + j, minlength=4).reshape(2, 2).astype(np.int64)
    return CoincidenceResult(records, tally, drops)


@dataclass
class SimulationResult:
    config: ExperimentConfig
    n_pulses: int
    seed: int
    records: np.ndarray
    tally: TallyMatrix
    multi_click_drops: int
    n_triggers: int
    n_events_a: int
    n_events_b: int
    events: np.ndarray | None = field(default=None, repr=False)

    @property
    def live_time_s(self) -> float:
        return self.n_pulses / self.config.source.rep_rate_hz

    def coincidence_rate_hz(self, central_only: bool = True) -> float:
        rec = self.records
        n = np.count_nonzero((rec["slot_a"] == 1) & (rec["slot_b"] == 1)) if central_only else rec.size
        return n / self.live_time_s


def block_length(model: PulseModel, n_pulses: int) -> int:
    """Pulses per block; depends on the config only, so tallies do not depend on worker count."""
    q = model.trigger_probability
    if q <= 0:
        return n_pulses
    return int(min(n_pulses, max(1024, math.ceil(TRIGGERS_PER_BLOCK / q))))


def _run_block(args):
    config, seed, key, start, length, record_events = args
    model = PulseModel(config)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))
    events, n_trig = _sample_block(model, start, length, rng)
    co = coincide(events)
    n_a = int(np.count_nonzero(events["side"] == SIDE_A))
    return (
        events if record_events else None,
        co.records,
        co.tally.counts,
        co.multi_click_drops,
        n_trig,
        n_a,
        events.size - n_a,
    )


def simulate(
    config: ExperimentConfig,
    n_pulses: int,
    seed: int,
    *,
    record_events: bool = True,
    workers: int = 1,
    stream: tuple = (),
) -> SimulationResult:
    """Run ``n_pulses`` pump pulses and return events, coincidence records and the tally.

    The output is a deterministic function of ``(config, n_pulses, seed)``.
    Pulses are cut into blocks whose random streams derive from
    ``(seed, block_index)``; ``workers > 1`` runs blocks in separate
    processes with identical results.  ``stream`` is a tuple of integers
    that selects an independent random stream under the same seed.
    """
    if not isinstance(n_pulses, (int, np.integer)) or isinstance(n_pulses, bool) or n_pulses < 1:
        raise ConfigError(f"n_pulses must be an integer >= 1, got {n_pulses!r}")
    if n_pulses >= MAX_PULSES:
        raise OverflowError(f"n_pulses={n_pulses} exceeds the 64-bit pulse counter")
    if seed < 0:
        raise ConfigError("seed must be >= 0")
    n_pulses, seed, stream = int(n_pulses), int(seed), tuple(int(s) for s in stream)
    model = PulseModel(config)
    length = block_length(model, n_pulses)
    jobs = [
        (config, seed, (*stream, index), start, min(length, n_pulses - start), record_events)
        for index, start in enumerate(range(0, n_pulses, length))
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, jobs))
    else:
        parts = [_run_block(job) for job in jobs]

    counts = np.zeros((2, 2), dtype=np.int64)
    for p in parts:
        counts += p[2]
    tally = TallyMatrix(counts, config.analyzer_a.phase, config.analyzer_b.phase, n_pulses)
    events = np.concatenate([p[0] for p in parts]) if record_events else None
    return SimulationResult(
        config=config,
        n_pulses=n_pulses,
        seed=seed,
        records=np.concatenate([p[1] for p in parts]),
        tally=tally,
        multi_click_drops=sum(p[3] for p in parts),
        n_triggers=sum(p[4] for p in parts),
        n_events_a=sum(p[5] for p in parts),
        n_events_b=sum(p[6] for p in parts),
        events=events,
    )


# ---------------------------------------------------------------------------
# closed forms


def _others_silent(d: np.ndarray) -> np.ndarray:
    """``prod_{j != i} (1 - d_j)`` for every i."""
    return np.array([np.prod(np.delete(1.0 - d, i)) for i in range(d.size)])


def coincidence_probabilities(config: ExperimentConfig) -> np.ndarray:
    """Per-pulse probability of exactly one Alice and exactly one Bob click.

    Indexed ``[slot_a, port_a, slot_b, port_b]`` like an outcome table;
    entries outside Alice's trigger window or Bob's gates are zero.
    """
    m = PulseModel(config)
    w, g = m.window, m.gated
    da, db = m.dark_a_window, m.dark_b_gated
    keep_a = _others_silent(da)
    keep_b = _others_silent(db)
    pi_a_only = m.pi_a - m.pi_ab.sum(axis=1)
    pi_b_only = m.pi_b_only
    out = np.zeros((6, 6))
    if m.single_pair:
        pi_none = 1.0 - m.pi_a.sum() - pi_b_only.sum()
        core = (
            m.pi_ab
            + pi_a_only[:, None] * db[None, :]
            + pi_b_only[None, :] * da[:, None]
            + pi_none * da[:, None] * db[None, :]
        )
    else:
        lam_ab = m.mu * m.pi_ab
        lam_a0 = m.mu * pi_a_only
        lam_0b = m.mu * pi_b_only
        visible = m.mu * (m.pi_a.sum() + pi_b_only.sum())
        free_a = lam_ab + lam_a0[:, None]
        free_b = lam_ab + lam_0b[None, :]
        free = lam_ab + lam_a0[:, None] + lam_0b[None, :]
        silent_a = np.exp(-free_a) * (1.0 - da)[:, None]
        silent_b = np.exp(-free_b) * (1.0 - db)[None, :]
        silent_ab = np.exp(-free) * (1.0 - da)[:, None] * (1.0 - db)[None, :]
        core = np.exp(-(visible - free)) * (1.0 - silent_a - silent_b + silent_ab)
    out[np.ix_(w, g)] = core * keep_a[:, None] * keep_b[None, :]
    return out.reshape(3, 2, 3, 2)


def expected_singles(config: ExperimentConfig) -> tuple[float, float]:
    """Expected Alice and Bob clicks per pulse (Bob only counts while gated)."""
    m = PulseModel(config)
    da, db = m.dark_a_window, m.dark_b_gated
    no_trig_darks = np.prod(1.0 - da)
    pi_b_col = m.pi_ab.sum(axis=0)
    if m.single_pair:
        alice = np.sum(1.0 - (1.0 - m.pi_a) * (1.0 - da))
        y_silent = (1.0 - pi_b_col - m.pi_b_only) * (1.0 - db)
        both_silent = (1.0 - m.pi_a.sum() - m.pi_b_only) * no_trig_darks * (1.0 - db)
    else:
        alice = np.sum(1.0 - np.exp(-m.mu * m.pi_a) * (1.0 - da))
        y_silent = np.exp(-m.mu * (pi_b_col + m.pi_b_only)) * (1.0 - db)
        both_silent = np.exp(-m.mu * (m.pi_a.sum() + m.pi_b_only)) * no_trig_darks * (1.0 - db)
    bob = np.sum(m.trigger_probability - y_silent + both_silent)
    return float(alice), float(bob)


def _basis_masks():
    slot = np.repeat([0, 1, 2], 2)
    port = np.tile([1, -1], 3)
    sa, sb = np.meshgrid(slot, slot, indexing="ij")
    pa, pb = np.meshgrid(port, port, indexing="ij")
    sat_a, sat_b = sa != 1, sb != 1
    z = sat_a & sat_b
    x = (sa == 1) & (sb == 1)
    return {
        "Z": (z, z & (sa != sb)),
        "X": (x, x & (pa != pb)),
    }


def predicted_qber(config: ExperimentConfig) -> dict:
    """Closed-form per-basis QBER and sifted-bit rate (bits/s) at the configured phases."""
    p = coincidence_probabilities(config).reshape(6, 6)
    out = {}
    for basis, (mask, err) in _basis_masks().items():
        total = p[mask].sum()
        out[basis] = {
            "qber": float(p[err].sum() / total) if total > 0 else math.nan,
            "rate_hz": float(total * config.source.rep_rate_hz),
        }
    return out


def predicted_correlation(config: ExperimentConfig) -> float:
    """Closed-form E of central-central coincidences at the configured phases."""
    p = coincidence_probabilities(config)[1, :, 1, :]
    total = p.sum()
    if total <= 0:
        return math.nan
    return float((p[0, 0] + p[1, 1] - p[0, 1] - p[1, 0]) / total)


def predicted_visibility(config: ExperimentConfig) -> float:
    """Fringe visibility: E at the fully correlated point ``alpha + beta = phi'``."""
    aligned = config.replace(trigger_window="central_only", mode="bell_scan").with_phases(
        alpha=0.0, beta=config.pump_phase
    )
    return predicted_correlation(aligned)


def central_coincidence_rate_hz(config: ExperimentConfig) -> float:
    p = coincidence_probabilities(config)[1, :, 1, :]
    return float(p.sum() * config.source.rep_rate_hz)


def coincidence_budget(config: ExperimentConfig, basis: str = "X") -> dict:
    """First-order split of coincidences into true, multi-pair and accidental parts.

    ``basis`` ``"X"`` uses central-central coincidences (the Bell-test set),
    ``"Z"`` satellite-satellite ones.  Fractions are relative to the sum of
    the three leading-order rates.
    """
    m = PulseModel(config.replace(trigger_window="cycle_all_three", mode="qkd"))
    mask = _basis_masks()[basis][0]
    marg_a = m.table.sum(axis=1) * m.p_a
    marg_b = m.table.sum(axis=0) * m.p_b
    joint = m.table * m.p_a[:, None] * m.p_b[None, :]
    mu = 1.0 if m.single_pair else m.mu
    true = mu * joint[mask].sum()
    multi = 0.0 if m.single_pair else mu**2 * np.outer(marg_a, marg_b)[mask].sum()
    acc = (
        np.outer(m.d_a, mu * marg_b) + np.outer(mu * marg_a, m.d_b) + np.outer(m.d_a, m.d_b)
    )[mask].sum()
    total = true + multi + acc
    return {
        "true": float(true / total),
        "multipair": float(multi / total),
        "accidental": float(acc / total),
        "rate_hz": float(total * config.source.rep_rate_hz),
    }


def calibrate_extra_losses(
    config: ExperimentConfig, visibility: float, pair_rate_hz: float, max_loss_db: float = 40.0
) -> ExperimentConfig:
    """Solve for the two fiber coupling losses that hit a fringe visibility and a rate.

    ``pair_rate_hz`` is the mean central-central coincidence rate per
    detector combination (a quarter of the total).  All other parameters
    stay as given.  For each Alice loss the Bob loss is fixed by the rate;
    the visibility condition then picks Alice's loss.  When two solutions
    exist the one with the smaller Alice loss is returned.
    """

    def apply(xa, xb):
        return config.replace(
            channel_a=dataclasses.replace(config.channel_a, extra_loss_db=float(xa)),
            channel_b=dataclasses.replace(config.channel_b, extra_loss_db=float(xb)),
            trigger_window="central_only",
            mode="bell_scan",
        )

    def log_rate(xa, xb):
        return math.log(central_coincidence_rate_hz(apply(xa, xb)) / 4.0 / pair_rate_hz)

    def bob_loss(xa):
        lo, hi = log_rate(xa, 0.0), log_rate(xa, max_loss_db)
        if lo < 0 or hi > 0:
            return None
        return brentq(lambda xb: log_rate(xa, xb), 0.0, max_loss_db, xtol=1e-12)

    def v_gap(xa):
        xb = bob_loss(xa)
        return None if xb is None else predicted_visibility(apply(xa, xb)) - visibility

    grid = np.linspace(0.0, max_loss_db, 161)
    gaps = [v_gap(x) for x in grid]
    for k in range(grid.size - 1):
        g0, g1 = gaps[k], gaps[k + 1]
        if g0 is None or g1 is None or g0 * g1 > 0:
            continue
        xa = grid[k] if g0 == 0 else brentq(v_gap, grid[k], grid[k + 1], xtol=1e-12)
        xb = bob_loss(xa)
        out = apply(xa, xb)
        return out.replace(trigger_window=config.trigger_window, mode=config.mode)
    best = max((g for g in gaps if g is not None), default=None)
    raise ConfigError(
        f"calibration targets are unreachable (best visibility gap {best!r} at rate {pair_rate_hz} Hz)"
    )
