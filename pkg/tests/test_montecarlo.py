import math

import numpy as np
import pytest
from scipy import stats

from reference_sim import brute_force_tally
from timebin.errors import ConfigError
from timebin.montecarlo import (
    Detectors,
    ExperimentConfig,
    coincide,
    coincidence_budget,
    coincidence_probabilities,
    expected_singles,
    predicted_correlation,
    simulate,
)
from timebin.photonics import DetectorParams, SourceParams
from timebin.quantum import AnalyzerSetting, central_coincidence_prob
from timebin.records import SIDE_A, SIDE_B, DetectionEvent


def detectors(eff_a=1.0, eff_b=1.0, dark_a=0.0, dark_b=0.0):
    return Detectors(
        DetectorParams(eff_a, dark_a),
        DetectorParams(eff_a, dark_a),
        DetectorParams(eff_b, dark_b, gated=True),
        DetectorParams(eff_b, dark_b, gated=True),
    )


def cell(slot, port):
    return 2 * slot.astype(int) + np.where(port == 1, 0, 1)


def config(mu=0.08, single=False, v=1.0, window="central_only", **det):
    return ExperimentConfig(
        source=SourceParams(mu, 75e6, single),
        analyzer_a=AnalyzerSetting(0.0, v),
        analyzer_b=AnalyzerSetting(0.0, 1.0),
        detectors=detectors(**det),
        trigger_window=window,
    )


def test_ideal_perfect_correlation():
    r = simulate(config(single=True), 100_000, seed=1)
    c = r.tally.counts
    assert r.tally.total >= 10_000
    assert c[0, 1] + c[1, 0] == 0
    assert c[0, 0] + c[1, 1] == r.tally.total


def test_dead_apparatus():
    r = simulate(config(eff_a=0.0, eff_b=0.0), 10**6, seed=3)
    assert r.events.size == 0 and r.records.size == 0 and r.tally.total == 0


def test_coincide_examples():
    r = coincide([DetectionEvent(7, "A", +1, 1), DetectionEvent(7, "B", -1, 1)])
    assert len(r.records) == 1 and r.tally.n(+1, -1) == 1
    r = coincide([DetectionEvent(7, "A", +1, 1), DetectionEvent(8, "B", -1, 1)])
    assert len(r.records) == 0 and r.tally.total == 0
    r = coincide([DetectionEvent(7, "A", +1, 1), DetectionEvent(7, "A", -1, 1), DetectionEvent(7, "B", 1, 1)])
    assert len(r.records) == 0 and r.multi_click_drops == 1
    with pytest.raises(ValueError):
        coincide([DetectionEvent(8, "A", +1, 1), DetectionEvent(7, "B", -1, 1)])


def test_satellite_records_stay_out_of_tally():
    r = coincide([DetectionEvent(1, "A", +1, 0), DetectionEvent(1, "B", +1, 0)])
    assert len(r.records) == 1 and r.tally.total == 0


def test_bob_events_only_after_alice_trigger():
    r = simulate(config(mu=0.3, eff_a=0.3, eff_b=0.5, dark_a=1e-3, dark_b=1e-2, window="cycle_all_three"), 200_000, 5)
    ev = r.events
    a_pulses = set(ev["pulse_index"][ev["side"] == SIDE_A])
    assert set(ev["pulse_index"][ev["side"] == SIDE_B]) <= a_pulses
    # central-only windows: Alice never reports a satellite
    r = simulate(config(mu=0.3, eff_a=0.3, dark_a=1e-3), 200_000, 5)
    assert np.all(r.events["slot"] == 1)


def test_conditional_law_small_mu():
    phase = 1.0
    cfg = config(mu=1e-3, v=0.9).with_phases(alpha=0.4, beta=phase - 0.4)
    r = simulate(cfg, 4 * 10**8, seed=11, record_events=False)
    counts = r.tally.counts.ravel()
    assert counts.sum() >= 10**5
    law = np.array([central_coincidence_prob(i, j, 0.4, phase - 0.4, 0.0, 0.9) for i in (1, -1) for j in (1, -1)])
    _, p = stats.chisquare(counts, counts.sum() * law)
    assert p > 0.0027


def test_engine_matches_exact_closed_form():
    cfg = config(mu=0.2, v=0.8, eff_a=0.4, eff_b=0.3, dark_a=2e-3, dark_b=5e-3, window="cycle_all_three").with_phases(0.3, 0.9)
    n = 2 * 10**6
    r = simulate(cfg, n, seed=21, record_events=False)
    p = coincidence_probabilities(cfg).reshape(36)
    observed = np.zeros(36)
    np.add.at(observed, cell(r.records["slot_a"], r.records["port_a"]) * 6 + cell(r.records["slot_b"], r.records["port_b"]), 1)
    expect = n * p
    keep = expect > 20
    chi2 = np.sum((observed[keep] - expect[keep]) ** 2 / expect[keep])
    assert stats.chi2.sf(chi2, keep.sum()) > 0.0027
    assert observed[~keep].sum() <= max(30, 3 * expect[~keep].sum())


@pytest.mark.parametrize("single, window", [(False, "central_only"), (False, "cycle_all_three"), (True, "cycle_all_three")])
def test_engine_matches_brute_force(single, window):
    cfg = config(mu=0.3, single=single, v=0.7, eff_a=0.5, eff_b=0.4, dark_a=0.01, dark_b=0.02, window=window)
    cfg = cfg.with_phases(0.2, 0.5)
    n = 300_000
    r = simulate(cfg, n, seed=8)
    _, cells_ref, a_ref, b_ref = brute_force_tally(cfg, n, np.random.default_rng(8))
    ours = np.zeros((6, 6))
    np.add.at(ours, (cell(r.records["slot_a"], r.records["port_a"]), cell(r.records["slot_b"], r.records["port_b"])), 1)
    both = ours + cells_ref
    keep = both > 20
    # two-sample chi-square on equal exposure
    chi2 = np.sum((ours[keep] - cells_ref[keep]) ** 2 / both[keep])
    assert stats.chi2.sf(chi2, keep.sum()) > 0.0027
    n_a = np.count_nonzero(r.events["side"] == SIDE_A)
    n_b = r.events.size - n_a
    assert abs(n_a - a_ref) <= 3 * math.sqrt(n_a + a_ref)
    assert abs(n_b - b_ref) <= 3 * math.sqrt(n_b + b_ref)


def test_accidental_floor():
    # perfect interference; every off-diagonal count is an accidental
    cfg = config(single=True, eff_a=0.05, eff_b=0.05, dark_a=2e-3, dark_b=4e-3)
    r = simulate(cfg, 2 * 10**7, seed=4, record_events=False)
    b = coincidence_budget(cfg)
    predicted = 0.5 * b["accidental"]
    observed = (r.tally.n(1, -1) + r.tally.n(-1, 1)) / r.tally.total
    sigma = math.sqrt(predicted * (1 - predicted) / r.tally.total)
    assert abs(observed - predicted) < 3 * sigma
    assert 0.5 * (1 - predicted_correlation(cfg)) == pytest.approx(predicted, rel=0.02)


def test_rate_sanity():
    cfg = config(mu=0.1, eff_a=0.2, eff_b=0.3, dark_a=1e-3, dark_b=3e-3, window="cycle_all_three")
    n = 5 * 10**6
    r = simulate(cfg, n, seed=13)
    alice, bob = expected_singles(cfg)
    rep = cfg.source.rep_rate_hz
    for observed, per_pulse in ((r.n_events_a, alice), (r.n_events_b, bob)):
        rate = observed / n * rep
        assert abs(rate - per_pulse * rep) <= 3 * math.sqrt(n * per_pulse) / n * rep


def test_reproducible_and_worker_independent():
    cfg = config(single=True, eff_a=0.5, eff_b=0.5, dark_a=1e-3, dark_b=1e-3, window="cycle_all_three")
    a = simulate(cfg, 10**6, seed=99)
    b = simulate(cfg, 10**6, seed=99)
    c = simulate(cfg, 10**6, seed=99, workers=2)
    assert a.events.tobytes() == b.events.tobytes() == c.events.tobytes()
    assert a.records.tobytes() == c.records.tobytes()
    assert np.array_equal(a.tally.counts, c.tally.counts)
    d = simulate(cfg, 10**6, seed=100)
    assert d.events.tobytes() != a.events.tobytes()


def test_events_sorted_and_consistent():
    r = simulate(config(mu=0.2, eff_a=0.3, eff_b=0.3, dark_a=1e-3, dark_b=1e-3, window="cycle_all_three"), 10**6, seed=2)
    assert np.all(np.diff(r.events["pulse_index"]) >= 0)
    again = coincide(r.events)
    assert again.records.tobytes() == r.records.tobytes()


def test_simulate_errors():
    with pytest.raises(ConfigError):
        simulate(config(), 0, seed=1)
    with pytest.raises(ConfigError):
        simulate(config(), 10, seed=-1)
    with pytest.raises(OverflowError):
        simulate(config(), 2**62, seed=1)
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="qkd", trigger_window="central_only")
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="nonsense")


def test_tally_merge_is_associative():
    cfg = config(single=True).with_phases(0.0, 1.0)
    parts = [simulate(cfg, 10_000, seed=s).tally for s in range(3)]
    left = (parts[0] + parts[1]) + parts[2]
    right = parts[0] + (parts[1] + parts[2])
    assert np.array_equal(left.counts, right.counts) and left.live_pulses == 30_000
