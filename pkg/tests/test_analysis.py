import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from timebin.analysis import (
    CHSH_SETTINGS,
    CorrelationEstimate,
    FitError,
    chsh_s,
    estimate_E,
    fit_fringe,
    fit_visibility,
    fit_visibility_tallies,
    s_from_visibility,
    visibility_budget,
)
from timebin.quantum import central_coincidence_prob, expected_E
from timebin.records import TallyMatrix

SQ = 1 / math.sqrt(2)


def sample_tally(rng, n, v, angle, **labels):
    p = [central_coincidence_prob(i, j, angle, 0.0, 0.0, v) for i in (1, -1) for j in (1, -1)]
    return TallyMatrix(rng.multinomial(n, p).reshape(2, 2), **labels)


def test_estimate_E_examples():
    e = estimate_E(TallyMatrix.from_counts(100, 0, 0, 100))
    assert (e.e_value, e.sigma) == (1.0, 0.0)
    e = estimate_E(TallyMatrix.from_counts(50, 50, 50, 50))
    assert e.e_value == 0.0 and e.sigma == pytest.approx(2 * math.sqrt(0.25 / 200))
    assert e.sigma == pytest.approx(0.0707, abs=1e-4)
    with pytest.raises(ValueError):
        estimate_E(TallyMatrix())


def test_estimate_E_against_law():
    e = estimate_E(sample_tally(np.random.default_rng(5), 10**4, 0.78, 0.0))
    assert abs(e.e_value - 0.78) < 3 * e.sigma


def test_estimator_converges_as_inverse_sqrt_n():
    rng = np.random.default_rng(6)
    spreads = []
    for n in (10**2, 10**4, 10**6):
        es = [estimate_E(sample_tally(rng, n, 0.78, 0.7)).e_value for _ in range(300)]
        spreads.append(np.std(es) * math.sqrt(n))
    # sqrt(N) * spread is constant when the error falls as 1/sqrt(N)
    assert max(spreads) / min(spreads) < 1.25


def test_correlation_estimate_bounds():
    with pytest.raises(ValueError):
        CorrelationEstimate(1.5, 0.1, 10)


def test_fit_noiseless_examples():
    b = np.linspace(0, 2 * math.pi, 12, endpoint=False)
    fit = fit_visibility(b, 0.78 * np.cos(b))
    assert fit.v == pytest.approx(0.78, abs=1e-9) and abs(fit.phase_offset) < 1e-9
    fit = fit_visibility(b, np.cos(b + math.pi / 3))
    assert fit.v == pytest.approx(1.0, abs=1e-9) and fit.phase_offset == pytest.approx(math.pi / 3, abs=1e-9)


def test_fit_clamps_and_flags():
    b = np.linspace(0, 2 * math.pi, 12, endpoint=False)
    fit = fit_visibility(b, 1.02 * np.cos(b))
    assert fit.v == 1.0 and fit.at_bound and fit.v_sigma >= 0


def test_fit_span_errors():
    with pytest.raises(ValueError):
        fit_visibility([0, 0.1, 0.2], [1, 1, 1])
    with pytest.raises(ValueError):
        fit_visibility(np.linspace(0, 1.0, 8), np.cos(np.linspace(0, 1.0, 8)))


def test_fit_nonconvergence_is_reported():
    b = np.array([0.0, 0.3, 0.5, 1.1, 2.0, 2.2, 3.5, 4.4, 5.9])
    with pytest.raises(FitError):
        fit_visibility(b, np.cos(3 * b) + 0.4 + 0.3 * np.cos(b + 1), max_iter=2)


def test_fit_fringe_counts():
    b = np.linspace(0, 2 * math.pi, 24, endpoint=False)
    fit = fit_fringe(b, 300 * (1 + 0.78 * np.cos(b + 0.4)))
    assert fit.v == pytest.approx(0.78, abs=1e-9)
    assert fit.mean_rate == pytest.approx(300, rel=1e-9)
    assert fit.phase_offset == pytest.approx(0.4, abs=1e-9)


def test_fit_unbiased_over_repeated_scans():
    # about 3 coincidences/s for 100 s on each of the four detector pairs
    rng = np.random.default_rng(7)
    betas = np.linspace(0, 2 * math.pi, 24, endpoint=False)
    vs, sig = [], []
    for _ in range(100):
        tallies = [sample_tally(rng, rng.poisson(1200), 0.78, b, beta=b) for b in betas]
        f = fit_visibility_tallies(tallies)
        vs.append(f.v)
        sig.append(f.v_sigma)
    assert abs(np.mean(vs) - 0.78) < 0.005
    assert abs(np.std(vs, ddof=1) / np.mean(sig) - 1) < 0.3


def test_chsh_examples():
    es = [CorrelationEstimate(x, 0.0, 1) for x in (SQ, SQ, SQ, -SQ)]
    assert chsh_s(*es).s_value == pytest.approx(2 * math.sqrt(2), abs=1e-15)
    assert chsh_s(*[CorrelationEstimate(0.5, 0.0, 1)] * 4).s_value == 1.0
    r = chsh_s(*[CorrelationEstimate(0.5, 0.003, 1)] * 4)
    assert r.s_sigma == pytest.approx(0.006) and r.n_sigma_violation < 0


def test_published_chsh_significance():
    # four estimates consistent with S = 2.185 +- 0.006
    e = 2.185 / 4
    es = [CorrelationEstimate(v, 0.003, 1) for v in (e, e, e, -e)]
    r = chsh_s(*es)
    assert r.s_value == pytest.approx(2.185) and r.s_sigma == pytest.approx(0.006)
    assert r.n_sigma_violation == pytest.approx(30.8, abs=0.05)
    assert r.n_sigma_violation > 15


def test_chsh_rejects_nonfinite():
    with pytest.raises(ValueError):
        chsh_s(*[CorrelationEstimate(0.5, math.inf, 1)] * 4)


@given(st.floats(0, 1))
def test_chsh_consistent_with_visibility(v):
    a, ap, b, bp = (CHSH_SETTINGS[k] for k in ("alpha", "alpha_prime", "beta", "beta_prime"))
    es = [CorrelationEstimate(expected_E(x, y, v), 0.0, 1) for x, y in ((a, b), (a, bp), (ap, b), (ap, bp))]
    assert abs(chsh_s(*es).s_value - s_from_visibility(v)) < 1e-12


def test_s_from_visibility_examples():
    assert round(s_from_visibility(0.78), 3) == 2.206
    assert s_from_visibility(SQ) == pytest.approx(2.0, abs=1e-15)
    assert s_from_visibility(1.0) == 2 * math.sqrt(2)
    assert s_from_visibility(0.78, 0.016)[1] == pytest.approx(2 * math.sqrt(2) * 0.016)
    with pytest.raises(ValueError):
        s_from_visibility(1.2)


def test_visibility_budget():
    assert visibility_budget(0.09, 0.08, 0.05) == 0.78
    assert visibility_budget(0, 0, 0) == 1.0
    assert round(s_from_visibility(visibility_budget(0.09, 0.08, 0.05)), 3) == 2.206
    with pytest.raises(ValueError):
        visibility_budget(0.6, 0.5, 0.0)
    with pytest.raises(ValueError):
        visibility_budget(-0.1, 0.0, 0.0)
