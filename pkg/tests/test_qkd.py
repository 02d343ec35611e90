import csv
import math

import numpy as np
import pytest

from timebin.experiments import qkd_experiment
from timebin.montecarlo import Detectors, ExperimentConfig, predicted_qber
from timebin.photonics import DetectorParams, SourceParams
from timebin.qkd import (
    SIFTED_DTYPE,
    QkdResult,
    classify_and_sift,
    qber,
    qber_budget,
    security_check,
    write_sifted_csv,
)
from timebin.quantum import AnalyzerSetting, PairState, joint_outcome_table
from timebin.records import RECORD_DTYPE, CoincidenceRecord


def bits(basis, n, errors):
    b = np.zeros(n, dtype=SIFTED_DTYPE)
    b["pulse_index"] = np.arange(n)
    b["basis"] = basis
    b["bob_bit"][:errors] = 1
    return b


def test_sift_examples():
    r = classify_and_sift([CoincidenceRecord(1, 0, 1, 0, -1)])
    assert list(r) == [(1, "Z", 0, 0)]
    r = classify_and_sift([CoincidenceRecord(2, 1, 1, 1, 1)])
    assert list(r) == [(2, "X", 0, 0)]
    r = classify_and_sift([CoincidenceRecord(3, 0, 1, 2, 1)])
    assert list(r) == [(3, "Z", 0, 1)]
    r = classify_and_sift([CoincidenceRecord(4, 1, -1, 1, -1), CoincidenceRecord(5, 2, 1, 2, -1)])
    assert list(r) == [(4, "X", 1, 1), (5, "Z", 1, 1)]


def test_sift_discards_mismatch_and_malformed():
    recs = np.array([(1, 0, 1, 1, 1), (2, 1, 1, 2, -1), (3, 5, 1, 1, 1), (4, 1, 0, 1, 1)], dtype=RECORD_DTYPE)
    r = classify_and_sift(recs)
    assert r.kept == 0 and r.basis_mismatch == 2 and r.malformed == 2


def test_qber_examples():
    res = qber(bits("Z", 1000, 128))
    assert res["Z"].qber == pytest.approx(0.128)
    assert res["Z"].sigma == pytest.approx(0.0106, abs=5e-5)
    assert res["X"] is None
    res = qber(bits("X", 1000, 105))
    assert res["X"].qber == pytest.approx(0.105) and res["X"].sigma == pytest.approx(0.0097, abs=5e-5)
    res = qber(np.concatenate([bits("Z", 10, 0), bits("X", 10, 0)]), n_pulses=75_000_000, rep_rate_hz=75e6)
    assert res["Z"].qber == 0 and res["X"].qber == 0
    assert res["Z"].rate_hz == pytest.approx(10.0)


def test_qber_budget():
    assert qber_budget(0.08, 0.045, 0.02, "Z") == 0.125
    assert qber_budget(0.04, 0.045, 0.02, "X") == 0.105
    assert qber_budget(0, 0, 0, "Z") == qber_budget(0, 0, 0, "X") == 0
    with pytest.raises(ValueError):
        qber_budget(0.1, 1.2, 0, "X")
    with pytest.raises(ValueError):
        qber_budget(0.1, 0.1, 0, "Y")


def test_security_check():
    v = security_check({"Z": 0.128, "X": 0.105})
    assert v.secure and v.margins["Z"] == pytest.approx(0.022) and v.margins["X"] == pytest.approx(0.045)
    assert not security_check({"Z": 0.15, "X": 0.01}).secure
    assert security_check({"Z": 0.108, "X": 0.098}).secure
    assert security_check({"Z": 0.1, "X": None}).secure
    with pytest.raises(ValueError):
        security_check(QkdResult({"Z": None, "X": None}))


def test_keep_rate_is_one_half():
    t = joint_outcome_table(PairState(), AnalyzerSetting(), AnalyzerSetting()).probabilities
    sat = [0, 2]
    z = t[np.ix_(sat, [0, 1], sat, [0, 1])].sum()
    x = t[1, :, 1, :].sum()
    assert z + x == pytest.approx(0.5, abs=1e-15)


def ideal_qkd(alignment=1.0, darks=0.0, eff=1.0, single=True):
    det = DetectorParams(eff, darks)
    gdet = DetectorParams(eff, darks, gated=True)
    return ExperimentConfig(
        source=SourceParams(0.08, 75e6, single_pair=single),
        analyzer_a=AnalyzerSetting(0.0, alignment),
        analyzer_b=AnalyzerSetting(0.0, 1.0),
        detectors=Detectors(det, det, gdet, gdet),
        mode="qkd",
        trigger_window="cycle_all_three",
    )


def test_noiseless_qber_is_zero():
    run = qkd_experiment(ideal_qkd(), 40_000, seed=3)
    assert run.result["Z"].sifted + run.result["X"].sifted >= 10_000
    assert run.result["Z"].errors == 0 and run.result["X"].errors == 0
    assert run.sifted.keep_fraction == pytest.approx(0.5, abs=0.02)


def test_qber_monotone_in_misalignment():
    qz, qx = [], []
    for a in np.linspace(1.0, 0.5, 11):
        q = predicted_qber(ideal_qkd(alignment=a, darks=1e-3, eff=0.2, single=False))
        qz.append(q["Z"]["qber"])
        qx.append(q["X"]["qber"])
    assert np.all(np.diff(qx) >= 0) and qx[-1] > qx[0]
    assert qz[0] > 0.01 and max(qz) == min(qz)


def test_sifted_csv(tmp_path):
    path = tmp_path / "key.csv"
    write_sifted_csv(path, classify_and_sift([CoincidenceRecord(3, 0, 1, 2, -1)]))
    rows = list(csv.reader(path.open()))
    assert rows == [["pulse_index", "basis", "alice_bit", "bob_bit"], ["3", "Z", "0", "1"]]
