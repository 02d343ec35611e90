import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timebin import cli, validation
from timebin.config import ConfigError, ConfigParseError, bundled_path, emit_config, loads, parse_config, read_config
from timebin.montecarlo import Detectors, ExperimentConfig
from timebin.photonics import ChannelParams, DetectorParams, SourceParams
from timebin.quantum import AnalyzerSetting


def report(path):
    return dict(line.split(": ", 1) for line in path.read_text().splitlines())


def test_bundled_paper_default():
    cfg, opts = read_config(bundled_path("paper_default"))
    assert cfg.source.mean_pairs_per_pulse == 0.08
    assert cfg.source.rep_rate_hz == 75e6
    assert cfg.channel_a.length_km == cfg.channel_b.length_km == 25.3
    assert cfg.detectors.a_plus.gate_width_ns == 1.2
    assert cfg.detectors.b_plus.dark_prob_per_gate == pytest.approx(1.2e-4)
    assert cfg.detectors.b_minus.dark_prob_per_gate == pytest.approx(2.4e-4)
    assert cfg.mode == "bell_scan" and cfg.trigger_window == "central_only"
    assert opts.seed == 1
    improved = parse_config(bundled_path("paper_improved"))
    assert improved.detectors.b_minus.dark_prob_per_gate == pytest.approx(1.2e-4)


def test_bundled_files_are_canonical():
    for name in ("paper_default", "paper_improved", "ideal"):
        cfg, opts = read_config(bundled_path(name))
        assert loads(emit_config(cfg, opts)) == (cfg, opts)


def text_with(old, new):
    text = bundled_path("paper_default").read_text()
    assert old in text
    return text.replace(old, new)


def test_out_of_range_names_key():
    with pytest.raises(ConfigError, match=r"detectors\.a_plus\.efficiency"):
        loads(text_with("a_plus.efficiency = 0.1", "a_plus.efficiency = 1.3"))


def test_empty_file_is_parse_error(tmp_path):
    p = tmp_path / "empty.cfg"
    p.write_text("")
    with pytest.raises(ConfigParseError):
        read_config(p)


def test_unknown_key_reports_line():
    text = text_with("rep_rate_hz = 75000000.0", "rep_rate_hz = 75000000.0\nrep_rate_mhz = 75")
    line = text.splitlines().index("rep_rate_mhz = 75") + 1
    with pytest.raises(ConfigParseError, match="rep_rate_mhz") as info:
        loads(text)
    assert info.value.line == line


def test_missing_section_and_bad_value():
    with pytest.raises(ConfigError, match="schedule"):
        loads(text_with("[schedule]", "[schedulex]"))
    with pytest.raises(ConfigError):
        loads(text_with("mean_pairs_per_pulse = 0.08", "mean_pairs_per_pulse = lots"))
    with pytest.raises(ConfigError):
        read_config("/nonexistent/none.cfg")


unit = st.floats(0, 1)
det = st.builds(DetectorParams, unit, unit, st.floats(0.1, 10), st.booleans())


@settings(max_examples=40, deadline=None)
@given(
    st.builds(SourceParams, st.floats(0, 2), st.floats(1, 1e9), st.booleans()),
    st.builds(ChannelParams, st.floats(0, 100), st.floats(0, 1), st.floats(0, 30)),
    st.builds(AnalyzerSetting, st.floats(-7, 7), unit, st.floats(0, 5)),
    st.builds(Detectors, det, det, det, det),
    st.floats(-7, 7),
)
def test_emit_parse_round_trip(source, channel, analyzer, detectors, phase):
    cfg = ExperimentConfig(source=source, channel_a=channel, analyzer_b=analyzer, detectors=detectors, pump_phase=phase)
    parsed, _ = loads(emit_config(cfg))
    assert parsed == cfg


def test_cli_budget(tmp_path, capsys):
    assert cli.main(["budget", "--out", str(tmp_path)]) == 0
    r = report(tmp_path / "budget_report.txt")
    assert r["V"] == "0.780" and r["S"] == "2.206"
    assert r["QBER_Z"] == "12.5%" and r["QBER_X"] == "10.5%"
    assert r["QBER_Z_measured"] == "12.8%"
    assert r["QBER_Z_gap"].startswith("0.3 points")
    assert "V: 0.780" in capsys.readouterr().out


def test_cli_chsh_ideal(tmp_path):
    assert cli.main(["chsh", "--config", "ideal", "--pulses", "1000000", "--out", str(tmp_path)]) == 0
    r = report(tmp_path / "chsh_report.txt")
    assert abs(float(r["S"]) - 2 * math.sqrt(2)) < 3 * max(float(r["S_sigma"]), 1e-3)
    assert (tmp_path / "chsh.csv").exists()


def test_cli_scan_paper(tmp_path):
    assert cli.main(["scan", "--pulses", "10000000000", "--out", str(tmp_path)]) == 0
    r = report(tmp_path / "scan_report.txt")
    assert abs(float(r["V"]) - 0.78) < 3 * float(r["V_sigma"])
    assert len((tmp_path / "scan.csv").read_text().splitlines()) == 25


def test_manifest_replay_is_byte_identical(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert cli.main(["qkd", "--config", "ideal", "--pulses", "20000", "--seed", "5", "--events", "--out", str(first)]) == 0
    manifest = first / "qkd_manifest.json"
    assert json.loads(manifest.read_text())["seed"] == 5
    assert cli.main(["--manifest", str(manifest), "--out-replay", str(second)]) == 0
    for name in ("qkd_report.txt", "sifted_key.csv", "events.csv", "qkd_manifest.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_exit_codes(tmp_path, capsys, monkeypatch):
    bad = tmp_path / "bad.cfg"
    bad.write_text(text_with("a_plus.efficiency = 0.1", "a_plus.efficiency = 1.3"))
    assert cli.main(["scan", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "error: config:" in capsys.readouterr().err
    assert cli.main(["scan", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert cli.main(["qkd", "--config", "ideal", "--pulses", str(2**62), "--out", str(tmp_path)]) == 3
    assert "error: runtime:" in capsys.readouterr().err
    failing = [validation.CheckResult("broken", False, 1.0, 1, 0.0)]
    monkeypatch.setattr(validation, "run_all", lambda: failing)
    assert cli.main(["validate"]) == 4
    assert "error: validation:" in capsys.readouterr().err


def test_cli_validate(capsys):
    assert cli.main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "result: pass" in out and "oracle_equivalence: pass" in out
