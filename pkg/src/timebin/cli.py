"""Command-line front end.

Subcommands ``scan``, ``chsh``, ``qkd``, ``budget`` and ``validate``.  Every
run writes a ``key: value`` report and a JSON manifest next to its CSV
output; ``--manifest`` replays a manifest into byte-identical files.

Exit codes: 0 ok, 2 config error, 3 runtime error, 4 validation failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__, analysis, experiments, montecarlo, qkd, validation
from .config import BUNDLED, RunOptions, bundled_path, emit_config, loads, read_config
from .errors import ConfigError
from .experiments import fmt
from .records import write_events_csv

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VALIDATION = 0, 2, 3, 4
COMMANDS = ("scan", "chsh", "qkd", "budget", "validate")

REFERENCE_BUDGET = {"multipair": 0.09, "accidental": 0.08, "misalignment": 0.05}
REFERENCE_QBER_BUDGET = {
    "Z": {"accidental": 0.08, "multipair": 0.045, "misalignment": 0.0},
    "X": {"accidental": 0.04, "multipair": 0.045, "misalignment": 0.02},
}
REFERENCE_QBER_MEASURED = {"Z": 0.128, "X": 0.105}


class ValidationFailure(RuntimeError):
    pass


def _pct(x: float, digits: int = 1) -> str:
    return "absent" if x is None or math.isnan(x) else f"{100 * x:.{digits}f}%"


def _report(lines) -> str:
    return "".join(f"{k}: {v}\n" for k, v in lines)


def _load(spec: str):
    path = bundled_path(spec) if spec in BUNDLED else Path(spec)
    return read_config(path)


# ---------------------------------------------------------------------------
# subcommands; each returns {filename: text} plus the report


def run_scan(config, opts: RunOptions):
    scan = experiments.bell_scan(config, opts.pulses, opts.seed, workers=opts.workers)
    fit = scan.fit
    lines = [
        ("command", "scan"),
        ("points", scan.betas.size),
        ("pulses_per_point", opts.pulses),
        ("alpha_rad", fmt(config.analyzer_a.phase)),
        ("min_coincidences_per_point", min(t.total for t in scan.tallies)),
        ("multi_click_drops", scan.multi_click_drops),
        ("V", fmt(fit.v)),
        ("V_sigma", fmt(fit.v_sigma)),
        ("V_at_bound", str(fit.at_bound).lower()),
        ("phase_offset_rad", fmt(fit.phase_offset)),
        ("E_offset", fmt(fit.mean_rate)),
        ("chi2", fmt(fit.residual_chi2)),
        ("dof", fit.dof),
        ("S_implied", fmt(scan.s_implied)),
        ("S_implied_sigma", fmt(scan.s_sigma)),
        ("V_predicted", fmt(montecarlo.predicted_visibility(config))),
    ]
    return {"scan.csv": scan}, lines


def run_chsh(config, opts: RunOptions):
    ch = experiments.chsh_experiment(config, opts.pulses, opts.seed, workers=opts.workers)
    r = ch.result
    lines = [("command", "chsh"), ("pulses_per_setting", opts.pulses)]
    for k, ((a, b), e) in enumerate(zip(ch.settings, r.estimates), start=1):
        lines += [(f"E{k}_alpha_rad", fmt(a)), (f"E{k}_beta_rad", fmt(b)), (f"E{k}", fmt(e.e_value)),
                  (f"E{k}_sigma", fmt(e.sigma)), (f"E{k}_coincidences", e.total)]
    lines += [("S", fmt(r.s_value)), ("S_sigma", fmt(r.s_sigma)), ("n_sigma_violation", fmt(r.n_sigma_violation)),
              ("violation", str(r.n_sigma_violation > 0).lower())]
    return {"chsh.csv": ch}, lines


def run_qkd(config, opts: RunOptions, events: bool = False):
    cfg = config.replace(mode="qkd", trigger_window="cycle_all_three")
    if events:
        sim = montecarlo.simulate(cfg, opts.pulses, opts.seed, record_events=True, workers=opts.workers, stream=(3,))
        sifted = qkd.classify_and_sift(sim.records)
        res = qkd.qber(sifted, opts.pulses, cfg.source.rep_rate_hz)
        run = experiments.QkdRun(sim, sifted, res, qkd.security_check(res) if res.populated else None)
    else:
        run = experiments.qkd_experiment(cfg, opts.pulses, opts.seed, workers=opts.workers)
    res = run.result
    lines = [("command", "qkd"), ("pulses", opts.pulses), ("live_time_s", fmt(res.live_time_s)),
             ("coincidences", run.simulation.records.size), ("basis_mismatch", run.sifted.basis_mismatch),
             ("malformed", run.sifted.malformed), ("keep_fraction", fmt(run.sifted.keep_fraction))]
    for basis in qkd.BASES:
        s = res[basis]
        if s is None:
            lines.append((f"QBER_{basis}", "absent"))
            continue
        lines += [(f"sifted_{basis}", s.sifted), (f"errors_{basis}", s.errors), (f"QBER_{basis}", fmt(s.qber)),
                  (f"QBER_{basis}_sigma", fmt(s.sigma)), (f"rate_{basis}_hz", fmt(s.rate_hz))]
    v = run.verdict
    if v is None:
        lines.append(("verdict", "absent"))
    else:
        lines.append(("verdict", "secure" if v.secure else "insecure"))
        lines.append(("threshold", fmt(v.threshold)))
        lines += [(f"margin_{b}", fmt(m)) for b, m in sorted(v.margins.items(), key=lambda kv: qkd.BASES.index(kv[0]))]
    files = {"sifted_key.csv": run}
    if events:
        files["events.csv"] = run.simulation.events
    return files, lines


def run_budget(config, args):
    fr = {"multipair": args.multipair, "accidental": args.accidental, "misalignment": args.misalignment}
    v = analysis.visibility_budget(**fr)
    lines = [("command", "budget"), ("budget_multipair", fmt(fr["multipair"])), ("budget_accidental", fmt(fr["accidental"])),
             ("budget_misalignment", fmt(fr["misalignment"])), ("V", f"{v:.3f}"), ("S", f"{analysis.s_from_visibility(v):.3f}")]
    for basis in qkd.BASES:
        q = qkd.qber_budget(basis=basis, **REFERENCE_QBER_BUDGET[basis])
        lines.append((f"QBER_{basis}", _pct(q)))
    gap = REFERENCE_QBER_MEASURED["Z"] - qkd.qber_budget(basis="Z", **REFERENCE_QBER_BUDGET["Z"])
    lines += [
        ("QBER_Z_measured", _pct(REFERENCE_QBER_MEASURED["Z"])),
        ("QBER_Z_gap", f"{100 * gap:.1f} points not attributed by the additive budget"),
        ("QBER_X_measured", _pct(REFERENCE_QBER_MEASURED["X"])),
    ]
    # closed-form predictions of the configured apparatus
    bell = config.replace(mode="bell_scan", trigger_window="central_only")
    q_cfg = config.replace(mode="qkd", trigger_window="cycle_all_three").with_phases(0.0, config.pump_phase)
    pv = montecarlo.predicted_visibility(bell)
    parts = montecarlo.coincidence_budget(bell)
    pq = montecarlo.predicted_qber(q_cfg)
    lines += [
        ("model_V", fmt(pv)),
        ("model_S", fmt(analysis.s_from_visibility(min(max(pv, 0.0), 1.0)))),
        ("model_true_fraction", fmt(parts["true"])),
        ("model_multipair_fraction", fmt(parts["multipair"])),
        ("model_accidental_fraction", fmt(parts["accidental"])),
        ("model_misalignment_factor", fmt(bell.analyzer_a.alignment_visibility * bell.analyzer_b.alignment_visibility * bell.drift_factor**2)),
        ("model_coincidence_rate_per_pair_hz", fmt(montecarlo.central_coincidence_rate_hz(bell) / 4)),
    ]
    for basis in qkd.BASES:
        lines += [(f"model_QBER_{basis}", fmt(pq[basis]["qber"])), (f"model_rate_{basis}_hz", fmt(pq[basis]["rate_hz"]))]
    return {}, lines


def run_validate():
    results = validation.run_all()
    lines = [("command", "validate")]
    for r in results:
        lines.append((r.name, f"{'pass' if r.passed else 'FAIL'} max_error={r.max_error:.3g} cases={r.cases}"))
    ok = all(r.passed for r in results)
    lines.append(("result", "pass" if ok else "fail"))
    return {}, lines, ok


# ---------------------------------------------------------------------------


def _write_outputs(out: Path, files: dict) -> list[str]:
    written = []
    for name, payload in files.items():
        path = out / name
        if name == "scan.csv":
            experiments.write_scan_csv(path, payload)
        elif name == "chsh.csv":
            experiments.write_tally_csv(path, payload.settings, payload.tallies)
        elif name == "sifted_key.csv":
            qkd.write_sifted_csv(path, payload.sifted)
        elif name == "events.csv":
            write_events_csv(path, payload)
        written.append(name)
    return written


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="paper_default", help=f"config file or bundled name {BUNDLED}")
    common.add_argument("--seed", type=int, help="master seed (default: run.seed)")
    common.add_argument("--pulses", type=int, help="pulses per scan point, per CHSH setting, or per QKD run")
    common.add_argument("--workers", type=int, help="worker processes; results do not depend on it")
    common.add_argument("--out", default=".", help="output directory")

    p = argparse.ArgumentParser(prog="timebin", description="Time-bin entanglement Bell test and QKD simulator.")
    p.add_argument("--version", action="version", version=f"timebin {__version__}")
    p.add_argument("--manifest", help="replay a run manifest")
    p.add_argument("--out-replay", dest="replay_out", help="output directory for --manifest (default: its own)")
    sub = p.add_subparsers(dest="command")
    sub.add_parser("scan", parents=[common], help="scan Bob's phase and fit the fringe visibility")
    sub.add_parser("chsh", parents=[common], help="four-setting CHSH measurement")
    q = sub.add_parser("qkd", parents=[common], help="BB84-type key distribution with sifting and QBER")
    q.add_argument("--events", action="store_true", help="also export the full event log")
    b = sub.add_parser("budget", parents=[common], help="analytic visibility, S and QBER predictions")
    for name, value in REFERENCE_BUDGET.items():
        b.add_argument(f"--{name}", type=float, default=value)
    sub.add_parser("validate", help="oracle-equivalence and normalization checks")
    return p


def _execute(command: str, config_text: str | None, config_src: str, opts: RunOptions, out: Path, args) -> int:
    if command == "validate":
        _, lines, ok = run_validate()
        sys.stdout.write(_report(lines))
        if not ok:
            raise ValidationFailure("oracle or normalization check failed")
        return EXIT_OK

    config, _ = loads(config_text, config_src)
    out.mkdir(parents=True, exist_ok=True)
    if command == "scan":
        files, lines = run_scan(config, opts)
    elif command == "chsh":
        files, lines = run_chsh(config, opts)
    elif command == "qkd":
        files, lines = run_qkd(config, opts, events=getattr(args, "events", False))
    else:
        files, lines = run_budget(config, args)

    written = _write_outputs(out, files)
    report = _report(lines)
    (out / f"{command}_report.txt").write_text(report, encoding="utf-8")
    written.append(f"{command}_report.txt")
    manifest = {
        "tool": "timebin",
        "version": __version__,
        "command": command,
        "mode": {"scan": "bell_scan", "chsh": "bell_chsh", "qkd": "qkd"}.get(command, config.mode),
        "seed": opts.seed,
        "n_pulses": opts.pulses,
        "workers": opts.workers,
        "options": {k: getattr(args, k) for k in ("events", *REFERENCE_BUDGET) if hasattr(args, k)},
        "config": config_text,
        "outputs": written,
    }
    (out / f"{command}_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    sys.stdout.write(report)
    return EXIT_OK


def _dispatch(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.manifest:
        try:
            m = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
            command, text = m["command"], m["config"]
            opts = RunOptions(int(m["seed"]), int(m["n_pulses"]), int(m.get("workers", 1)))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"unreadable manifest {args.manifest}: {exc}") from None
        replay = argparse.Namespace(**m.get("options", {}))
        out = Path(args.replay_out) if args.replay_out else Path(args.manifest).parent
        return _execute(command, text, args.manifest, opts, out, replay)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise ConfigError("no subcommand given")
    if args.command == "validate":
        return _execute("validate", None, "", RunOptions(), Path("."), args)

    config, file_opts = _load(args.config)
    opts = RunOptions(
        seed=file_opts.seed if args.seed is None else args.seed,
        pulses=file_opts.pulses if args.pulses is None else args.pulses,
        workers=file_opts.workers if args.workers is None else args.workers,
    )
    if opts.seed < 0 or opts.pulses < 1 or opts.workers < 1:
        raise ConfigError("--seed must be >= 0, --pulses and --workers >= 1")
    # the manifest stores the canonical text so a replay does not depend on the original file
    return _execute(args.command, emit_config(config, opts), args.config, opts, Path(args.out), args)


def main(argv=None) -> int:
    try:
        return _dispatch(argv)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationFailure as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (analysis.FitError, OverflowError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: runtime: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
