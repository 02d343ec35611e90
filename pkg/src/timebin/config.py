"""Sectioned ``key = value`` configuration files.

Sections: ``source``, ``channel_a``, ``channel_b``, ``analyzer_a``,
``analyzer_b``, ``detectors`` (keys ``a_plus.efficiency`` and so on),
``schedule`` and ``run``.  Every section must be present; keys left out take
their defaults.  Unknown keys are errors.  ``#`` starts a comment.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .montecarlo import DETECTOR_NAMES, Detectors, ExperimentConfig
from .photonics import ChannelParams, DetectorParams, SourceParams
from .quantum import AnalyzerSetting
from .stabilization import DriftModel, Schedule

SECTIONS = ("source", "channel_a", "channel_b", "analyzer_a", "analyzer_b", "detectors", "schedule", "run")
BUNDLED = ("paper_default", "paper_improved", "ideal")

_SCHEDULE_KEYS = {
    "measure_s": ("schedule", "measure_s"),
    "lock_s": ("schedule", "lock_s"),
    "drift_diffusion": ("drift", "diffusion"),
    "lock_residual_sigma": ("drift", "lock_residual_sigma"),
}
_RUN_FIELDS = ("mode", "trigger_window", "pump_phase", "scan_points", "chsh_alpha", "chsh_alpha_prime", "chsh_beta", "chsh_beta_prime")
_RUN_OPTIONS = ("seed", "pulses", "workers")


@dataclass(frozen=True)
class RunOptions:
    """Defaults for the command line, read from the ``run`` section."""

    seed: int = 1
    pulses: int = 10**9
    workers: int = 1


class ConfigParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None, path=None):
        where = f"{path}:" if path else ""
        where += f"{line}: " if line is not None else (" " if where else "")
        super().__init__(f"{where}{message}")
        self.line = line


def bundled_path(name: str) -> Path:
    if name not in BUNDLED:
        raise ConfigError(f"no bundled config named {name!r}; choose from {BUNDLED}")
    return Path(str(resources.files("timebin") / "data" / f"{name}.cfg"))


def _locate(lines: list[str], section: str, key: str | None = None) -> int | None:
    current = None
    for no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if key is None and current == section:
                return no
        elif current == section and key is not None and "=" in line:
            if line.split("=", 1)[0].strip().lower() == key:
                return no
    return None


def _to_float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("NaN is not allowed")
    return value


def _to_int(text: str) -> int:
    return int(text.replace("_", ""), 10)


def _to_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _converter(default):
    if isinstance(default, bool):
        return _to_bool
    if isinstance(default, int):
        return _to_int
    if isinstance(default, float):
        return _to_float
    return str


class _Reader:
    def __init__(self, text: str, path):
        self.path = path
        self.lines = text.splitlines()
        self.parser = configparser.ConfigParser(
            interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=("#",), empty_lines_in_values=False
        )
        try:
            self.parser.read_string(text, source=str(path))
        except configparser.MissingSectionHeaderError as exc:
            raise ConfigParseError("expected a [section] header", exc.lineno, path) from None
        except configparser.DuplicateSectionError as exc:
            raise ConfigParseError(f"duplicate section [{exc.section}]", exc.lineno, path) from None
        except configparser.DuplicateOptionError as exc:
            raise ConfigParseError(f"duplicate key {exc.section}.{exc.option}", exc.lineno, path) from None
        except configparser.ParsingError as exc:
            lineno, line = exc.errors[0]
            raise ConfigParseError(f"cannot parse line {line.strip()!r}", lineno, path) from None
        sections = self.parser.sections()
        if not sections:
            raise ConfigParseError("configuration is empty", 1 if self.lines else None, path)
        for name in sections:
            if name not in SECTIONS:
                raise ConfigParseError(f"unknown section [{name}]", _locate(self.lines, name), path)
        missing = [s for s in SECTIONS if s not in sections]
        if missing:
            raise ConfigParseError(f"missing section(s): {', '.join(missing)}", None, path)

    def fail(self, section: str, key: str, message: str):
        raise ConfigParseError(message, _locate(self.lines, section, key), self.path)

    def check_keys(self, section: str, allowed) -> None:
        for key in self.parser[section]:
            if key not in allowed:
                self.fail(section, key, f"unknown key {section}.{key}")

    def value(self, section: str, key: str, default):
        if key not in self.parser[section]:
            return default
        text = self.parser[section][key]
        try:
            return _converter(default)(text)
        except ValueError as exc:
            self.fail(section, key, f"{section}.{key}: invalid value {text!r} ({exc})")

    def build(self, cls, section: str, prefix: str | None = None, defaults=None):
        """Instantiate ``cls`` from keys ``prefix.field`` of ``section``; errors name the field."""
        defaults = cls() if defaults is None else defaults
        kwargs = {}
        for f in dataclasses.fields(cls):
            key = f"{prefix}.{f.name}" if prefix else f.name
            kwargs[f.name] = self.value(section, key, getattr(defaults, f.name))
        label = f"{section}.{prefix}" if prefix else section
        return _construct(cls, kwargs, label)


def _construct(cls, kwargs, label):
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{label}.{exc}") from None


def read_config(path) -> tuple[ExperimentConfig, RunOptions]:
    """Parse a config file into an :class:`ExperimentConfig` plus run defaults."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return loads(text, path)


def parse_config(path) -> ExperimentConfig:
    return read_config(path)[0]


def loads(text: str, path="<string>") -> tuple[ExperimentConfig, RunOptions]:
    r = _Reader(text, path)
    simple = {
        "source": SourceParams,
        "channel_a": ChannelParams,
        "channel_b": ChannelParams,
        "analyzer_a": AnalyzerSetting,
        "analyzer_b": AnalyzerSetting,
    }
    for section, cls in simple.items():
        r.check_keys(section, [f.name for f in dataclasses.fields(cls)])
    det_fields = [f.name for f in dataclasses.fields(DetectorParams)]
    r.check_keys("detectors", [f"{d}.{f}" for d in DETECTOR_NAMES for f in det_fields])
    r.check_keys("schedule", _SCHEDULE_KEYS)
    r.check_keys("run", _RUN_FIELDS + _RUN_OPTIONS)

    parts = {section: r.build(cls, section) for section, cls in simple.items()}
    detectors = Detectors(**{d: r.build(DetectorParams, "detectors", d, getattr(Detectors(), d)) for d in DETECTOR_NAMES})

    sched_kw = {"schedule": {}, "drift": {}}
    for key, (target, name) in _SCHEDULE_KEYS.items():
        cls = Schedule if target == "schedule" else DriftModel
        default = next(f.default for f in dataclasses.fields(cls) if f.name == name)
        sched_kw[target][name] = r.value("schedule", key, default)
    schedule = _construct(Schedule, sched_kw["schedule"], "schedule")
    try:
        drift = DriftModel(**sched_kw["drift"])
    except ValueError as exc:
        raise ConfigError(f"schedule.{exc}") from None

    run_defaults = {f.name: f.default for f in dataclasses.fields(ExperimentConfig)}
    run_kw = {name: r.value("run", name, run_defaults[name]) for name in _RUN_FIELDS}
    opt_defaults = RunOptions()
    options = RunOptions(**{name: r.value("run", name, getattr(opt_defaults, name)) for name in _RUN_OPTIONS})
    if options.seed < 0 or options.pulses < 1 or options.workers < 1:
        raise ConfigError("run.seed must be >= 0, run.pulses and run.workers >= 1")

    config = ExperimentConfig(
        detectors=detectors, drift=drift, schedule=schedule, **parts, **run_kw
    )
    return config, options


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_config(config: ExperimentConfig, options: RunOptions | None = None, header: str = "") -> str:
    """Serialise a config; ``loads(emit_config(c))[0] == c`` for every valid config."""
    out = []
    if header:
        out.extend(f"# {line}".rstrip() for line in header.splitlines())
        out.append("")

    def section(name, pairs):
        out.append(f"[{name}]")
        out.extend(f"{k} = {_fmt(v)}" for k, v in pairs)
        out.append("")

    for name in ("source", "channel_a", "channel_b", "analyzer_a", "analyzer_b"):
        obj = getattr(config, name)
        section(name, [(f.name, getattr(obj, f.name)) for f in dataclasses.fields(obj)])
    section(
        "detectors",
        [
            (f"{d}.{f.name}", getattr(getattr(config.detectors, d), f.name))
            for d in DETECTOR_NAMES
            for f in dataclasses.fields(DetectorParams)
        ],
    )
    section(
        "schedule",
        [(key, getattr(getattr(config, target), name)) for key, (target, name) in _SCHEDULE_KEYS.items()],
    )
    run = [(name, getattr(config, name)) for name in _RUN_FIELDS]
    if options is not None:
        run += [(name, getattr(options, name)) for name in _RUN_OPTIONS]
    section("run", run)
    return "\n".join(out)
