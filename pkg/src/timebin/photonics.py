"""Stochastic component models: pair source, fiber links and detectors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def db_to_transmittance(loss_db):
    t = np.power(10.0, -np.asarray(loss_db, dtype=float) / 10.0)
    return float(t) if t.ndim == 0 else t


@dataclass(frozen=True)
class SourceParams:
    """Pulsed SPDC source.

    ``mean_pairs_per_pulse`` is the Poisson mean of the pair number.  With
    ``single_pair`` set, every pulse carries exactly one pair (a test mode
    that switches multi-pair emission off).
    """

    mean_pairs_per_pulse: float = 0.08
    rep_rate_hz: float = 75e6
    single_pair: bool = False

    def __post_init__(self):
        if not self.mean_pairs_per_pulse >= 0 or math.isinf(self.mean_pairs_per_pulse):
            raise ValueError(f"mean_pairs_per_pulse must be a finite value >= 0, got {self.mean_pairs_per_pulse!r}")
        if not self.rep_rate_hz > 0 or math.isinf(self.rep_rate_hz):
            raise ValueError(f"rep_rate_hz must be > 0, got {self.rep_rate_hz!r}")


@dataclass(frozen=True)
class ChannelParams:
    length_km: float = 0.0
    attenuation_db_per_km: float = 0.0
    extra_loss_db: float = 0.0

    def __post_init__(self):
        for name in ("length_km", "attenuation_db_per_km", "extra_loss_db"):
            value = getattr(self, name)
            if not value >= 0 or math.isinf(value):
                raise ValueError(f"{name} must be a finite value >= 0, got {value!r}")

    @property
    def loss_db(self) -> float:
        return self.length_km * self.attenuation_db_per_km + self.extra_loss_db


@dataclass(frozen=True)
class DetectorParams:
    """Threshold single-photon detector.

    ``dark_prob_per_gate`` is the dark-click probability inside one time
    slot of ``gate_width_ns``.  Gated detectors (Bob's InGaAs APDs) are only
    armed when Alice's trigger opens them; free-running detectors (Alice's
    Ge APDs) are selected by the coincidence electronics instead.
    """

    efficiency: float = 0.1
    dark_prob_per_gate: float = 0.0
    gate_width_ns: float = 1.2
    gated: bool = False

    def __post_init__(self):
        for name in ("efficiency", "dark_prob_per_gate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
        if not self.gate_width_ns > 0:
            raise ValueError(f"gate_width_ns must be > 0, got {self.gate_width_ns!r}")

    @classmethod
    def from_dark_rate_hz(cls, efficiency: float, rate_hz: float, gate_width_ns: float = 1.2, gated: bool = False):
        """Free-running detector with ``rate_hz`` dark counts, seen through one slot."""
        return cls(efficiency, min(1.0, rate_hz * gate_width_ns * 1e-9), gate_width_ns, gated)

    @classmethod
    def from_dark_prob_per_ns(cls, efficiency: float, per_ns: float, gate_width_ns: float = 1.2, gated: bool = True):
        return cls(efficiency, per_ns * gate_width_ns, gate_width_ns, gated)


def sample_pair_count(source: SourceParams, rng: np.random.Generator, size=None):
    """Number of pairs emitted in a pulse (Poisson, or exactly one in single-pair mode).

    Pairs inside one pulse carry no mutual phase coherence; the engine
    treats coincidences across different pairs as accidentals.
    """
    if source.single_pair:
        return 1 if size is None else np.ones(size, dtype=np.int64)
    return rng.poisson(source.mean_pairs_per_pulse, size=size)


def channel_transmittance(ch: ChannelParams) -> float:
    """Linear transmittance of a fiber link.

    >>> channel_transmittance(ChannelParams(25.3, 0.35, 0.0))  # doctest: +ELLIPSIS
    0.1301...
    """
    return db_to_transmittance(ch.loss_db)


def detect(det: DetectorParams, photon_incident: bool, rng: np.random.Generator) -> tuple[bool, str | None]:
    """One gate of a threshold detector.

    Returns ``(clicked, origin)`` with origin ``"photon"``, ``"dark"`` or
    ``None``.  A photon click takes precedence when a dark count fires in
    the same gate.
    """
    photon = bool(photon_incident) and rng.random() < det.efficiency
    dark = rng.random() < det.dark_prob_per_gate
    if photon:
        return True, "photon"
    if dark:
        return True, "dark"
    return False, None


def detect_many(det: DetectorParams, photon_incident: np.ndarray, rng: np.random.Generator):
    """Vectorised :func:`detect`; returns ``(clicked, from_photon)`` boolean arrays."""
    incident = np.asarray(photon_incident, dtype=bool)
    photon = incident & (rng.random(incident.shape) < det.efficiency)
    dark = rng.random(incident.shape) < det.dark_prob_per_gate
    return photon | dark, photon
