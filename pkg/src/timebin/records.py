"""Event, coincidence and tally containers shared by the engine and the estimators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

SIDE_A, SIDE_B = 0, 1
ORIGIN_PHOTON, ORIGIN_DARK = 0, 1

EVENT_DTYPE = np.dtype(
    [("pulse_index", np.int64), ("side", np.int8), ("port", np.int8), ("slot", np.int8), ("origin", np.int8)]
)
RECORD_DTYPE = np.dtype(
    [
        ("pulse_index", np.int64),
        ("slot_a", np.int8),
        ("port_a", np.int8),
        ("slot_b", np.int8),
        ("port_b", np.int8),
    ]
)


class DetectionEvent(NamedTuple):
    """One detector click.  ``side`` is ``"A"`` or ``"B"``, ``origin`` ``"photon"`` or ``"dark"``."""

    pulse_index: int
    side: str
    port: int
    slot: int
    origin: str = "photon"


class CoincidenceRecord(NamedTuple):
    pulse_index: int
    slot_a: int
    port_a: int
    slot_b: int
    port_b: int


def events_to_array(events) -> np.ndarray:
    """Pack an iterable of :class:`DetectionEvent` into an ``EVENT_DTYPE`` array."""
    if isinstance(events, np.ndarray):
        return events.astype(EVENT_DTYPE, copy=False)
    rows = []
    for ev in events:
        if ev.side not in ("A", "B"):
            raise ValueError(f"side must be 'A' or 'B', got {ev.side!r}")
        if ev.slot not in (0, 1, 2):
            raise ValueError(f"slot must be 0, 1 or 2, got {ev.slot!r}")
        if ev.port not in (1, -1):
            raise ValueError(f"port must be +1 or -1, got {ev.port!r}")
        if ev.origin not in ("photon", "dark"):
            raise ValueError(f"origin must be 'photon' or 'dark', got {ev.origin!r}")
        rows.append(
            (
                ev.pulse_index,
                SIDE_A if ev.side == "A" else SIDE_B,
                ev.port,
                ev.slot,
                ORIGIN_PHOTON if ev.origin == "photon" else ORIGIN_DARK,
            )
        )
    return np.array(rows, dtype=EVENT_DTYPE)


def iter_events(events: np.ndarray):
    for row in events:
        yield DetectionEvent(
            int(row["pulse_index"]),
            "A" if row["side"] == SIDE_A else "B",
            int(row["port"]),
            int(row["slot"]),
            "photon" if row["origin"] == ORIGIN_PHOTON else "dark",
        )


def iter_records(records: np.ndarray):
    for row in records:
        yield CoincidenceRecord(*(int(row[name]) for name in RECORD_DTYPE.names))


def records_to_array(records) -> np.ndarray:
    if isinstance(records, np.ndarray):
        return records.astype(RECORD_DTYPE, copy=False)
    return np.array([tuple(r) for r in records], dtype=RECORD_DTYPE)


@dataclass
class TallyMatrix:
    """Central-central coincidence counts ``counts[i, j]`` with index 0 for port +1.

    ``alpha`` and ``beta`` label the analyzer setting; ``live_pulses`` is
    the number of pump pulses the counts were accumulated over.
    """

    counts: np.ndarray = field(default_factory=lambda: np.zeros((2, 2), dtype=np.int64))
    alpha: float = 0.0
    beta: float = 0.0
    live_pulses: int = 0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(2, 2)
        if np.any(self.counts < 0):
            raise ValueError("tally counts must be non-negative")

    @classmethod
    def from_counts(cls, n_pp: int, n_pm: int, n_mp: int, n_mm: int, **labels) -> "TallyMatrix":
        return cls(np.array([[n_pp, n_pm], [n_mp, n_mm]]), **labels)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def n(self, i: int, j: int) -> int:
        return int(self.counts[0 if i == 1 else 1, 0 if j == 1 else 1])

    def merge(self, other: "TallyMatrix") -> "TallyMatrix":
        return TallyMatrix(self.counts + other.counts, self.alpha, self.beta, self.live_pulses + other.live_pulses)

    __add__ = merge


EVENT_COLUMNS = ("pulse_index", "side", "port", "slot", "origin")


def write_events_csv(path, events: np.ndarray) -> None:
    """Event log, one click per line, sorted as produced by the engine."""
    side = np.where(events["side"] == SIDE_A, "A", "B")
    origin = np.where(events["origin"] == ORIGIN_PHOTON, "photon", "dark")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(EVENT_COLUMNS) + "\n")
        for k in range(events.size):
            fh.write(f"{events['pulse_index'][k]},{side[k]},{events['port'][k]},{events['slot'][k]},{origin[k]}\n")
