"""Entanglement-based BB84-type key distribution on time-bin coincidences.

Satellite peaks form the Z basis (bit 0 early, bit 1 late) and the central
peak the X basis (bit 0 on port +1, bit 1 on port -1).  Records with one
photon in a satellite and the other in the central peak are basis
mismatches and are discarded during sifting.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .records import RECORD_DTYPE, records_to_array

BASES = ("Z", "X")
SECURITY_THRESHOLD = 0.15

SIFTED_DTYPE = np.dtype(
    [("pulse_index", np.int64), ("basis", "U1"), ("alice_bit", np.int8), ("bob_bit", np.int8)]
)


class SiftedBit(NamedTuple):
    pulse_index: int
    basis: str
    alice_bit: int
    bob_bit: int


@dataclass
class SiftResult:
    """Sifted bits plus the discard counters of one sifting pass."""

    bits: np.ndarray
    basis_mismatch: int = 0
    malformed: int = 0

    @property
    def kept(self) -> int:
        return int(self.bits.size)

    @property
    def keep_fraction(self) -> float:
        seen = self.kept + self.basis_mismatch
        return self.kept / seen if seen else math.nan

    def __iter__(self):
        for row in self.bits:
            yield SiftedBit(int(row["pulse_index"]), str(row["basis"]), int(row["alice_bit"]), int(row["bob_bit"]))


@dataclass(frozen=True)
class BasisStats:
    sifted: int
    errors: int
    qber: float
    sigma: float
    rate_hz: float


@dataclass
class QkdResult:
    """Per-basis QBER statistics; a basis with no sifted bits maps to ``None``."""

    bases: dict = field(default_factory=dict)
    live_time_s: float = 0.0

    def __getitem__(self, basis: str) -> BasisStats | None:
        return self.bases.get(basis)

    @property
    def populated(self) -> dict:
        return {b: s for b, s in self.bases.items() if s is not None}


@dataclass(frozen=True)
class SecurityVerdict:
    secure: bool
    threshold: float
    margins: dict


def classify_and_sift(records) -> SiftResult:
    """Assign each coincidence record to a basis and extract the raw key bits.

    >>> from timebin.records import CoincidenceRecord
    >>> r = classify_and_sift([CoincidenceRecord(3, 0, 1, 2, -1), CoincidenceRecord(4, 0, 1, 1, 1)])
    >>> [tuple(b) for b in r], r.basis_mismatch
    ([(3, 'Z', 0, 1)], 1)
    """
    rec = records_to_array(records) if not isinstance(records, np.ndarray) else records
    if rec.size == 0:
        return SiftResult(np.zeros(0, dtype=SIFTED_DTYPE))
    rec = rec.astype(RECORD_DTYPE, copy=False)
    sa, sb = rec["slot_a"].astype(int), rec["slot_b"].astype(int)
    pa, pb = rec["port_a"].astype(int), rec["port_b"].astype(int)
    valid = np.isin(sa, (0, 1, 2)) & np.isin(sb, (0, 1, 2)) & np.isin(pa, (1, -1)) & np.isin(pb, (1, -1))
    z = valid & (sa != 1) & (sb != 1)
    x = valid & (sa == 1) & (sb == 1)
    keep = z | x

    bits = np.zeros(int(keep.sum()), dtype=SIFTED_DTYPE)
    bits["pulse_index"] = rec["pulse_index"][keep]
    bits["basis"] = np.where(z[keep], "Z", "X")
    bits["alice_bit"] = np.where(z, sa == 2, pa == -1)[keep]
    bits["bob_bit"] = np.where(z, sb == 2, pb == -1)[keep]
    return SiftResult(bits, int(np.count_nonzero(valid & ~keep)), int(np.count_nonzero(~valid)))


def qber(sifted, n_pulses: int = 0, rep_rate_hz: float = 0.0) -> QkdResult:
    """Per-basis error fraction with binomial sigma ``sqrt(q(1-q)/N)``.

    Rates are sifted bits per second of live time ``n_pulses / rep_rate_hz``;
    they are NaN when no live time is given.
    """
    bits = sifted.bits if isinstance(sifted, SiftResult) else sifted
    if not isinstance(bits, np.ndarray):
        bits = np.array([tuple(b) for b in bits], dtype=SIFTED_DTYPE)
    live = n_pulses / rep_rate_hz if n_pulses > 0 and rep_rate_hz > 0 else 0.0
    out = {}
    for basis in BASES:
        sel = bits[bits["basis"] == basis] if bits.size else bits
        n = int(sel.size)
        if n == 0:
            out[basis] = None
            continue
        errors = int(np.count_nonzero(sel["alice_bit"] != sel["bob_bit"]))
        q = errors / n
        out[basis] = BasisStats(n, errors, q, math.sqrt(q * (1.0 - q) / n), n / live if live else math.nan)
    return QkdResult(out, live)


def qber_budget(accidental: float, multipair: float, misalignment: float, basis: str) -> float:
    """First-order QBER: misalignment only enters the X basis.

    >>> round(qber_budget(0.04, 0.045, 0.02, "X"), 12)
    0.105
    """
    if basis not in BASES:
        raise ValueError(f"basis must be 'Z' or 'X', got {basis!r}")
    for name, value in (("accidental", accidental), ("multipair", multipair), ("misalignment", misalignment)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    parts = (accidental, multipair) if basis == "Z" else (accidental, multipair, misalignment)
    return math.fsum(parts)


def security_check(result, threshold: float = SECURITY_THRESHOLD) -> SecurityVerdict:
    """Secure iff every populated basis has QBER strictly below ``threshold``.

    ``result`` is a :class:`QkdResult` or a mapping from basis to QBER.
    Margins are ``threshold - qber`` per populated basis.
    """
    if isinstance(result, QkdResult):
        values = {b: s.qber for b, s in result.populated.items()}
    else:
        values = {b: q for b, q in dict(result).items() if q is not None}
    if not values:
        raise ValueError("security check needs at least one populated basis")
    margins = {b: threshold - q for b, q in values.items()}
    return SecurityVerdict(all(q < threshold for q in values.values()), threshold, margins)


def write_sifted_csv(path, sifted) -> None:
    bits = sifted.bits if isinstance(sifted, SiftResult) else sifted
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SIFTED_DTYPE.names)
        for row in bits:
            w.writerow((int(row["pulse_index"]), str(row["basis"]), int(row["alice_bit"]), int(row["bob_bit"])))
