"""Amplitude-level model of the time-bin pair source and the two analyzers.

Outcomes are indexed by arrival slot (0 = left satellite, 1 = central,
2 = right satellite) and detector port (+1 / -1).  Arrays use the layout
``[slot_a, port_a, slot_b, port_b]`` with port index 0 for +1 and 1 for -1.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .photonics import db_to_transmittance

PORTS = (+1, -1)
SLOTS = (0, 1, 2)
TWO_PI = 2.0 * math.pi


def wrap_phase(x: float) -> float:
    """Reduce to [0, 2*pi); tiny negative inputs would otherwise round up to 2*pi."""
    r = float(x) % TWO_PI
    return 0.0 if r == TWO_PI else r


def port_index(port: int) -> int:
    if port == +1:
        return 0
    if port == -1:
        return 1
    raise ValueError(f"port must be +1 or -1, got {port!r}")


def _check_fraction(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0 or math.isnan(value):
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class PairState:
    """Two-photon time-bin state ``w0 |0>A|0>B - w1 exp(i*phi) |1>A|1>B``.

    ``phi`` is the pump-interferometer phase of the source as written above.
    The relative minus sign shifts the coincidence law, so the phase that
    enters ``1 + i*j*V*cos(alpha + beta - phi')`` is ``phi' = phi + pi``
    (:attr:`effective_phase`).
    """

    phi: float = 0.0
    weight_early: float = 1.0 / math.sqrt(2.0)
    weight_late: float = 1.0 / math.sqrt(2.0)

    def __post_init__(self):
        if self.weight_early < 0 or self.weight_late < 0:
            raise ValueError("amplitude weights must be non-negative")
        norm = self.weight_early**2 + self.weight_late**2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state is not normalised: |w0|^2 + |w1|^2 = {norm!r}")

    @classmethod
    def from_effective_phase(cls, phi_eff: float, **weights) -> "PairState":
        """State whose coincidence law has phase ``phi_eff``."""
        return cls(phi=wrap_phase(phi_eff - math.pi), **weights)

    @property
    def effective_phase(self) -> float:
        return wrap_phase(self.phi + math.pi)

    @property
    def amplitudes(self) -> tuple[complex, complex]:
        return complex(self.weight_early), -self.weight_late * np.exp(1j * self.phi)

    @property
    def coherence(self) -> float:
        """Interference contrast set by the state alone, ``2*w0*w1``."""
        return 2.0 * self.weight_early * self.weight_late


@dataclass(frozen=True)
class AnalyzerSetting:
    """Phase, static alignment factor and insertion loss of one analyzer."""

    phase: float = 0.0
    alignment_visibility: float = 1.0
    insertion_loss_db: float = 0.0

    def __post_init__(self):
        _check_fraction("alignment_visibility", self.alignment_visibility)
        if not self.insertion_loss_db >= 0:
            raise ValueError(f"insertion_loss_db must be >= 0, got {self.insertion_loss_db!r}")
        object.__setattr__(self, "phase", wrap_phase(self.phase))

    @property
    def transmittance(self) -> float:
        return db_to_transmittance(self.insertion_loss_db)


@dataclass(frozen=True)
class OutcomeTable:
    """Joint detection probabilities for one photon pair.

    ``probabilities[slot_a, port_a, slot_b, port_b]`` uses port index 0 for +1.
    ``loss_mass`` holds the probability that at least one photon is lost in
    an analyzer.
    """

    probabilities: np.ndarray = field(repr=False)
    loss_mass: float = 0.0

    def prob(self, slot_a: int, port_a: int, slot_b: int, port_b: int) -> float:
        return float(self.probabilities[slot_a, port_index(port_a), slot_b, port_index(port_b)])

    def total(self) -> float:
        return float(self.probabilities.sum()) + self.loss_mass

    def central_conditional(self) -> np.ndarray:
        """2x2 port-pair distribution given both photons in the central slot."""
        block = self.probabilities[1, :, 1, :]
        return block / block.sum()

    def alice_marginal(self) -> np.ndarray:
        """Alice's (slot, port) marginal, summed over Bob's outcomes."""
        return self.probabilities.sum(axis=(2, 3))

    def bob_marginal(self) -> np.ndarray:
        return self.probabilities.sum(axis=(0, 1))


def analyzer_transfer(input_bin: int, setting: AnalyzerSetting, port: int) -> dict[int, complex]:
    """Amplitudes for a photon in ``input_bin`` leaving through ``port``.

    The short arm keeps the photon in its input slot with amplitude 1/2; the
    long arm delays it by one slot and picks up ``port * exp(i*phase) / 2``.

    >>> analyzer_transfer(0, AnalyzerSetting(), +1)
    {0: (0.5+0j), 1: (0.5+0j)}
    """
    if input_bin not in (0, 1):
        raise ValueError(f"input_bin must be 0 or 1, got {input_bin!r}")
    sign = PORTS[port_index(port)]
    return {
        input_bin: complex(0.5),
        input_bin + 1: complex(sign * cmath.exp(1j * setting.phase) / 2.0),
    }


def _transfer_tensor(setting: AnalyzerSetting) -> np.ndarray:
    # m[bin, slot, port]
    m = np.zeros((2, 3, 2), dtype=complex)
    long_arm = np.exp(1j * setting.phase) / 2.0
    for b in (0, 1):
        m[b, b, :] = 0.5
        m[b, b + 1, :] = (long_arm, -long_arm)
    return m


def lossless_table(state: PairState, a: AnalyzerSetting, b: AnalyzerSetting) -> np.ndarray:
    """Outcome probabilities ignoring insertion loss, shape (3, 2, 3, 2)."""
    ma, mb = _transfer_tensor(a), _transfer_tensor(b)
    c_early, c_late = state.amplitudes
    early = c_early * np.einsum("sp,tq->sptq", ma[0], mb[0])
    late = c_late * np.einsum("sp,tq->sptq", ma[1], mb[1])
    coherent = np.abs(early + late) ** 2
    incoherent = np.abs(early) ** 2 + np.abs(late) ** 2
    v = a.alignment_visibility * b.alignment_visibility
    # Only central-central entries have two paths, so this scales exactly
    # the interference cross-term there and leaves every other entry alone.
    return incoherent + v * (coherent - incoherent)


def joint_outcome_table(state: PairState, a: AnalyzerSetting, b: AnalyzerSetting) -> OutcomeTable:
    """Joint outcome table for one pair, insertion loss included.

    >>> t = joint_outcome_table(PairState(), AnalyzerSetting(), AnalyzerSetting())
    >>> round(t.prob(1, +1, 1, +1), 12), t.prob(0, +1, 2, +1)
    (0.0, 0.0)
    """
    transmit = a.transmittance * b.transmittance
    probs = lossless_table(state, a, b) * transmit
    probs.setflags(write=False)
    return OutcomeTable(probs, loss_mass=1.0 - transmit)


def central_coincidence_prob(i: int, j: int, alpha: float, beta: float, phi: float, v: float) -> float:
    """Probability of ports (i, j) given both photons hit the central slot."""
    _check_fraction("v", v)
    return (1.0 + i * j * v * math.cos(alpha + beta - phi)) / 4.0


def expected_E(alpha: float, beta: float, v: float) -> float:
    """Correlation coefficient ``v*cos(alpha + beta)`` with the pump phase at zero."""
    _check_fraction("v", v)
    return v * math.cos(alpha + beta)
