"""Secular spin model of the NV center's intrinsic nitrogen nucleus.

The nuclear sublevels inside one electronic manifold follow

    E(m_I; m_S) = (Q + dQ) m_I^2 + m_S (A + dA) m_I + gamma_n B m_I

with the quadrupole coupling Q, the secular hyperfine coupling A, and the
nuclear Zeeman term.  All couplings are angular frequencies (rad/s) and
carry their physical signs; observable transition frequencies are energy
differences, taken by magnitude.  Phase accumulated on a superposition of
two m_I levels is minus the time integral of their energy difference, so a
pulse sequence is just a list of (duration, m_S, environment shift)
segments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .response import InteractionShift
from .units import angular

_PROJECTIONS = (-1, 0, 1)

SINGLE_QUANTUM_PAIRS = ((0, +1), (0, -1))
DOUBLE_QUANTUM_PAIR = (-1, +1)

# The six single-quantum lines, ordered by electron manifold (0, -1, +1)
# and nuclear branch; this indexing matches the pairwise combinations
# (w1 + w2)/2 = |Q| and (w4 + w5 - w3 - w6)/4 = |A| used for extraction.
SINGLE_QUANTUM_LINES = (
    (1, (0, +1), 0),
    (2, (0, -1), 0),
    (3, (0, +1), -1),
    (4, (0, -1), -1),
    (5, (0, +1), +1),
    (6, (0, -1), +1),
)

_NO_SHIFT = InteractionShift()


@dataclass(frozen=True)
class SpinSystemParams:
    """Static couplings of the electron-nuclear system, rad/s and gauss."""

    zfs: float = angular(2.87e9)
    quadrupole: float = angular(-4.945e6)
    hyperfine: float = angular(-2.16e6)
    gamma_e: float = angular(2.8025e6)  # rad/s per G
    gamma_n: float = angular(-307.7)    # rad/s per G
    field_gauss: float = 239.0

    def __post_init__(self):
        if self.zfs <= 0:
            raise ValueError("zero-field splitting must be positive")
        if self.quadrupole == 0:
            raise ValueError("quadrupole coupling must be nonzero")
        if abs(self.hyperfine) >= abs(self.quadrupole):
            raise ValueError(
                "secular model assumes |hyperfine| < |quadrupole|; "
                "level ordering would change otherwise"
            )
        if self.field_gauss < 0:
            raise ValueError("field must be >= 0 G")
        if abs(self.gamma_n * self.field_gauss) >= abs(self.quadrupole):
            raise ValueError(
                "nuclear Zeeman exceeds |quadrupole|; secular labeling breaks down"
            )

    @property
    def nuclear_zeeman(self) -> float:
        """gamma_n * B, rad/s (signed)."""
        return self.gamma_n * self.field_gauss


def default_params() -> SpinSystemParams:
    return SpinSystemParams()


def _check_projection(m, name):
    if m not in _PROJECTIONS:
        raise ValueError(f"{name} must be one of -1, 0, +1, got {m}")


def level_energy(params: SpinSystemParams, m_I: int, m_S: int,
                 shift: InteractionShift | None = None) -> float:
    """Nuclear sublevel energy within the m_S manifold, rad/s.

    The electron-only terms (zfs, electron Zeeman) are constant across the
    nuclear sublevels of a manifold and are omitted; they cancel from every
    nuclear transition frequency.
    """
    _check_projection(m_I, "m_I")
    _check_projection(m_S, "m_S")
    s = shift if shift is not None else _NO_SHIFT
    return (
        (params.quadrupole + s.d_quadrupole) * m_I * m_I
        + m_S * (params.hyperfine + s.d_hyperfine) * m_I
        + params.nuclear_zeeman * m_I
    )


def _validate_pair(pair):
    ref, target = pair
    _check_projection(ref, "pair[0]")
    _check_projection(target, "pair[1]")
    if ref == target:
        raise ValueError("transition pair must connect two distinct m_I levels")
    return ref, target


def transition_frequency(params: SpinSystemParams, pair, m_S: int,
                         shift: InteractionShift | None = None) -> float:
    """|E(target) - E(reference)| for a (reference, target) m_I pair, rad/s."""
    ref, target = _validate_pair(pair)
    return abs(level_energy(params, target, m_S, shift) - level_energy(params, ref, m_S, shift))


@dataclass(frozen=True)
class TransitionRecord:
    index: int
    pair: tuple
    m_S: int
    frequency: float  # rad/s


def single_quantum_table(params: SpinSystemParams,
                         shift: InteractionShift | None = None) -> tuple:
    """All six single-quantum lines as (index, pair, m_S, frequency) records."""
    return tuple(
        TransitionRecord(idx, pair, m_S, transition_frequency(params, pair, m_S, shift))
        for idx, pair, m_S in SINGLE_QUANTUM_LINES
    )


def pair_sensitivity(pair, m_S: int, gamma_n: float) -> tuple:
    """Per-channel frequency sensitivities of a transition.

    Returns (d/d(dQ), d/d(dA), d/d(dB)) of the signed energy difference
    E(target) - E(reference): the quadrupole channel responds to the change
    in m_I^2, the hyperfine channel to m_S times the change in m_I, and the
    field channel to gamma_n times the change in m_I.
    """
    ref, target = _validate_pair(pair)
    _check_projection(m_S, "m_S")
    d_mi = target - ref
    d_mi2 = target * target - ref * ref
    return (d_mi2, m_S * d_mi, gamma_n * d_mi)


@dataclass(frozen=True)
class Segment:
    """One stretch of free evolution: duration (s), electron manifold, shifts.

    ``sign`` is -1 after an odd number of nuclear pi pulses, which swap the
    two superposed levels and invert further phase accumulation.
    """

    duration: float
    m_S: int
    shift: InteractionShift = field(default_factory=InteractionShift)
    sign: int = 1

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("segment duration must be >= 0")
        _check_projection(self.m_S, "m_S")
        if self.sign not in (-1, 1):
            raise ValueError("segment sign must be +1 or -1")


def accumulated_phase(params: SpinSystemParams, pair,
                      segments: Iterable[Segment]) -> float:
    """Phase of the target level relative to the reference over the sequence.

    phase = -sum_k duration_k * (E(target; m_S_k) - E(reference; m_S_k)),
    evaluated with each segment's own interaction shift.  Returned signed,
    in radians.
    """
    ref, target = _validate_pair(pair)
    total = 0.0
    for seg in segments:
        diff = level_energy(params, target, seg.m_S, seg.shift) - level_energy(
            params, ref, seg.m_S, seg.shift
        )
        total -= seg.sign * seg.duration * diff
    return total


@dataclass(frozen=True)
class PhaseCoefficients:
    """Linear response of the accumulated phase to static offsets.

    phase(dQ, dA, dB) = phase(0) + quadrupole * dQ + hyperfine * dA + field * dB
    with dQ, dA in rad/s and dB in gauss.  Exact, not just first order: the
    level energies are linear in all three offsets.
    """

    quadrupole: float  # seconds
    hyperfine: float   # seconds
    field: float       # rad per gauss

    def contract(self, d_quadrupole=0.0, d_hyperfine=0.0, d_field=0.0):
        return (
            self.quadrupole * d_quadrupole
            + self.hyperfine * d_hyperfine
            + self.field * d_field
        )


def phase_coefficients(params: SpinSystemParams, pair,
                       segments: Sequence[Segment]) -> PhaseCoefficients:
    """Sensitivity of accumulated_phase to shared (dQ, dA, dB) offsets."""
    c_q = c_a = c_b = 0.0
    for seg in segments:
        s_q, s_a, s_b = pair_sensitivity(pair, seg.m_S, params.gamma_n)
        c_q -= seg.sign * seg.duration * s_q
        c_a -= seg.sign * seg.duration * s_a
        c_b -= seg.sign * seg.duration * s_b
    return PhaseCoefficients(quadrupole=c_q, hyperfine=c_a, field=c_b)
