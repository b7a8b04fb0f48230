"""Pulse sequences on the nuclear transitions and their ensemble signals.

Builders produce the four standard experiments:

* ``ramsey`` - free evolution on one single-quantum branch.
* ``dq_ramsey`` - free evolution on the m_I = -1 <-> +1 double-quantum pair.
* ``unbalanced_echo`` - free evolution interrupted by one electron flip a
  time ``flip_time`` before readout.  The hyperfine interaction acts only
  while the electron is flipped, with a pair-dependent sign, so the flip
  fraction tunes the net sensitivity to correlated quadrupole/hyperfine
  noise; on the (0, -1) branch the fraction equal to the slope ratio
  cancels temperature noise completely.
* ``nuclear_echo`` - a nuclear pi pulse at the midpoint, refocusing every
  static energy shift.

``simulate_amplitude`` averages the phase factor over the noise ensemble,
in closed form (product of characteristic functions, linear sources only)
or by Monte Carlo.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np
import yaml

from .noise import MonteCarloResult, dephasing_factor, monte_carlo_attenuation
from .spin_model import (
    DOUBLE_QUANTUM_PAIR,
    Segment,
    SpinSystemParams,
    accumulated_phase,
    default_params,
    phase_coefficients,
)

_KINDS = ("ramsey", "dq_ramsey", "unbalanced_echo", "nuclear_echo", "custom")


@dataclass(frozen=True)
class PulseSequence:
    kind: str
    pair: tuple
    segments: tuple
    nuclear_flip_at: float | None = None  # midpoint pi-pulse time, nuclear_echo only

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        if not self.segments:
            raise ValueError("sequence needs at least one segment")
        if self.total_time <= 0:
            raise ValueError("sequence must have positive total duration")

    @property
    def total_time(self) -> float:
        return sum(seg.duration for seg in self.segments)

    @property
    def flip_fraction(self):
        """Fraction of the total time spent in the flipped manifold, or None."""
        if self.kind != "unbalanced_echo":
            return None
        return self.segments[1].duration / self.total_time


def build_ramsey(duration: float, pair=(0, -1), m_S: int = 0) -> PulseSequence:
    if 0 not in pair:
        raise ValueError(
            "single-quantum Ramsey needs a pair involving m_I = 0; "
            "use build_dq_ramsey for the double-quantum branch"
        )
    return PulseSequence("ramsey", tuple(pair), (Segment(duration, m_S),))


def build_dq_ramsey(duration: float, m_S: int = 0) -> PulseSequence:
    return PulseSequence("dq_ramsey", DOUBLE_QUANTUM_PAIR, (Segment(duration, m_S),))


def build_unbalanced_echo(total_time: float, flip_time: float, pair=(0, -1),
                          ms_free: int = 0, ms_flipped: int = 1) -> PulseSequence:
    if not 0 <= flip_time <= total_time:
        raise ValueError("flip time must lie within the sequence: 0 <= tau <= t")
    if ms_free == ms_flipped:
        raise ValueError("electron flip must change the manifold")
    return PulseSequence(
        "unbalanced_echo",
        tuple(pair),
        (Segment(total_time - flip_time, ms_free), Segment(flip_time, ms_flipped)),
    )


def build_nuclear_echo(total_time: float, pair=(0, -1), m_S: int = 0) -> PulseSequence:
    half = total_time / 2.0
    return PulseSequence(
        "nuclear_echo",
        tuple(pair),
        (Segment(half, m_S, sign=+1), Segment(half, m_S, sign=-1)),
        nuclear_flip_at=half,
    )


@dataclass(frozen=True)
class SimulationResult:
    """Ensemble-averaged signal: mean = e^{i base_phase} * attenuation."""

    attenuation: complex
    base_phase: float
    monte_carlo: MonteCarloResult | None = None

    @property
    def amplitude(self) -> float:
        return abs(self.attenuation)

    @property
    def mean_signal(self) -> complex:
        return np.exp(1j * self.base_phase) * self.attenuation


def simulate_amplitude(sequence: PulseSequence, sources, backend: str = "closed_form",
                       params: SpinSystemParams | None = None,
                       n_samples: int = 1 << 20, seed: int = 12345,
                       workers: int = 1) -> SimulationResult:
    """Average e^{i phase} over the noise ensemble.

    The ``closed_form`` backend multiplies the centered characteristic
    functions of the sources, which is exact but only defined when every
    source enters the phase linearly; quasiharmonic temperature ensembles
    must use ``monte_carlo``.  Either way the deterministic phase evaluated
    at the distribution locations is reported separately as ``base_phase``.
    """
    if params is None:
        params = default_params()
    sources = tuple(sources)
    coeffs = phase_coefficients(params, sequence.pair, sequence.segments)
    base = accumulated_phase(params, sequence.pair, sequence.segments)
    base += sum(src.location_phase(coeffs) for src in sources)
    if backend == "closed_form":
        nonlinear = [src.name for src in sources if not src.is_linear]
        if nonlinear:
            raise TypeError(
                f"closed form is undefined for nonlinear sources {nonlinear}; "
                "call with backend='monte_carlo'"
            )
        att = dephasing_factor([src.centered() for src in sources], coeffs)
        return SimulationResult(attenuation=att, base_phase=base)
    if backend == "monte_carlo":
        mc = monte_carlo_attenuation(sources, coeffs, n_samples=n_samples,
                                     seed=seed, workers=workers)
        return SimulationResult(attenuation=mc.attenuation, base_phase=base,
                                monte_carlo=mc)
    raise ValueError(f"unknown backend {backend!r}; use 'closed_form' or 'monte_carlo'")


@dataclass
class EnsembleSignal:
    """A 1D scan: y(x) plus labels and free-form metadata."""

    x: np.ndarray
    y: np.ndarray
    x_label: str
    y_label: str
    metadata: dict = dataclass_field(default_factory=dict)


def phase_sweep(sequence: PulseSequence, sources, readout_phases,
                contrast: float = 1.0, maximum: float = 1.0,
                backend: str = "closed_form", **kwargs) -> EnsembleSignal:
    """Fringe signal versus readout phase phi,

        S(phi) = maximum - contrast/2 + (contrast/2) Re[e^{i phi} <e^{i phase}>],

    so a noiseless ensemble swings between ``maximum`` and
    ``maximum - contrast`` and full dephasing leaves the constant midpoint.
    """
    phases = np.asarray(readout_phases, dtype=float)
    if phases.size == 0:
        raise ValueError("need at least one readout phase")
    res = simulate_amplitude(sequence, sources, backend=backend, **kwargs)
    y = maximum - 0.5 * contrast + 0.5 * contrast * np.real(
        np.exp(1j * phases) * res.mean_signal
    )
    return EnsembleSignal(
        x=phases, y=y, x_label="readout_phase_rad", y_label="population",
        metadata={"kind": sequence.kind, "total_time_s": sequence.total_time,
                  "amplitude": res.amplitude, "backend": backend},
    )


def _sequence_for(total_time, sequence, flip_fraction, pair, ms_free, ms_flipped):
    if sequence == "unbalanced_echo":
        return build_unbalanced_echo(total_time, flip_fraction * total_time,
                                     pair=pair, ms_free=ms_free, ms_flipped=ms_flipped)
    if sequence == "ramsey":
        return build_ramsey(total_time, pair=pair, m_S=ms_free)
    if sequence == "dq_ramsey":
        return build_dq_ramsey(total_time, m_S=ms_free)
    if sequence == "nuclear_echo":
        return build_nuclear_echo(total_time, pair=pair, m_S=ms_free)
    raise ValueError(f"unknown sequence template {sequence!r}")


def _mc_metadata(meta, backend, kwargs):
    meta["backend"] = backend
    if backend == "monte_carlo":
        meta["seed"] = kwargs.get("seed", 12345)
        meta["n_samples"] = kwargs.get("n_samples", 1 << 20)
    return meta


def decay_scan(times, sources, flip_fraction: float | None = None,
               sequence: str | None = None, pair=(0, -1),
               ms_free: int = 0, ms_flipped: int = 1,
               backend: str = "closed_form", **kwargs) -> EnsembleSignal:
    """Ensemble amplitude versus total evolution time.

    With ``flip_fraction`` set (and no explicit template) each point is an
    unbalanced echo with the flip a fixed fraction of the total time before
    readout, so the scan probes one point of the protection vee.
    """
    if sequence is None:
        sequence = "unbalanced_echo" if flip_fraction is not None else "ramsey"
    if sequence == "unbalanced_echo" and flip_fraction is None:
        raise ValueError("unbalanced echo scan needs a flip_fraction")
    times = np.asarray(times, dtype=float)
    if times.size and np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly increasing")
    amps = np.empty_like(times)
    for i, t in enumerate(times):
        seq = _sequence_for(float(t), sequence, flip_fraction, pair, ms_free, ms_flipped)
        amps[i] = simulate_amplitude(seq, sources, backend=backend, **kwargs).amplitude
    meta = _mc_metadata({"sequence": sequence, "pair": list(pair)}, backend, kwargs)
    if flip_fraction is not None:
        meta["flip_fraction"] = flip_fraction
    return EnsembleSignal(x=times, y=amps, x_label="total_time_s",
                          y_label="amplitude", metadata=meta)


def pulse_location_sweep(total_time: float, flip_fractions, sources, pair=(0, -1),
                         ms_free: int = 0, ms_flipped: int = 1,
                         backend: str = "closed_form", **kwargs) -> EnsembleSignal:
    """Ensemble amplitude versus flip fraction at fixed total time."""
    fractions = np.asarray(flip_fractions, dtype=float)
    if np.any((fractions < 0) | (fractions > 1)):
        raise ValueError("flip fractions must lie in [0, 1]")
    amps = np.empty_like(fractions)
    for i, f in enumerate(fractions):
        seq = build_unbalanced_echo(total_time, float(f) * total_time, pair=pair,
                                    ms_free=ms_free, ms_flipped=ms_flipped)
        amps[i] = simulate_amplitude(seq, sources, backend=backend, **kwargs).amplitude
    meta = _mc_metadata({"total_time_s": total_time, "pair": list(pair)}, backend, kwargs)
    return EnsembleSignal(
        x=fractions, y=amps, x_label="flip_fraction", y_label="amplitude",
        metadata=meta,
    )


# -------------------------------------------------------------- signal files

_CSV_SCHEMA = "nvecho-signal/1"


def write_signal_csv(signal: EnsembleSignal, path, deterministic: bool = False) -> None:
    lines = [f"# {_CSV_SCHEMA}"]
    for key in sorted(signal.metadata):
        lines.append(f"# {key}: {signal.metadata[key]}")
    if not deterministic:
        lines.append(f"# written: {_dt.datetime.now().isoformat()}")
    lines.append(f"{signal.x_label},{signal.y_label}")
    for xv, yv in zip(signal.x, signal.y):
        lines.append(f"{float(xv)!r},{float(yv)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_signal_csv(path) -> EnsembleSignal:
    metadata = {}
    header = None
    xs, ys = [], []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body == _CSV_SCHEMA or ":" not in body:
                continue
            key, value = body.split(":", 1)
            if key.strip() == "written":
                continue
            metadata[key.strip()] = yaml.safe_load(value.strip())
            continue
        if header is None:
            header = [h.strip() for h in line.split(",")]
            continue
        parts = line.split(",")
        xs.append(float(parts[0]))
        ys.append(float(parts[1]))
    if header is None or not xs:
        raise ValueError(f"{path}: not a signal file (missing header or data)")
    return EnsembleSignal(
        x=np.array(xs), y=np.array(ys),
        x_label=header[0], y_label=header[1], metadata=metadata,
    )


def write_signal_json(signal: EnsembleSignal, path, deterministic: bool = False) -> None:
    payload = {
        "schema": _CSV_SCHEMA,
        "x_label": signal.x_label,
        "y_label": signal.y_label,
        "x": [float(v) for v in signal.x],
        "y": [float(v) for v in signal.y],
        "metadata": signal.metadata,
    }
    if not deterministic:
        payload["written"] = _dt.datetime.now().isoformat()
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
