"""Shot-to-shot noise ensembles and their effect on the mean signal.

A noise source couples one scalar random variable (temperature, field, or
strain) to the interaction shifts.  The ensemble-averaged signal after a
pulse sequence with phase coefficients c is

    <e^{i phase}> = e^{i phase(locations)} * prod_j CF_j(c_j)

where CF_j is the characteristic function of source j's centered
distribution and c_j its scalar phase coefficient.  The product form is
exact when every source enters the phase linearly; temperature sources
attached to a quasiharmonic response are nonlinear and must go through the
Monte Carlo path instead.

Sampling is chunked and seeded per (source, chunk) so results are
bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .response import LinearResponse, QuasiharmonicSet, default_linear_response
from .spin_model import PhaseCoefficients
from .units import TWO_PI

CHUNK = 1 << 16

# Absolute-temperature ensembles are clipped this many scale widths from the
# location (and at T = 0) before evaluating the lattice model on the draws.
TRUNCATION_WIDTHS = 50.0

_KINDS = ("lorentzian", "gaussian", "delta")


@dataclass(frozen=True)
class Distribution:
    """Scalar noise distribution: lorentzian (scale = HWHM), gaussian
    (scale = standard deviation), or delta (no spread)."""

    kind: str
    location: float = 0.0
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}; "
                             f"expected one of {_KINDS}")
        if self.scale < 0:
            raise ValueError("distribution scale must be >= 0")
        if self.kind == "delta" and self.scale != 0:
            raise ValueError("delta distribution must have zero scale")

    def characteristic_function(self, u):
        """E[e^{iux}] evaluated at u (scalar or array)."""
        u = np.asarray(u, dtype=float)
        phase = np.exp(1j * self.location * u)
        if self.kind == "lorentzian":
            out = phase * np.exp(-self.scale * np.abs(u))
        elif self.kind == "gaussian":
            out = phase * np.exp(-0.5 * (self.scale * u) ** 2)
        else:
            out = phase
        return complex(out) if out.ndim == 0 else out

    def centered(self) -> "Distribution":
        return Distribution(kind=self.kind, location=0.0, scale=self.scale)

    def cdf(self, x: float) -> float:
        if self.kind == "lorentzian":
            return 0.5 + math.atan((x - self.location) / self.scale) / math.pi
        if self.kind == "gaussian":
            return 0.5 * (1.0 + math.erf((x - self.location) / (self.scale * math.sqrt(2.0))))
        return 1.0 if x >= self.location else 0.0

    def _sample_chunk(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "lorentzian":
            u = rng.random(n)
            return self.location + self.scale * np.tan(np.pi * (u - 0.5))
        if self.kind == "gaussian":
            return self.location + self.scale * rng.standard_normal(n)
        return np.full(n, self.location)

    def sample(self, n: int, seed: int, source_index: int = 0) -> np.ndarray:
        """Deterministic chunked draw; matches the Monte Carlo stream."""
        if n <= 0:
            raise ValueError("sample count must be positive")
        out = np.empty(n)
        for k, start in enumerate(range(0, n, CHUNK)):
            stop = min(start + CHUNK, n)
            rng = _chunk_rng(seed, source_index, k)
            out[start:stop] = self._sample_chunk(rng, stop - start)
        return out


def lorentzian(location: float, scale: float) -> Distribution:
    return Distribution(kind="lorentzian", location=location, scale=scale)


def gaussian(location: float, scale: float) -> Distribution:
    return Distribution(kind="gaussian", location=location, scale=scale)


def delta(location: float) -> Distribution:
    return Distribution(kind="delta", location=location)


def _chunk_rng(seed: int, source_index: int, chunk_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(source_index, chunk_index))
    return np.random.default_rng(ss)


_SOURCE_KINDS = ("temperature", "field", "strain")


@dataclass(frozen=True)
class NoiseSource:
    """One environmental noise variable and how it shifts the interactions.

    ``temperature`` and ``strain`` sources carry a response model
    (LinearResponse or QuasiharmonicSet); ``field`` sources act directly on
    the Zeeman channel.  Linear-response temperature and strain variables
    are offsets from the operating point; quasiharmonic temperature
    variables are absolute temperatures in K.
    """

    name: str
    kind: str
    distribution: Distribution
    response: object = None

    def __post_init__(self):
        if self.kind not in _SOURCE_KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}; "
                             f"expected one of {_SOURCE_KINDS}")
        if self.kind == "field":
            if self.response is not None:
                raise TypeError("field sources take no response model")
        elif not isinstance(self.response, (LinearResponse, QuasiharmonicSet)):
            raise TypeError(
                f"{self.kind} source needs a LinearResponse or QuasiharmonicSet, "
                f"got {type(self.response).__name__}"
            )

    @property
    def is_linear(self) -> bool:
        return not (self.kind == "temperature" and isinstance(self.response, QuasiharmonicSet))

    def phase_coefficient(self, coefficients: PhaseCoefficients) -> float:
        """d phase / d x for this source's variable; linear sources only."""
        if not self.is_linear:
            raise TypeError(
                f"source {self.name!r} couples nonlinearly; "
                "use the Monte Carlo ensemble average"
            )
        if self.kind == "field":
            return coefficients.field
        if self.kind == "temperature":
            return (
                coefficients.quadrupole * self.response.quadrupole_per_K
                + coefficients.hyperfine * self.response.hyperfine_per_K
            )
        return (
            coefficients.quadrupole * self.response.quadrupole_per_strain
            + coefficients.hyperfine * self.response.hyperfine_per_strain
        )

    def deviation_phase(self, coefficients: PhaseCoefficients, x: np.ndarray) -> np.ndarray:
        """phase(x) - phase(location), vectorized over draws x."""
        if self.is_linear:
            return self.phase_coefficient(coefficients) * (x - self.distribution.location)
        loc = self.distribution.location
        d_q = self.response.quadrupole.shift_at(x) - self.response.quadrupole.shift_at(loc)
        d_a = self.response.hyperfine.shift_at(x) - self.response.hyperfine.shift_at(loc)
        return coefficients.quadrupole * d_q + coefficients.hyperfine * d_a

    def location_phase(self, coefficients: PhaseCoefficients) -> float:
        """Deterministic phase contributed by the distribution's location."""
        if self.is_linear:
            return self.phase_coefficient(coefficients) * self.distribution.location
        loc = self.distribution.location
        return (
            coefficients.quadrupole * self.response.quadrupole.shift_at(loc)
            + coefficients.hyperfine * self.response.hyperfine.shift_at(loc)
        )

    def truncation_window(self):
        """(low, high) clip range for sampling, or None when not needed."""
        if self.is_linear or self.distribution.kind == "delta":
            return None
        loc, scale = self.distribution.location, self.distribution.scale
        return (max(0.0, loc - TRUNCATION_WIDTHS * scale), loc + TRUNCATION_WIDTHS * scale)

    def centered(self) -> "NoiseSource":
        if not self.is_linear:
            raise TypeError("centering a nonlinear source is not meaningful")
        return NoiseSource(
            name=self.name, kind=self.kind,
            distribution=self.distribution.centered(), response=self.response,
        )


def temperature_source(distribution: Distribution, response=None,
                       name: str = "temperature") -> NoiseSource:
    if response is None:
        response = default_linear_response()
    return NoiseSource(name=name, kind="temperature",
                       distribution=distribution, response=response)


def field_source(distribution: Distribution, name: str = "field") -> NoiseSource:
    return NoiseSource(name=name, kind="field", distribution=distribution)


def strain_source(distribution: Distribution, response=None,
                  name: str = "strain") -> NoiseSource:
    if response is None:
        response = default_linear_response()
    return NoiseSource(name=name, kind="strain",
                       distribution=distribution, response=response)


def residual_field_source(dq_coherence_time: float = 3.9e-3,
                          gamma_n: float = -TWO_PI * 307.7,
                          name: str = "residual-field") -> NoiseSource:
    """Lorentzian field-like source reproducing a measured double-quantum
    coherence time.

    The double-quantum transition dephases at 2 |gamma_n| sigma_B, so the
    width is sigma_B = 1 / (2 |gamma_n| T2_dq).  This lumps every noise
    channel that is not cancelled by the echo into one effective field.
    """
    if dq_coherence_time <= 0:
        raise ValueError("coherence time must be positive")
    scale = 1.0 / (2.0 * abs(gamma_n) * dq_coherence_time)
    return field_source(lorentzian(0.0, scale), name=name)


def dephasing_factor(sources, coefficients: PhaseCoefficients) -> complex:
    """Exact ensemble factor prod_j CF_j(c_j) over linear sources.

    Uses the full (uncentered) characteristic functions, so distribution
    locations contribute their deterministic phase here; do not also add
    that phase elsewhere.
    """
    out = 1.0 + 0.0j
    for src in sources:
        out *= complex(src.distribution.characteristic_function(src.phase_coefficient(coefficients)))
    return out


@dataclass(frozen=True)
class MonteCarloResult:
    attenuation: complex
    n_samples: int
    n_retained: int
    truncated_mass: dict = dataclass_field(default_factory=dict)
    std_error: float = 0.0

    @property
    def amplitude(self) -> float:
        return abs(self.attenuation)


def monte_carlo_attenuation(sources, coefficients: PhaseCoefficients,
                            n_samples: int = 1 << 20, seed: int = 12345,
                            workers: int = 1) -> MonteCarloResult:
    """Sampled estimate of <e^{i (phase - phase(locations))}>.

    Draws every source independently, drops joint samples where any
    absolute-temperature source falls outside its physical window, and
    averages the retained phase factors.  Chunked sub-streams keyed by
    (source index, chunk index) make the result independent of ``workers``.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    if workers <= 0:
        raise ValueError("workers must be positive")
    sources = tuple(sources)
    windows = [src.truncation_window() for src in sources]
    n_chunks = -(-n_samples // CHUNK)

    def run_chunk(k: int):
        start = k * CHUNK
        n_k = min(CHUNK, n_samples - start)
        draws = []
        mask = np.ones(n_k, dtype=bool)
        for j, (src, win) in enumerate(zip(sources, windows)):
            x = src.distribution._sample_chunk(_chunk_rng(seed, j, k), n_k)
            if win is not None:
                mask &= (x >= win[0]) & (x <= win[1])
            draws.append(x)
        phase = np.zeros(int(mask.sum()))
        for src, x in zip(sources, draws):
            phase += src.deviation_phase(coefficients, x[mask])
        z = np.exp(1j * phase)
        return complex(z.sum()), int(mask.sum())

    if workers == 1 or n_chunks == 1:
        partials = [run_chunk(k) for k in range(n_chunks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(run_chunk, range(n_chunks)))

    total = 0.0 + 0.0j
    retained = 0
    for zsum, count in partials:  # fixed combination order
        total += zsum
        retained += count
    if retained == 0:
        raise ValueError("all samples fell outside the truncation windows")
    mean = total / retained
    masses = {
        src.name: 1.0 - (src.distribution.cdf(win[1]) - src.distribution.cdf(win[0]))
        for src, win in zip(sources, windows)
        if win is not None
    }
    std_error = math.sqrt(max(0.0, 1.0 - abs(mean) ** 2) / retained)
    return MonteCarloResult(
        attenuation=mean,
        n_samples=n_samples,
        n_retained=retained,
        truncated_mass=masses,
        std_error=std_error,
    )
