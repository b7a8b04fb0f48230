"""Fitting and characterization algebra for ensemble coherence data.

Implements the extraction chain used throughout the package: cosine fringe
fits for signal amplitude, exponential fits for coherence times, the
vee fit of decay rate versus flip fraction that yields the slope ratio of
the two couplings, inhomogeneity decomposition from measured rates, and
the six-line spectroscopy inversion for interaction shifts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit, least_squares, nnls

from .response import InteractionShift, default_linear_response
from .spin_model import SpinSystemParams, default_params, pair_sensitivity
from .units import angular

ZFS_SLOPE_DEFAULT = angular(-77.7e3)  # rad/s per K

# Measured scale between fractional zfs and quadrupole temperature shifts,
# delta_D / D = 3.6 * delta_Q / Q; order-of-magnitude use only.
ZFS_QUADRUPOLE_SHIFT_RATIO = 3.6


class FitError(RuntimeError):
    """Data-dependent fit failure (degenerate span, no decay, no vertex)."""


@dataclass(frozen=True)
class FitResult:
    """Named parameters plus covariance in the same order."""

    parameters: dict
    covariance: np.ndarray
    residual_norm: float
    points_used: int
    warnings: tuple = ()
    settings: dict = dataclass_field(default_factory=dict)

    def __post_init__(self):
        if self.residual_norm < 0:
            raise ValueError("residual norm must be >= 0")

    def __getitem__(self, name):
        return self.parameters[name]

    @property
    def parameter_names(self):
        return tuple(self.parameters)

    def as_dict(self) -> dict:
        """JSON-ready form: plain floats and nested lists."""
        return {
            "parameters": {k: float(v) for k, v in self.parameters.items()},
            "covariance": np.asarray(self.covariance, dtype=float).tolist(),
            "residual_norm": float(self.residual_norm),
            "points_used": int(self.points_used),
            "warnings": list(self.warnings),
            "settings": dict(self.settings),
        }


def _covariance_from_jacobian(jac, residuals, n_params):
    """s^2 (J^T J)^-1 with the usual residual-variance scale."""
    n = residuals.size
    dof = max(n - n_params, 1)
    s2 = float(residuals @ residuals) / dof
    jtj = jac.T @ jac
    try:
        cov = s2 * np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = np.full((n_params, n_params), np.nan)
    return cov


# ------------------------------------------------------------------- cosine

def fit_cosine(phases, signal) -> FitResult:
    """Least-squares fringe fit S = c0 - c/2 + (c/2) cos(phi + phi0).

    Returns parameters ``contrast`` (c, peak-to-peak, >= 0), ``phase``
    (phi0), and ``maximum`` (c0, the signal at the fringe top).  Needs at
    least four points spanning a full period.
    """
    phases = np.asarray(phases, dtype=float)
    signal = np.asarray(signal, dtype=float)
    if phases.shape != signal.shape or phases.ndim != 1:
        raise ValueError("phases and signal must be 1D arrays of equal length")
    if phases.size < 4:
        raise ValueError("cosine fit needs at least 4 points")
    span = float(np.max(phases) - np.min(phases))
    if span < 2 * math.pi * (1 - 1e-9):
        raise FitError(
            f"phase span {span:.3f} rad is less than one period; "
            "extend the readout-phase scan"
        )
    design = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    coef, *_ = np.linalg.lstsq(design, signal, rcond=None)
    offset, a, b = coef
    amplitude = math.hypot(a, b)
    residuals = signal - design @ coef
    cov_lin = _covariance_from_jacobian(design, residuals, 3)

    warnings = ()
    if amplitude < 1e-12 * max(1.0, abs(offset)):
        warnings = ("zero contrast: fringe phase is unconstrained",)
        phi0 = 0.0
        jac = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    else:
        phi0 = math.atan2(-b, a)
        jac = np.array([
            [0.0, 2 * a / amplitude, 2 * b / amplitude],
            [0.0, b / amplitude**2, -a / amplitude**2],
            [1.0, a / amplitude, b / amplitude],
        ])
    cov = jac @ cov_lin @ jac.T
    parameters = {
        "contrast": 2 * amplitude,
        "phase": phi0,
        "maximum": offset + amplitude,
    }
    return FitResult(
        parameters=parameters,
        covariance=cov,
        residual_norm=float(np.linalg.norm(residuals)),
        points_used=phases.size,
        warnings=warnings,
    )


# -------------------------------------------------------------- exponential

def fit_exponential(times, amplitudes, skip_initial: int = 3) -> FitResult:
    """Fit S(t) = c0 exp(-t / T2), skipping the first points.

    The skip (default 3) discards early-time points where the ensemble
    signal is not yet a single exponential.  Needs at least five points
    after the skip and strictly decaying data.
    """
    times = np.asarray(times, dtype=float)
    amplitudes = np.asarray(amplitudes, dtype=float)
    if skip_initial < 0:
        raise ValueError("skip_initial must be >= 0")
    t = times[skip_initial:]
    y = amplitudes[skip_initial:]
    if t.size < 5:
        raise ValueError(
            f"exponential fit needs >= 5 points after skipping {skip_initial}, got {t.size}"
        )
    positive = y > 0
    if positive.sum() < 3:
        raise FitError("too few positive amplitudes to fit a decay")
    slope, intercept = np.polyfit(t[positive], np.log(y[positive]), 1)
    if slope >= 0:
        raise FitError("amplitudes do not decay with time; cannot fit an exponential")

    def model(tt, c0, t2):
        return c0 * np.exp(-tt / t2)

    p0 = (math.exp(intercept), -1.0 / slope)
    popt, pcov = curve_fit(model, t, y, p0=p0, maxfev=10000)
    c0, t2 = popt
    if t2 <= 0:
        raise FitError("fitted coherence time is not positive")
    residuals = y - model(t, *popt)
    return FitResult(
        parameters={"initial_amplitude": float(c0), "coherence_time": float(t2)},
        covariance=pcov,
        residual_norm=float(np.linalg.norm(residuals)),
        points_used=int(t.size),
        settings={"skip_initial": skip_initial},
    )


# --------------------------------------------------------------- rate table

@dataclass(frozen=True)
class RateRow:
    """One measured decay rate: which pair, which electron pairing, where
    the flip sits, and the rate in 1/s."""

    pair: tuple
    ms_pairing: tuple
    tau_over_t: float
    rate: float
    rate_error: float | None = None

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rates must be positive")
        if not 0.0 <= self.tau_over_t <= 1.0:
            raise ValueError("tau_over_t must lie in [0, 1]")


@dataclass
class RateTable:
    rows: list = dataclass_field(default_factory=list)
    metadata: dict = dataclass_field(default_factory=dict)

    def add(self, pair, ms_pairing, tau_over_t, rate, rate_error=None):
        self.rows.append(RateRow(tuple(pair), tuple(ms_pairing),
                                 float(tau_over_t), float(rate),
                                 None if rate_error is None else float(rate_error)))

    def filter(self, pair=None, ms_pairing=None) -> "RateTable":
        rows = [
            r for r in self.rows
            if (pair is None or r.pair == tuple(pair))
            and (ms_pairing is None or r.ms_pairing == tuple(ms_pairing))
        ]
        return RateTable(rows=rows, metadata=dict(self.metadata))

    @property
    def tau_over_t(self) -> np.ndarray:
        return np.array([r.tau_over_t for r in self.rows])

    @property
    def rates(self) -> np.ndarray:
        return np.array([r.rate for r in self.rows])

    def write_csv(self, path, deterministic: bool = False) -> None:
        import datetime as _dt

        lines = ["# nvecho-rates/1"]
        for key in sorted(self.metadata):
            lines.append(f"# {key}: {self.metadata[key]}")
        if not deterministic:
            lines.append(f"# written: {_dt.datetime.now().isoformat()}")
        lines.append("pair_reference,pair_target,ms_free,ms_flipped,tau_over_t,rate_per_s,rate_error")
        for r in self.rows:
            err = "" if r.rate_error is None else repr(float(r.rate_error))
            lines.append(
                f"{r.pair[0]},{r.pair[1]},{r.ms_pairing[0]},{r.ms_pairing[1]},"
                f"{float(r.tau_over_t)!r},{float(r.rate)!r},{err}"
            )
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read_csv(cls, path) -> "RateTable":
        import yaml

        table = cls()
        header_seen = False
        for raw in Path(path).read_text().splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body and not body.startswith("nvecho-rates"):
                    key, value = body.split(":", 1)
                    if key.strip() != "written":
                        table.metadata[key.strip()] = yaml.safe_load(value.strip())
                continue
            if not header_seen:
                header_seen = True
                continue
            parts = line.split(",")
            table.add(
                (int(parts[0]), int(parts[1])), (int(parts[2]), int(parts[3])),
                float(parts[4]), float(parts[5]),
                float(parts[6]) if len(parts) > 6 and parts[6] else None,
            )
        if not header_seen:
            raise ValueError(f"{path}: not a rate-table file")
        return table


# ------------------------------------------------------------------ vee fit

def _vee_dispatch(table: RateTable) -> str:
    pairs = {r.pair for r in table.rows}
    pairings = {r.ms_pairing for r in table.rows}
    if len(pairs) != 1 or len(pairings) != 1:
        raise ValueError("fit_vee needs a table filtered to one pair and one ms pairing")
    (pair,) = pairs
    (pairing,) = pairings
    d_mi = pair[1] - pair[0]
    ms_flip = pairing[1]
    # The flip segment opposes the quadrupole accumulation only when the
    # hyperfine coefficient changes sign, i.e. d_mi * ms_flip < 0.
    return "vee" if d_mi * ms_flip < 0 else "line"


def fit_vee(table: RateTable, method: str = "auto", robust: bool = False) -> FitResult:
    """Fit decay rate versus flip fraction for one transition branch.

    The cancelling branch forms a vee, rate = slope |x - ratio| + baseline,
    and the crossing point estimates the coupling slope ratio independent
    of any constant baseline.  The non-cancelling branch is a straight
    line; its x-intercept magnitude estimates the same ratio but absorbs
    baseline / slope as bias, which is faithfully reported.
    """
    if method == "auto":
        method = _vee_dispatch(table)
    if method not in ("vee", "line"):
        raise ValueError(f"unknown fit_vee method {method!r}")
    x = table.tau_over_t
    y = table.rates
    order = np.argsort(x)
    x, y = x[order], y[order]

    if method == "line":
        design = np.column_stack([x, np.ones_like(x)])
        (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
        if slope == 0:
            raise FitError("rate is flat in flip fraction; no intercept estimate")
        residuals = y - design @ np.array([slope, intercept])
        cov_lin = _covariance_from_jacobian(design, residuals, 2)
        ratio = intercept / slope
        jac = np.array([
            [-intercept / slope**2, 1.0 / slope],
            [1.0, 0.0],
            [intercept / slope**2, -1.0 / slope],
        ])
        return FitResult(
            parameters={"ratio": float(ratio), "slope": float(slope),
                        "x_intercept": float(-ratio)},
            covariance=jac @ cov_lin @ jac.T,
            residual_norm=float(np.linalg.norm(residuals)),
            points_used=int(x.size),
            warnings=("line-intercept ratio absorbs any constant baseline "
                      "as bias baseline/slope",),
            settings={"method": "line", "robust": robust},
        )

    if x.size < 6:
        raise ValueError("vee fit needs at least 6 grid points")

    def profile_rss(r):
        design = np.column_stack([np.abs(x - r), np.ones_like(x)])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        res = y - design @ coef
        return float(res @ res), coef

    candidates = np.linspace(x[0], x[-1], 201)[1:-1]
    best_r = min(candidates, key=lambda r: profile_rss(float(r))[0])
    _, (a0, b0) = profile_rss(float(best_r))

    def residual_fn(p):
        a, r, b = p
        return a * np.abs(x - r) + b - y

    lower = [0.0, max(0.0, x[0]), 0.0]
    upper = [np.inf, min(1.0, x[-1]), np.inf]
    p0 = [max(a0, 1e-12), float(best_r), max(b0, 0.0)]
    p0 = np.clip(p0, lower, np.minimum(upper, 1e30))
    fit = least_squares(residual_fn, p0, bounds=(lower, upper),
                        loss="soft_l1" if robust else "linear")
    slope, ratio, baseline = fit.x
    eps = (x[-1] - x[0]) / (2 * (x.size - 1))
    if not (x[0] + eps < ratio < x[-1] - eps) or np.sum(x < ratio) == 0 or np.sum(x > ratio) == 0:
        raise FitError(
            f"vertex at {ratio:.3f} is not straddled by the flip-fraction grid "
            f"[{x[0]:.3f}, {x[-1]:.3f}]; extend the grid past the vertex"
        )
    cov = _covariance_from_jacobian(fit.jac, fit.fun, 3)
    # reorder covariance to (ratio, slope, baseline)
    perm = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1]], dtype=float)
    return FitResult(
        parameters={"ratio": float(ratio), "slope": float(slope),
                    "baseline": float(baseline)},
        covariance=perm @ cov @ perm.T,
        residual_norm=float(np.linalg.norm(fit.fun)),
        points_used=int(x.size),
        settings={"method": "vee", "robust": robust},
    )


# -------------------------------------------------------- sigma decomposition

def estimate_sigma(rates, coefficients, baseline=0.0, rate_errors=None,
                   source_names=None) -> FitResult:
    """Decompose excess decay rates into per-source inhomogeneity widths.

    Solves rate_i - baseline_i = sum_j |coefficient_ij| sigma_j with
    sigma_j >= 0 (nonnegative least squares).  ``coefficients`` is
    (n_rates,) for a single source or (n_rates, n_sources).
    """
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    coeff = np.atleast_1d(np.asarray(coefficients, dtype=float))
    if coeff.ndim == 1:
        coeff = coeff[:, None]
    coeff = np.abs(coeff)
    if coeff.shape[0] != rates.size:
        raise ValueError("coefficients must have one row per rate")
    if np.any(np.all(coeff == 0, axis=0)):
        raise ValueError("every noise source needs a nonzero coefficient")
    names = tuple(source_names) if source_names else tuple(
        f"sigma_{j}" for j in range(coeff.shape[1])
    )
    if len(names) != coeff.shape[1]:
        raise ValueError("one name per source required")
    excess = rates - np.asarray(baseline, dtype=float)

    warnings = ()
    if np.all(excess <= 0):
        sigma = np.zeros(coeff.shape[1])
        resid = -excess
        warnings = ("rates do not exceed the baseline; widths set to zero",)
    else:
        if rate_errors is not None:
            w = 1.0 / np.asarray(rate_errors, dtype=float)
            sigma, _ = nnls(coeff * w[:, None], excess * w)
        else:
            sigma, _ = nnls(coeff, excess)
        resid = coeff @ sigma - excess

    if rate_errors is not None:
        w2 = 1.0 / np.asarray(rate_errors, dtype=float) ** 2
        info = coeff.T @ (coeff * w2[:, None])
        try:
            cov = np.linalg.inv(info)
        except np.linalg.LinAlgError:
            cov = np.full((coeff.shape[1],) * 2, np.nan)
    else:
        cov = _covariance_from_jacobian(coeff, resid, coeff.shape[1])
    return FitResult(
        parameters=dict(zip(names, (float(s) for s in sigma))),
        covariance=cov,
        residual_norm=float(np.linalg.norm(resid)),
        points_used=int(rates.size),
        warnings=warnings,
    )


# ------------------------------------------------------------- spectroscopy

@dataclass(frozen=True)
class ShiftEstimate:
    """Magnitude changes of the two couplings from six-line spectroscopy."""

    d_quadrupole_magnitude: float
    d_hyperfine_magnitude: float

    def signed(self, params: SpinSystemParams | None = None) -> InteractionShift:
        """Signed coupling shifts, using the couplings' signs (negative by
        default): the magnitude of a negative coupling grows when its
        signed value decreases."""
        if params is None:
            params = default_params()
        sign_q = 1.0 if params.quadrupole >= 0 else -1.0
        sign_a = 1.0 if params.hyperfine >= 0 else -1.0
        return InteractionShift(
            d_quadrupole=sign_q * self.d_quadrupole_magnitude,
            d_hyperfine=sign_a * self.d_hyperfine_magnitude,
        )


def extract_interaction_shifts(frequency_shifts) -> ShiftEstimate:
    """Invert six single-quantum line shifts into coupling-magnitude shifts.

    With lines ordered as in ``single_quantum_table``, the combinations
    (dw1 + dw2)/2 and (dw4 + dw5 - dw3 - dw6)/4 isolate the quadrupole and
    hyperfine magnitude changes exactly and drop any common field shift.
    """
    w = np.asarray(frequency_shifts, dtype=float)
    if w.shape != (6,):
        raise ValueError("need exactly six frequency shifts, ordered by line index")
    d_q = (w[0] + w[1]) / 2.0
    d_a = (w[3] + w[4] - w[2] - w[5]) / 4.0
    return ShiftEstimate(d_quadrupole_magnitude=float(d_q),
                         d_hyperfine_magnitude=float(d_a))


def synthesize_frequency_shifts(estimate: ShiftEstimate,
                                params: SpinSystemParams | None = None) -> np.ndarray:
    """Six line shifts implied by coupling-magnitude changes (field fixed)."""
    d_q = estimate.d_quadrupole_magnitude
    d_a = estimate.d_hyperfine_magnitude
    return np.array([d_q, d_q, d_q - d_a, d_q + d_a, d_q + d_a, d_q - d_a])


def temperature_from_zfs(delta_zfs: float, slope: float = ZFS_SLOPE_DEFAULT) -> float:
    """Temperature change from a zero-field-splitting shift (rad/s in, K out)."""
    if slope == 0:
        raise ValueError("zfs temperature slope must be nonzero")
    return delta_zfs / slope


# ------------------------------------------------------------- rate algebra

def predict_rate(pair, m_S: int, sigma_T: float = 0.0, sigma_B: float = 0.0,
                 response=None, params: SpinSystemParams | None = None) -> float:
    """Free-evolution dephasing rate for Lorentzian temperature and field
    ensembles: |sensitivity . slopes| sigma_T + |Zeeman sensitivity| sigma_B."""
    if response is None:
        response = default_linear_response()
    if params is None:
        params = default_params()
    s_q, s_a, s_b = pair_sensitivity(pair, m_S, params.gamma_n)
    temp = abs(s_q * response.quadrupole_per_K + s_a * response.hyperfine_per_K)
    return temp * sigma_T + abs(s_b) * sigma_B


def predict_echo_rate(pair, flip_fraction: float, ms_free: int = 0,
                      ms_flipped: int = 1, sigma_T: float = 0.0,
                      sigma_B: float = 0.0, response=None,
                      params: SpinSystemParams | None = None) -> float:
    """Dephasing rate of the unbalanced echo versus flip fraction.

    The temperature coefficient interpolates between the two manifolds'
    sensitivities; on the cancelling branch it crosses zero at the slope
    ratio, producing the vee.  The field term is untouched by the flip.
    """
    if not 0.0 <= flip_fraction <= 1.0:
        raise ValueError("flip fraction must lie in [0, 1]")
    if response is None:
        response = default_linear_response()
    if params is None:
        params = default_params()
    sq0, sa0, sb = pair_sensitivity(pair, ms_free, params.gamma_n)
    sq1, sa1, _ = pair_sensitivity(pair, ms_flipped, params.gamma_n)
    c_free = sq0 * response.quadrupole_per_K + sa0 * response.hyperfine_per_K
    c_flip = sq1 * response.quadrupole_per_K + sa1 * response.hyperfine_per_K
    temp = abs((1.0 - flip_fraction) * c_free + flip_fraction * c_flip)
    return temp * sigma_T + abs(sb) * sigma_B


def predict_electronic_rate(sigma_T: float = 0.0, sigma_B: float = 0.0,
                            response=None,
                            params: SpinSystemParams | None = None) -> float:
    """Order-of-magnitude electron-spin dephasing from the same ensembles.

    Scales the nuclear m_S = 0 temperature rate by the measured
    zfs-to-quadrupole shift ratio times zfs/|quadrupole|, and adds the
    electron Zeeman response to the field width.  Spin-bath contributions
    are not modeled, so treat the result as an order of magnitude.
    """
    if response is None:
        response = default_linear_response()
    if params is None:
        params = default_params()
    nuclear_temp_rate = abs(response.quadrupole_per_K) * sigma_T
    scale = ZFS_QUADRUPOLE_SHIFT_RATIO * params.zfs / abs(params.quadrupole)
    return scale * nuclear_temp_rate + abs(params.gamma_e) * sigma_B
