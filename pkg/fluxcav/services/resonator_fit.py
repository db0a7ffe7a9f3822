"""
Internal and external quality factors from single-port reflection traces.

Line shape (dip at resonance, S11 -> 1 off resonance):

    S11(f) = 1 - (2 / Q_ext) / (1 / Q_int + 1 / Q_ext + 2i (f - f0) / f0)

The measured trace is modelled as a * exp(-2 pi i (f - f_ref) tau) * S11(f),
with a complex scale a (amplitude and phase offset), a cable delay tau in ns
and f_ref the centre of the trace.
"""

import logging
import math
from typing import Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from fluxcav.core.exceptions import NoResonanceFound
from fluxcav.services.optimizer import LeastSquaresOptions, levenberg_marquardt

logger = logging.getLogger(__name__)

MIN_TRACE_POINTS = 16
DIP_FRACTION = 0.99
MIN_SPAN_LINEWIDTHS = 5.0


class ReflectionTrace(BaseModel):
    """Complex linear S11 against strictly increasing frequency (GHz)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    frequencies: np.ndarray
    s11: np.ndarray

    @field_validator("frequencies", mode="before")
    @classmethod
    def as_float_array(cls, v) -> np.ndarray:
        return np.asarray(v, dtype=float)

    @field_validator("s11", mode="before")
    @classmethod
    def as_complex_array(cls, v) -> np.ndarray:
        return np.asarray(v, dtype=complex)

    @model_validator(mode="after")
    def check_trace(self) -> "ReflectionTrace":
        if self.frequencies.shape != self.s11.shape or self.frequencies.ndim != 1:
            raise ValueError("frequencies and s11 must be 1D and of equal length")
        if len(self.frequencies) < MIN_TRACE_POINTS:
            raise ValueError(f"trace needs at least {MIN_TRACE_POINTS} points")
        if not (np.all(np.isfinite(self.frequencies)) and np.all(np.isfinite(self.s11))):
            raise ValueError("trace values must be finite")
        if np.any(np.diff(self.frequencies) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        return self


class Background(BaseModel):
    """Complex scale and linear phase delay applied to the bare line shape."""

    amplitude: float
    phase: float = Field(..., description="radians")
    delay: float = Field(..., description="ns")
    reference_frequency: float = Field(..., description="GHz")

    def factor(self, f: np.ndarray) -> np.ndarray:
        return self.amplitude * np.exp(1j * self.phase) * np.exp(-2j * np.pi * (f - self.reference_frequency) * self.delay)


class ResonatorFitResult(BaseModel):
    """Fitted resonance with background and standard errors."""

    f0: float
    q_int: float
    q_ext: float
    residual_rms: float
    background: Background
    standard_errors: Dict[str, float] = Field(default_factory=dict)


def model_s11(f0: float, q_int: float, q_ext: float, f):
    """Bare single-port reflection; accepts scalar or array frequencies."""
    f = np.asarray(f, dtype=float)
    value = 1.0 - (2.0 / q_ext) / (1.0 / q_int + 1.0 / q_ext + 2j * (f - f0) / f0)
    if value.ndim == 0:
        return complex(value)
    return value


def loaded_q(result: ResonatorFitResult) -> float:
    """Loaded Q, the harmonic combination of internal and external Q."""
    return 1.0 / (1.0 / result.q_int + 1.0 / result.q_ext)


def model_trace(result: ResonatorFitResult, frequencies) -> np.ndarray:
    """Fitted trace including the background."""
    f = np.asarray(frequencies, dtype=float)
    return result.background.factor(f) * model_s11(result.f0, result.q_int, result.q_ext, f)


def _initial_guess(trace: ReflectionTrace) -> np.ndarray:
    f, s = trace.frequencies, trace.s11
    magnitude = np.abs(s)
    dip = int(np.argmin(magnitude))
    if magnitude[dip] >= DIP_FRACTION * np.median(magnitude):
        raise NoResonanceFound(
            f"deepest point {magnitude[dip]:.4f} is not below {DIP_FRACTION} x median |S11|"
        )

    # Delay starts at zero; the edges fix the complex scale
    edge = max(2, len(f) // 20)
    scale = 0.5 * (s[:edge].mean() + s[-edge:].mean())

    normalized = s / scale
    depth = min(abs(normalized[dip]), 0.99)
    absorbed = 1.0 - np.abs(normalized) ** 2
    half = 0.5 * absorbed[dip]
    lo = dip
    while lo > 0 and absorbed[lo - 1] >= half:
        lo -= 1
    hi = dip
    while hi < len(f) - 1 and absorbed[hi + 1] >= half:
        hi += 1
    step = float(np.median(np.diff(f)))
    width = max(f[hi] - f[lo], step)
    f0 = f[dip]
    q_loaded = f0 / width

    # Dip on the near side of the background point means undercoupled
    if normalized[dip].real >= 0.0:
        q_ext = 2.0 * q_loaded / (1.0 - depth)
    else:
        q_ext = 2.0 * q_loaded / (1.0 + depth)
    q_int = 1.0 / max(1.0 / q_loaded - 1.0 / q_ext, 1e-3 / q_loaded)

    if f[-1] - f[0] < MIN_SPAN_LINEWIDTHS * width:
        logger.warning("⚠️ Trace spans fewer than %.0f linewidths; fit may be poorly constrained", MIN_SPAN_LINEWIDTHS)

    logger.debug("Initial guess: f0 %.6f GHz, Q_int %.0f, Q_ext %.0f", f0, q_int, q_ext)
    return np.array([f0, math.log(q_int), math.log(q_ext), scale.real, scale.imag, 0.0])


def fit_reflection(trace: ReflectionTrace, options: Optional[LeastSquaresOptions] = None) -> ResonatorFitResult:
    """
    Least-squares fit of the background-scaled reflection model.

    Parameters are (f0, ln Q_int, ln Q_ext, Re a, Im a, tau) so both quality
    factors stay positive.

    Raises:
        NoResonanceFound: no point deeper than 0.99 x median |S11|, or a fitted
            resonance outside the trace
        NoConvergence: iteration cap reached
    """
    f, s = trace.frequencies, trace.s11
    f_ref = 0.5 * (f[0] + f[-1])
    x0 = _initial_guess(trace)

    def residual_fn(x: np.ndarray):
        f0, ln_qi, ln_qe, a_re, a_im, tau = x
        q_int, q_ext = math.exp(ln_qi), math.exp(ln_qe)
        denominator = 1.0 / q_int + 1.0 / q_ext + 2j * (f - f0) / f0
        coupling = 2.0 / q_ext
        bare = 1.0 - coupling / denominator
        rotation = np.exp(-2j * np.pi * (f - f_ref) * tau)
        scale = complex(a_re, a_im)
        model = scale * rotation * bare

        d_bare = np.zeros((6, len(f)), dtype=complex)
        d_bare[0] = coupling / denominator ** 2 * (-2j * f / f0 ** 2)
        d_bare[1] = coupling / denominator ** 2 * (-1.0 / q_int)
        d_bare[2] = coupling / denominator - coupling / (q_ext * denominator ** 2)
        d_model = scale * rotation * d_bare
        d_model[3] = rotation * bare
        d_model[4] = 1j * rotation * bare
        d_model[5] = -2j * np.pi * (f - f_ref) * model

        diff = model - s
        residuals = np.concatenate([diff.real, diff.imag])
        jacobian = np.concatenate([d_model.real, d_model.imag], axis=1).T
        return residuals, jacobian

    solution = levenberg_marquardt(residual_fn, x0, options)
    f0, ln_qi, ln_qe, a_re, a_im, tau = solution.x
    if not f[0] <= f0 <= f[-1]:
        raise NoResonanceFound(f"fitted resonance {f0:.6f} GHz lies outside the trace")

    q_int, q_ext = math.exp(ln_qi), math.exp(ln_qe)
    sigma = np.sqrt(np.clip(np.diag(solution.covariance()), 0.0, None))
    scale = complex(a_re, a_im)
    result = ResonatorFitResult(
        f0=float(f0),
        q_int=q_int,
        q_ext=q_ext,
        residual_rms=float(np.sqrt(solution.cost / len(f))),
        background=Background(
            amplitude=abs(scale),
            phase=float(np.angle(scale)),
            delay=float(tau),
            reference_frequency=float(f_ref),
        ),
        standard_errors={
            "f0": float(sigma[0]),
            "q_int": float(q_int * sigma[1]),
            "q_ext": float(q_ext * sigma[2]),
        },
    )
    logger.info(
        "✅ Resonator fit: f0 %.6f GHz, Q_int %.0f, Q_ext %.0f (%d iterations)",
        result.f0, result.q_int, result.q_ext, solution.iterations
    )
    return result
