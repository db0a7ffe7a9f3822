"""
Crosstalk calibration from spectroscopy peaks.

Fits E_Jmax per qubit, flux offsets and the full mutual inductance matrix to
observed qubit frequencies at known coil currents. E_c is held at the seed
value for every qubit. Because the frequency law is even in flux, each qubit's
row of mutuals and its offset are only defined up to a joint sign; the result
is returned with non-negative diagonal mutuals and offsets wrapped into
[-0.5, 0.5).
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from fluxcav.core.exceptions import (
    DimensionMismatch,
    InsufficientData,
    ValidationException,
    ZeroMutual,
)
from fluxcav.services.core_model import BiasPoint, FluxMap, TransmonParams
from fluxcav.services.optimizer import LeastSquaresOptions, levenberg_marquardt

logger = logging.getLogger(__name__)

NEAR_HALF_FLUX_GHZ = 0.010
NEAR_HALF_FLUX_WEIGHT = 0.01
MIN_FLUX_SPAN = 0.5


class PeakObservation(BaseModel):
    """A qubit line observed at a bias point. qubit_index -1 means unassigned."""

    coil_currents: BiasPoint
    qubit_index: int = -1
    frequency: float
    weight: float = 1.0

    @field_validator("frequency")
    @classmethod
    def check_frequency(cls, v: float) -> float:
        if not (math.isfinite(v) and v > 0):
            raise ValueError("frequency must be positive")
        return v

    @field_validator("weight")
    @classmethod
    def check_weight(cls, v: float) -> float:
        if not (math.isfinite(v) and v > 0):
            raise ValueError("weight must be positive")
        return v

    @field_validator("qubit_index")
    @classmethod
    def check_index(cls, v: int) -> int:
        if v < -1:
            raise ValueError("qubit_index must be >= 0, or -1 when unassigned")
        return v


class CalibrationResult(BaseModel):
    """Fitted flux map and transmon parameters; also used as a fit seed."""

    flux_map: FluxMap
    params: List[TransmonParams]
    residual_rms: float = Field(0.0, ge=0.0, description="RMS frequency residual, GHz")
    covariance_diagonal: List[float] = Field(default_factory=list)
    iterations: int = 0
    cost_history: List[float] = Field(default_factory=list)

    @field_validator("params")
    @classmethod
    def check_params(cls, v: List[TransmonParams]) -> List[TransmonParams]:
        if not v:
            raise ValueError("at least one qubit required")
        return v


class FitOptions(LeastSquaresOptions):
    """Optimizer options plus calibration-specific switches."""

    freeze_josephson: bool = False
    allow_underdetermined: bool = False


class _ObservationArrays(BaseModel):
    """Observations unpacked into aligned arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    currents: np.ndarray
    qubit: np.ndarray
    frequency: np.ndarray
    weight: np.ndarray

    @classmethod
    def from_observations(cls, observations: Sequence[PeakObservation], n_qubits: int, n_coils: int) -> "_ObservationArrays":
        for obs in observations:
            if len(obs.coil_currents.currents) != n_coils:
                raise DimensionMismatch("observation bias size does not match coil count", expected=n_coils, actual=len(obs.coil_currents.currents))
            if not 0 <= obs.qubit_index < n_qubits:
                raise ValidationException(
                    f"observation qubit_index {obs.qubit_index} outside 0..{n_qubits - 1}",
                    details={"qubit_index": obs.qubit_index},
                )
        return cls(
            currents=np.array([o.coil_currents.currents for o in observations], dtype=float).reshape(-1, n_coils),
            qubit=np.array([o.qubit_index for o in observations], dtype=int),
            frequency=np.array([o.frequency for o in observations], dtype=float),
            weight=np.array([o.weight for o in observations], dtype=float),
        )


def _evaluate(
    e_j: np.ndarray,
    e_c: np.ndarray,
    offsets: np.ndarray,
    mutuals: np.ndarray,
    data: _ObservationArrays
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Model frequencies with their derivatives by E_J and by flux."""
    q = data.qubit
    flux = offsets[q] + np.einsum("kj,kj->k", mutuals[q], data.currents)
    shifted = np.sqrt(e_j[q] * np.abs(np.cos(np.pi * flux)) * e_c[q])
    model = shifted - e_c[q]
    d_ej = shifted / (2.0 * e_j[q])
    d_flux = -0.5 * np.pi * shifted * np.tan(np.pi * flux)
    return model, d_ej, d_flux


def _jacobian(
    d_ej: np.ndarray,
    d_flux: np.ndarray,
    data: _ObservationArrays,
    n_qubits: int,
    n_coils: int,
    freeze_josephson: bool
) -> np.ndarray:
    """Jacobian of the model over (E_J..., offsets..., mutuals row-major)."""
    k = np.arange(len(data.qubit))
    q = data.qubit
    columns = 2 * n_qubits + n_qubits * n_coils
    jac = np.zeros((len(k), columns))
    jac[k, q] = d_ej
    jac[k, n_qubits + q] = d_flux
    for j in range(n_coils):
        jac[k, 2 * n_qubits + q * n_coils + j] = d_flux * data.currents[:, j]
    if freeze_josephson:
        jac = jac[:, n_qubits:]
    return jac


def _split(x: np.ndarray, fixed_e_j: np.ndarray, n_qubits: int, n_coils: int, freeze_josephson: bool):
    if freeze_josephson:
        x = np.concatenate([fixed_e_j, x])
    e_j = x[:n_qubits]
    offsets = x[n_qubits:2 * n_qubits]
    mutuals = x[2 * n_qubits:].reshape(n_qubits, n_coils)
    return e_j, offsets, mutuals


def _seed_vector(seed: CalibrationResult) -> np.ndarray:
    e_j = np.array([p.e_j_max for p in seed.params])
    return np.concatenate([e_j, seed.flux_map.offset_vector, seed.flux_map.matrix.ravel()])


def residual_jacobian(result: CalibrationResult, observations: Sequence[PeakObservation]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Residuals f_observed - f_model and their analytic Jacobian over
    (E_Jmax per qubit, offsets, mutuals row-major).
    """
    n, m = result.flux_map.n_qubits, result.flux_map.n_coils
    data = _ObservationArrays.from_observations(observations, n, m)
    e_c = np.array([p.e_c for p in result.params])
    e_j, offsets, mutuals = _split(_seed_vector(result), np.empty(0), n, m, False)
    model, d_ej, d_flux = _evaluate(e_j, e_c, offsets, mutuals, data)
    return data.frequency - model, -_jacobian(d_ej, d_flux, data, n, m, False)


def model_frequencies(result: CalibrationResult, observations: Sequence[PeakObservation]) -> np.ndarray:
    """Calibrated model frequencies at the observations' bias points."""
    residuals, _ = residual_jacobian(result, observations)
    return np.array([o.frequency for o in observations]) - residuals


def fit_arcs(
    observations: Sequence[PeakObservation],
    initial: CalibrationResult,
    options: Optional[FitOptions] = None
) -> CalibrationResult:
    """
    Least-squares fit of E_Jmax, offsets and mutuals to peak observations.

    Observations predicted by the seed to sit within 10 MHz of the
    half-flux floor (f = -E_c) are down-weighted by 100.

    Raises:
        InsufficientData: no observations, a qubit without data, less than half
            a flux period swept on a qubit's strongest coil, or rank-deficient
            normal equations
        NoConvergence: iteration cap reached
    """
    options = options or FitOptions()
    n, m = initial.flux_map.n_qubits, initial.flux_map.n_coils
    if len(initial.params) != n:
        raise DimensionMismatch("one TransmonParams per qubit required", expected=n, actual=len(initial.params))
    if not observations:
        raise InsufficientData("no observations to fit")

    data = _ObservationArrays.from_observations(observations, n, m)
    e_c = np.array([p.e_c for p in initial.params])
    x_full = _seed_vector(initial)
    freeze = options.freeze_josephson
    fixed_e_j = x_full[:n].copy()

    e_j0, offsets0, mutuals0 = _split(x_full, fixed_e_j, n, m, False)
    seed_model, d_ej0, d_flux0 = _evaluate(e_j0, e_c, offsets0, mutuals0, data)

    for i in range(n):
        mask = data.qubit == i
        if not mask.any():
            raise InsufficientData(f"no observations for qubit {i}", {"qubit": i})
        if options.allow_underdetermined:
            continue
        # Arcs must be resolved on each qubit's most strongly coupled coil
        row = np.abs(mutuals0[i])
        for j in np.flatnonzero(row == row.max()):
            span = float(row[j] * np.ptp(data.currents[mask, j]))
            if span < MIN_FLUX_SPAN:
                raise InsufficientData(
                    f"coil {j} moves qubit {i} by only {span:.3f} flux quanta; at least {MIN_FLUX_SPAN} needed",
                    {"qubit": i, "coil": int(j), "flux_span": span},
                )

    weights = data.weight.copy()
    near_floor = np.abs(seed_model + e_c[data.qubit]) < NEAR_HALF_FLUX_GHZ
    weights[near_floor] *= NEAR_HALF_FLUX_WEIGHT
    sqrt_w = np.sqrt(weights)

    seed_jac = _jacobian(d_ej0, d_flux0, data, n, m, freeze) * sqrt_w[:, None]
    rank = int(np.linalg.matrix_rank(seed_jac))
    if rank < seed_jac.shape[1]:
        raise InsufficientData(
            "normal equations are rank deficient",
            {"rank": rank, "parameters": seed_jac.shape[1]},
        )

    def residual_fn(x: np.ndarray):
        e_j, offsets, mutuals = _split(x, fixed_e_j, n, m, freeze)
        model, d_ej, d_flux = _evaluate(e_j, e_c, offsets, mutuals, data)
        residuals = sqrt_w * (data.frequency - model)
        jac = -_jacobian(d_ej, d_flux, data, n, m, freeze) * sqrt_w[:, None]
        return residuals, jac

    x0 = x_full[n:] if freeze else x_full
    logger.info("🔧 Fitting %d observations: %d qubits x %d coils, %d parameters", len(data.qubit), n, m, len(x0))
    solution = levenberg_marquardt(residual_fn, x0, options)

    e_j, offsets, mutuals = _split(solution.x, fixed_e_j, n, m, freeze)
    offsets, mutuals = _fix_gauge(offsets.copy(), mutuals.copy())

    result = CalibrationResult(
        flux_map=FluxMap.from_arrays(mutuals, offsets),
        params=[TransmonParams(e_j_max=float(ej), e_c=float(ec)) for ej, ec in zip(e_j, e_c)],
        covariance_diagonal=np.diag(solution.covariance()).tolist(),
        iterations=solution.iterations,
        cost_history=solution.cost_history,
    )
    residuals, _ = residual_jacobian(result, observations)
    result = result.model_copy(update={"residual_rms": float(np.sqrt(np.mean(residuals ** 2)))})
    logger.info(
        "✅ Calibration converged in %d iterations (%s): residual rms %.3f MHz",
        solution.iterations, solution.reason, result.residual_rms * 1e3
    )
    return result


def _fix_gauge(offsets: np.ndarray, mutuals: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Flip rows with negative diagonal mutual, then wrap offsets into [-0.5, 0.5)."""
    n, m = mutuals.shape
    for i in range(min(n, m)):
        if mutuals[i, i] < 0.0:
            mutuals[i] = -mutuals[i]
            offsets[i] = -offsets[i]
    offsets = offsets - np.floor(offsets + 0.5)
    return offsets, mutuals


def flux_period_in_current(result: CalibrationResult, qubit: int, coil: int) -> float:
    """Coil current (mA) that moves the qubit by one flux quantum."""
    mutual = result.flux_map.mutuals[qubit][coil]
    if mutual == 0.0:
        raise ZeroMutual(qubit, coil)
    return 1.0 / mutual


def refine_map(
    result: CalibrationResult,
    new_observations: Sequence[PeakObservation],
    freeze_josephson: bool = True,
    options: Optional[FitOptions] = None
) -> CalibrationResult:
    """
    Re-fit offsets and mutuals from observations near the working point,
    seeded at a previous calibration.
    """
    if not new_observations:
        raise InsufficientData("no new observations to refine with")
    base = options or FitOptions()
    refined_options = base.model_copy(update={"freeze_josephson": freeze_josephson, "allow_underdetermined": True})
    logger.info("🔧 Refining calibration with %d observations", len(new_observations))
    return fit_arcs(new_observations, result, refined_options)
