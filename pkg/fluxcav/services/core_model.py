"""
Transmon flux tuning and the coil-to-flux crosstalk map.

Frequencies and energies are in GHz (h = 1), flux in units of the flux
quantum, coil currents in mA. The frequency law is

    f = (E_Jmax * |cos(pi * flux)| * E_c) ** 0.5 - E_c

and the flux threading qubit i is offsets[i] + sum_j mutuals[i][j] * I_j.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from fluxcav.config import get_settings
from fluxcav.core.exceptions import (
    DimensionMismatch,
    InvalidRange,
    SingularMatrix,
    TargetUnreachable,
)

logger = logging.getLogger(__name__)

FluxLike = Union[float, np.ndarray]


class TransmonParams(BaseModel):
    """Per-qubit energies defining the flux-to-frequency map."""

    model_config = ConfigDict(frozen=True)

    e_j_max: float = Field(..., description="Maximum Josephson energy in GHz")
    e_c: float = Field(..., description="Charging energy in GHz")

    @model_validator(mode="after")
    def check_transmon_regime(self) -> "TransmonParams":
        if not (self.e_j_max > 0 and self.e_c > 0):
            raise ValueError("e_j_max and e_c must be positive")
        if self.e_j_max <= self.e_c:
            raise ValueError("e_j_max must exceed e_c (transmon regime)")
        return self

    @classmethod
    def from_max_frequency(cls, f_max: float, e_c: float) -> "TransmonParams":
        """Params whose zero-flux frequency is f_max."""
        return cls(e_j_max=(f_max + e_c) ** 2 / e_c, e_c=e_c)


class FluxMap(BaseModel):
    """Mutual inductances (flux quanta per mA) and flux offsets per qubit."""

    model_config = ConfigDict(frozen=True)

    mutuals: List[List[float]] = Field(..., description="n_qubits x n_coils, Phi0 per mA")
    offsets: List[float] = Field(..., description="Flux offset per qubit, Phi0")

    @model_validator(mode="after")
    def check_dimensions(self) -> "FluxMap":
        if not self.mutuals:
            raise ValueError("mutuals must have at least one row")
        n_coils = len(self.mutuals[0])
        if n_coils == 0 or any(len(row) != n_coils for row in self.mutuals):
            raise ValueError("mutuals rows must be non-empty and of equal length")
        if len(self.offsets) != len(self.mutuals):
            raise ValueError(
                f"offsets has {len(self.offsets)} entries for {len(self.mutuals)} qubits"
            )
        if not np.all(np.isfinite(self.matrix)) or not np.all(np.isfinite(self.offset_vector)):
            raise ValueError("flux map entries must be finite")
        return self

    @property
    def n_qubits(self) -> int:
        return len(self.mutuals)

    @property
    def n_coils(self) -> int:
        return len(self.mutuals[0])

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.mutuals, dtype=float)

    @property
    def offset_vector(self) -> np.ndarray:
        return np.asarray(self.offsets, dtype=float)

    @classmethod
    def from_arrays(cls, mutuals: np.ndarray, offsets: np.ndarray) -> "FluxMap":
        return cls(
            mutuals=np.asarray(mutuals, dtype=float).tolist(),
            offsets=np.asarray(offsets, dtype=float).tolist(),
        )

    def condition_number(self) -> float:
        """2-norm condition number; inf when the matrix is singular or non-square."""
        if self.n_qubits != self.n_coils:
            return math.inf
        singular = np.linalg.svd(self.matrix, compute_uv=False)
        if singular[-1] == 0.0:
            return math.inf
        return float(singular[0] / singular[-1])


class BiasPoint(BaseModel):
    """Coil currents in mA."""

    model_config = ConfigDict(frozen=True)

    currents: List[float]

    @field_validator("currents")
    @classmethod
    def check_finite(cls, v: List[float]) -> List[float]:
        if not all(math.isfinite(c) for c in v):
            raise ValueError("currents must be finite")
        return v

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.currents, dtype=float)

    @classmethod
    def zeros(cls, n_coils: int) -> "BiasPoint":
        return cls(currents=[0.0] * n_coils)


class CrosstalkReport(BaseModel):
    """Invertibility diagnostics of a square flux map."""

    singular_values: List[float]
    condition_number: Optional[float] = Field(None, description="None when singular")
    normalized_crosstalk: List[List[Optional[float]]] = Field(
        ..., description="M_ij / M_ii per row; None where M_ii is zero"
    )
    distinct_couplings: bool


def transmon_frequency(params: TransmonParams, flux: FluxLike) -> FluxLike:
    """
    Qubit frequency in GHz at the given flux (scalar or array).

    Total: near half-integer flux the result drops to -e_c and is returned raw.
    """
    value = np.sqrt(params.e_j_max * np.abs(np.cos(np.pi * np.asarray(flux, dtype=float))) * params.e_c) - params.e_c
    if np.ndim(value) == 0:
        return float(value)
    return value


def max_frequency(params: TransmonParams) -> float:
    """Zero-flux (sweet spot) frequency."""
    return math.sqrt(params.e_j_max * params.e_c) - params.e_c


def flux_for_frequency(params: TransmonParams, f: float, qubit: Optional[int] = None) -> float:
    """
    Principal-branch flux in [0, 0.5] at which the qubit sits at frequency f.

    Raises:
        TargetUnreachable: f above the sweet spot or below -e_c
    """
    f_max = max_frequency(params)
    if not math.isfinite(f) or f > f_max or f < -params.e_c:
        raise TargetUnreachable(f, -params.e_c, f_max, qubit=qubit)
    ratio = (f + params.e_c) ** 2 / (params.e_j_max * params.e_c)
    return math.acos(min(1.0, max(0.0, ratio))) / math.pi


def fluxes_from_currents(flux_map: FluxMap, bias: BiasPoint) -> np.ndarray:
    """Flux per qubit: offsets + mutuals @ currents."""
    if len(bias.currents) != flux_map.n_coils:
        raise DimensionMismatch(
            "bias point size does not match coil count",
            expected=flux_map.n_coils,
            actual=len(bias.currents),
        )
    return flux_map.offset_vector + flux_map.matrix @ bias.vector


def predicted_frequencies(
    flux_map: FluxMap,
    params_per_qubit: Sequence[TransmonParams],
    bias: BiasPoint
) -> np.ndarray:
    """Bare qubit frequencies at a bias point."""
    if len(params_per_qubit) != flux_map.n_qubits:
        raise DimensionMismatch(
            "one TransmonParams per qubit required",
            expected=flux_map.n_qubits,
            actual=len(params_per_qubit),
        )
    fluxes = fluxes_from_currents(flux_map, bias)
    return np.array([transmon_frequency(p, phi) for p, phi in zip(params_per_qubit, fluxes)])


def crosstalk_report(flux_map: FluxMap, condition_limit: Optional[float] = None) -> CrosstalkReport:
    """Singular values, condition number and normalized crosstalk of a flux map."""
    limit = condition_limit if condition_limit is not None else get_settings().CONDITION_LIMIT
    matrix = flux_map.matrix
    singular = np.linalg.svd(matrix, compute_uv=False)
    condition = flux_map.condition_number()

    normalized: List[List[Optional[float]]] = []
    for i, row in enumerate(matrix):
        diagonal = row[i] if i < flux_map.n_coils else 0.0
        normalized.append([float(m / diagonal) if diagonal != 0.0 else None for m in row])

    return CrosstalkReport(
        singular_values=singular.tolist(),
        condition_number=condition if math.isfinite(condition) else None,
        normalized_crosstalk=normalized,
        distinct_couplings=condition <= limit,
    )


def currents_for_targets(
    flux_map: FluxMap,
    params_per_qubit: Sequence[TransmonParams],
    targets: Sequence[float],
    condition_limit: Optional[float] = None
) -> BiasPoint:
    """
    Coil currents that put every qubit at its target frequency.

    Each qubit takes the principal-branch flux whose sign keeps it closest to
    its own offset (ties go to the positive branch); the linear system
    mutuals @ I = flux - offsets is then solved directly.

    Raises:
        DimensionMismatch: non-square map or wrong list lengths
        SingularMatrix: condition number above the limit
        TargetUnreachable: a target outside [0, f_max] for its qubit
    """
    limit = condition_limit if condition_limit is not None else get_settings().CONDITION_LIMIT
    n = flux_map.n_qubits
    if flux_map.n_coils != n:
        raise DimensionMismatch("current planning needs as many coils as qubits", expected=n, actual=flux_map.n_coils)
    if len(params_per_qubit) != n or len(targets) != n:
        raise DimensionMismatch(
            "one TransmonParams and one target per qubit required",
            expected=n,
            actual=[len(params_per_qubit), len(targets)],
        )

    condition = flux_map.condition_number()
    if not condition <= limit:
        raise SingularMatrix(condition, limit)

    offsets = flux_map.offset_vector
    fluxes = np.empty(n)
    for i, (params, target) in enumerate(zip(params_per_qubit, targets)):
        if target < 0.0:
            raise TargetUnreachable(target, 0.0, max_frequency(params), qubit=i)
        phi = flux_for_frequency(params, target, qubit=i)
        branch = round(offsets[i])
        positive, negative = branch + phi, branch - phi
        # Ties resolve to the positive branch
        if abs(negative - offsets[i]) < abs(positive - offsets[i]):
            fluxes[i] = negative
        else:
            fluxes[i] = positive

    currents = np.linalg.solve(flux_map.matrix, fluxes - offsets)
    logger.debug("📊 Planned currents %s mA for targets %s GHz", currents, list(targets))
    return BiasPoint(currents=currents.tolist())


def plan_schedule(
    flux_map: FluxMap,
    params_per_qubit: Sequence[TransmonParams],
    held: Dict[int, float],
    swept_qubit: int,
    start: float,
    stop: float,
    points: int,
    condition_limit: Optional[float] = None
) -> List[BiasPoint]:
    """
    Bias points holding some qubits at fixed frequencies while one qubit moves
    linearly from start to stop.

    Every qubit must be either held or swept.
    """
    if points < 2 or start == stop:
        raise InvalidRange("schedule needs at least two distinct points", {"start": start, "stop": stop, "points": points})
    n = flux_map.n_qubits
    expected = set(range(n))
    given = set(held) | {swept_qubit}
    if swept_qubit in held or given != expected:
        raise DimensionMismatch("every qubit must be held or swept exactly once", expected=sorted(expected), actual=sorted(given))

    schedule = []
    for f_swept in np.linspace(start, stop, points):
        targets = [held.get(i, float(f_swept)) for i in range(n)]
        schedule.append(currents_for_targets(flux_map, params_per_qubit, targets, condition_limit))
    logger.info("✅ Planned %d-point schedule for qubit %d (%.4f -> %.4f GHz)", points, swept_qubit, start, stop)
    return schedule
