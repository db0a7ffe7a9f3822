"""
File formats for the offline pipeline.

CSV holds grids, traces and peak lists; JSON holds structured results. Every
JSON root carries ``version: 1``. Floats are written with full round-trip
precision (CSV_FLOAT_FORMAT, ``.`` decimal separator, LF line endings) and read
back with pandas' round-trip parser, so write -> read -> write reproduces the
first file byte for byte.

Spectroscopy map CSV (long format, bias-major):
    coil, current_0_ma, ..., current_{n-1}_ma, frequency_ghz, amplitude

Peak CSV (qubit -1 means unassigned):
    qubit, current_0_ma, ..., current_{n-1}_ma, frequency_ghz, weight

Reflection trace CSV:
    frequency_ghz, s11_real, s11_imag
"""

import logging
import re
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Type, TypeVar, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from fluxcav.config import get_settings
from fluxcav.core.exceptions import DataFormatException, from_validation_error
from fluxcav.services.calibration import CalibrationResult, PeakObservation
from fluxcav.services.core_model import BiasPoint
from fluxcav.services.resonator_fit import ReflectionTrace, ResonatorFitResult
from fluxcav.services.spectrum_engine import SpectroscopyMap, SystemModel

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
DocumentT = TypeVar("DocumentT", bound=BaseModel)

CURRENT_COLUMN = re.compile(r"^current_(\d+)_ma$")
FORMAT_VERSION = 1


class ModelDocument(BaseModel):
    """System model: cavity, qubits, flux map and couplings."""

    version: Literal[1] = FORMAT_VERSION
    model: SystemModel


class CalibrationDocument(BaseModel):
    """Fitted (or seed) flux map and transmon parameters."""

    version: Literal[1] = FORMAT_VERSION
    calibration: CalibrationResult


class PlannedPoint(BaseModel):
    targets: List[float] = Field(..., description="GHz per qubit")
    currents: List[float] = Field(..., description="mA per coil")


class CurrentsDocument(BaseModel):
    """Bias points produced by the planner, one per target vector."""

    version: Literal[1] = FORMAT_VERSION
    points: List[PlannedPoint]
    held: Optional[Dict[int, float]] = Field(None, description="qubit index -> held frequency, schedules only")
    swept_qubit: Optional[int] = None

    def bias_points(self) -> List[BiasPoint]:
        return [BiasPoint(currents=p.currents) for p in self.points]


class PredictionDocument(BaseModel):
    """Forward-model frequencies for each planned bias point."""

    version: Literal[1] = FORMAT_VERSION
    points: List[PlannedPoint]
    predicted: List[List[float]]
    max_deviation_ghz: float


class ResonatorDocument(BaseModel):
    """Reflection fit plus the derived loaded Q."""

    version: Literal[1] = FORMAT_VERSION
    result: ResonatorFitResult
    q_loaded: float


def read_document(path: PathLike, document_type: Type[DocumentT]) -> DocumentT:
    """Parse a versioned JSON document; bad JSON is a format error, bad content a validation error."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataFormatException(f"Cannot read {path}: {e.strerror or e}", str(path)) from e

    try:
        document = document_type.model_validate_json(text)
    except ValidationError as e:
        if any(err["type"] == "json_invalid" for err in e.errors()):
            raise DataFormatException(f"{path} is not valid JSON", str(path)) from e
        raise from_validation_error(e, f"Invalid {document_type.__name__} in {path}") from e

    logger.debug("📄 Read %s from %s", document_type.__name__, path)
    return document


def write_document(path: PathLike, document: BaseModel) -> None:
    path = Path(path)
    try:
        path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise DataFormatException(f"Cannot write {path}: {e.strerror or e}", str(path)) from e
    logger.info("💾 Wrote %s to %s", type(document).__name__, path)


def _write_frame(path: PathLike, frame: pd.DataFrame) -> None:
    try:
        frame.to_csv(path, index=False, float_format=get_settings().CSV_FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        raise DataFormatException(f"Cannot write {path}: {e.strerror or e}", str(path)) from e


def _read_frame(path: PathLike, required: Sequence[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError as e:
        raise DataFormatException(f"File not found: {path}", str(path)) from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataFormatException(f"Cannot parse CSV {path}: {e}", str(path)) from e

    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise DataFormatException(f"{path} is missing columns {missing}", str(path))
    return frame


def _current_columns(frame: pd.DataFrame, path: PathLike) -> List[str]:
    indexed = sorted((int(m.group(1)), c) for c in frame.columns if (m := CURRENT_COLUMN.match(c)))
    if not indexed or [i for i, _ in indexed] != list(range(len(indexed))):
        raise DataFormatException(f"{path} needs current_0_ma .. current_{{n-1}}_ma columns", str(path))
    return [c for _, c in indexed]


def _numeric(frame: pd.DataFrame, columns: Sequence[str], path: PathLike) -> np.ndarray:
    try:
        values = frame[list(columns)].to_numpy(dtype=float)
    except (TypeError, ValueError) as e:
        raise DataFormatException(f"{path} has non-numeric values", str(path)) from e
    if not np.all(np.isfinite(values)):
        raise DataFormatException(f"{path} has non-finite values", str(path))
    return values


def write_map(path: PathLike, spectroscopy_map: SpectroscopyMap) -> None:
    n_bias, n_probe = spectroscopy_map.amplitudes.shape
    frame = pd.DataFrame({"coil": np.full(n_bias * n_probe, spectroscopy_map.coil_index, dtype=int)})
    for k in range(spectroscopy_map.n_coils):
        frame[f"current_{k}_ma"] = np.repeat(spectroscopy_map.bias_currents[:, k], n_probe)
    frame["frequency_ghz"] = np.tile(spectroscopy_map.probe_frequencies, n_bias)
    frame["amplitude"] = spectroscopy_map.amplitudes.reshape(-1)
    _write_frame(path, frame)
    logger.info("💾 Wrote %d x %d map to %s", n_bias, n_probe, path)


def read_map(path: PathLike) -> SpectroscopyMap:
    frame = _read_frame(path, ["coil", "frequency_ghz", "amplitude"])
    if frame.empty:
        raise DataFormatException(f"{path} has no rows", str(path))
    currents = _current_columns(frame, path)

    coils = frame["coil"].unique()
    if len(coils) != 1:
        raise DataFormatException(f"{path} mixes sweeps of several coils", str(path))

    probe = pd.unique(frame["frequency_ghz"])
    n_probe = len(probe)
    if len(frame) % n_probe:
        raise DataFormatException(f"{path} is not a complete bias x probe grid", str(path))
    n_bias = len(frame) // n_probe

    frequencies = _numeric(frame, ["frequency_ghz"], path)[:, 0]
    if not np.array_equal(frequencies, np.tile(np.asarray(probe, dtype=float), n_bias)):
        raise DataFormatException(f"{path} probe frequencies differ between bias points", str(path))
    bias = _numeric(frame, currents, path).reshape(n_bias, n_probe, len(currents))
    if np.any(bias != bias[:, :1, :]):
        raise DataFormatException(f"{path} currents change within a bias point", str(path))

    try:
        return SpectroscopyMap(
            coil_index=int(coils[0]),
            bias_currents=np.ascontiguousarray(bias[:, 0, :]),
            probe_frequencies=np.asarray(probe, dtype=float),
            amplitudes=_numeric(frame, ["amplitude"], path)[:, 0].reshape(n_bias, n_probe),
        )
    except ValidationError as e:
        raise DataFormatException(f"{path}: {e.errors()[0]['msg']}", str(path)) from e


def write_peaks(path: PathLike, peaks: Sequence[PeakObservation], n_coils: Optional[int] = None) -> None:
    """Peak list CSV; n_coils sets the current columns when the list is empty."""
    if n_coils is None:
        if not peaks:
            raise DataFormatException("Cannot infer coil count for an empty peak list", str(path))
        n_coils = len(peaks[0].coil_currents.currents)
    frame = pd.DataFrame({"qubit": np.array([p.qubit_index for p in peaks], dtype=int)})
    currents = np.array([p.coil_currents.currents for p in peaks], dtype=float).reshape(len(peaks), n_coils)
    for k in range(n_coils):
        frame[f"current_{k}_ma"] = currents[:, k]
    frame["frequency_ghz"] = np.array([p.frequency for p in peaks], dtype=float)
    frame["weight"] = np.array([p.weight for p in peaks], dtype=float)
    _write_frame(path, frame)
    logger.info("💾 Wrote %d peaks to %s", len(peaks), path)


def read_peaks(path: PathLike) -> List[PeakObservation]:
    frame = _read_frame(path, ["qubit", "frequency_ghz", "weight"])
    currents = _current_columns(frame, path)
    values = _numeric(frame, ["qubit", *currents, "frequency_ghz", "weight"], path)
    try:
        return [
            PeakObservation(
                coil_currents=BiasPoint(currents=row[1:-2].tolist()),
                qubit_index=int(row[0]),
                frequency=float(row[-2]),
                weight=float(row[-1]),
            )
            for row in values
        ]
    except ValidationError as e:
        raise from_validation_error(e, f"Invalid peak in {path}") from e


def write_trace(path: PathLike, trace: ReflectionTrace) -> None:
    frame = pd.DataFrame({
        "frequency_ghz": trace.frequencies,
        "s11_real": trace.s11.real,
        "s11_imag": trace.s11.imag,
    })
    _write_frame(path, frame)
    logger.info("💾 Wrote %d-point trace to %s", len(trace.frequencies), path)


def read_trace(path: PathLike) -> ReflectionTrace:
    frame = _read_frame(path, ["frequency_ghz", "s11_real", "s11_imag"])
    values = _numeric(frame, ["frequency_ghz", "s11_real", "s11_imag"], path)
    try:
        return ReflectionTrace(frequencies=values[:, 0], s11=values[:, 1] + 1j * values[:, 2])
    except ValidationError as e:
        raise DataFormatException(f"{path}: {e.errors()[0]['msg']}", str(path)) from e
