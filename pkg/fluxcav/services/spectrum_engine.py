"""
Tavis-Cummings spectra in the single-excitation manifold.

One cavity mode couples to N flux-tunable qubits (coupling g_i) and the
qubits optionally exchange excitations directly (direct_j). The basis is
(one photon, qubit 1 excited, ..., qubit N excited). Two-tone spectroscopy is
rendered as a sum of Lorentzian lines, one per qubit-like eigenstate, with
strength given by the overlap with a drive that is uniform over the qubits.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from fluxcav.config import get_settings
from fluxcav.core.exceptions import DimensionMismatch, InvalidRange, ZeroDetuning
from fluxcav.services.core_model import (
    BiasPoint,
    FluxMap,
    TransmonParams,
    predicted_frequencies,
)
from fluxcav.services.eigensolver import HermitianMatrix, eigh

logger = logging.getLogger(__name__)

QUBIT_LIKE_THRESHOLD = 0.5


class CavityMode(BaseModel):
    """Single cavity mode with internal and external linewidths (GHz)."""

    model_config = ConfigDict(frozen=True)

    f_r: float
    kappa_int: float = 0.0
    kappa_ext: float = 0.0

    @model_validator(mode="after")
    def check_positive(self) -> "CavityMode":
        if self.f_r <= 0:
            raise ValueError("cavity frequency must be positive")
        if self.kappa_int < 0 or self.kappa_ext < 0:
            raise ValueError("cavity linewidths must be non-negative")
        return self


class SystemModel(BaseModel):
    """Cavity, qubits, flux map and couplings; missing couplings take configured defaults."""

    model_config = ConfigDict(frozen=True)

    cavity: CavityMode
    qubits: List[TransmonParams]
    flux_map: FluxMap
    couplings: List[float] = Field(default_factory=list, description="Qubit-cavity g per qubit, GHz")
    direct_j: List[List[float]] = Field(default_factory=list, description="Qubit-qubit exchange, GHz")
    qubit_linewidths: List[float] = Field(default_factory=list, description="FWHM per qubit, GHz")

    @model_validator(mode="before")
    @classmethod
    def fill_defaults(cls, data):
        if not isinstance(data, dict):
            return data
        n = len(data.get("qubits") or [])
        settings = get_settings()
        data = dict(data)
        if not data.get("couplings"):
            data["couplings"] = [settings.DEFAULT_COUPLING_GHZ] * n
        if not data.get("direct_j"):
            data["direct_j"] = [[0.0] * n for _ in range(n)]
        if not data.get("qubit_linewidths"):
            data["qubit_linewidths"] = [settings.DEFAULT_QUBIT_LINEWIDTH_GHZ] * n
        return data

    @model_validator(mode="after")
    def check_consistency(self) -> "SystemModel":
        n = len(self.qubits)
        if n == 0:
            raise ValueError("model needs at least one qubit")
        if self.flux_map.n_qubits != n:
            raise ValueError(f"flux map describes {self.flux_map.n_qubits} qubits, model has {n}")
        if len(self.couplings) != n or len(self.qubit_linewidths) != n:
            raise ValueError("couplings and qubit_linewidths need one entry per qubit")
        if any(g < 0 for g in self.couplings):
            raise ValueError("couplings must be non-negative")
        if any(w <= 0 for w in self.qubit_linewidths):
            raise ValueError("qubit linewidths must be positive")
        j = np.asarray(self.direct_j, dtype=float)
        if j.shape != (n, n):
            raise ValueError(f"direct_j must be {n}x{n}")
        if not np.allclose(j, j.T, rtol=0.0, atol=1e-15) or np.any(np.diag(j) != 0.0):
            raise ValueError("direct_j must be symmetric with zero diagonal")
        return self

    @property
    def n_qubits(self) -> int:
        return len(self.qubits)


class SpectrumSlice(BaseModel):
    """Qubit-like lines at one bias point."""

    line_frequencies: List[float]
    line_weights: List[float]
    line_widths: List[float]
    cavity_frequency_dressed: float


class TwoExcitationMarker(BaseModel):
    """Frequency-matching condition 2 f_qubit = f_i + f_j."""

    qubit: int
    partners: Tuple[int, int]
    detuning: float = Field(..., description="2 f_qubit - (f_i + f_j), GHz")


class Sweep(BaseModel):
    """Linear current sweep of one coil around a base bias."""

    coil: int
    start: float
    stop: float
    points: int
    base: Optional[List[float]] = Field(None, description="Currents of all coils; swept coil entry is overridden")

    def bias_points(self, n_coils: int) -> List[BiasPoint]:
        if not 0 <= self.coil < n_coils:
            raise DimensionMismatch("swept coil index out of range", expected=n_coils, actual=self.coil)
        if self.points < 2 or self.start == self.stop:
            raise InvalidRange("sweep needs at least two distinct points", self.model_dump())
        base = list(self.base) if self.base is not None else [0.0] * n_coils
        if len(base) != n_coils:
            raise DimensionMismatch("base bias size does not match coil count", expected=n_coils, actual=len(base))
        out = []
        for current in np.linspace(self.start, self.stop, self.points):
            currents = list(base)
            currents[self.coil] = float(current)
            out.append(BiasPoint(currents=currents))
        return out


class ProbeRange(BaseModel):
    """Uniform probe-frequency grid."""

    start: float
    stop: float
    points: int

    def frequencies(self) -> np.ndarray:
        if self.points < 2 or not self.start < self.stop:
            raise InvalidRange("probe range needs start < stop and at least two points", self.model_dump())
        return np.linspace(self.start, self.stop, self.points)


class SpectroscopyMap(BaseModel):
    """Response amplitude over (bias point, probe frequency), bias-major."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    coil_index: int
    bias_currents: np.ndarray = Field(..., description="n_bias x n_coils, mA")
    probe_frequencies: np.ndarray = Field(..., description="GHz")
    amplitudes: np.ndarray = Field(..., description="n_bias x n_probe")

    @model_validator(mode="after")
    def check_grid(self) -> "SpectroscopyMap":
        if self.bias_currents.ndim != 2 or self.amplitudes.ndim != 2:
            raise ValueError("bias_currents and amplitudes must be 2D")
        if self.amplitudes.shape != (self.bias_currents.shape[0], self.probe_frequencies.shape[0]):
            raise ValueError("amplitude grid must be |bias| x |probe|")
        if not 0 <= self.coil_index < max(1, self.bias_currents.shape[1]):
            raise ValueError("coil_index out of range")
        if not np.all(np.isfinite(self.amplitudes)):
            raise ValueError("amplitudes must be finite")
        return self

    @property
    def sweep_currents(self) -> np.ndarray:
        return self.bias_currents[:, self.coil_index]

    @property
    def n_coils(self) -> int:
        return self.bias_currents.shape[1]


def build_single_excitation_hamiltonian(model: SystemModel, bias: BiasPoint) -> HermitianMatrix:
    """Hamiltonian in the (photon, qubit_1, ..., qubit_N) basis at a bias point."""
    if len(bias.currents) != model.flux_map.n_coils:
        raise DimensionMismatch("bias point size does not match coil count", expected=model.flux_map.n_coils, actual=len(bias.currents))
    n = model.n_qubits
    h = np.zeros((n + 1, n + 1))
    h[0, 0] = model.cavity.f_r
    h[1:, 1:] = np.asarray(model.direct_j, dtype=float)
    h[np.arange(1, n + 1), np.arange(1, n + 1)] = predicted_frequencies(model.flux_map, model.qubits, bias)
    h[0, 1:] = model.couplings
    h[1:, 0] = model.couplings
    return HermitianMatrix(values=h)


def dispersive_shift(g: float, detuning: float) -> float:
    """Second-order level shift g^2 / detuning."""
    if detuning == 0.0:
        raise ZeroDetuning()
    return g * g / detuning


def effective_exchange(model: SystemModel, bias: BiasPoint, i: int, j: int) -> float:
    """Cavity-mediated plus direct exchange between qubits i and j (GHz)."""
    freqs = predicted_frequencies(model.flux_map, model.qubits, bias)
    delta_i = freqs[i] - model.cavity.f_r
    delta_j = freqs[j] - model.cavity.f_r
    if delta_i == 0.0 or delta_j == 0.0:
        raise ZeroDetuning()
    g = model.couplings
    return 0.5 * g[i] * g[j] * (1.0 / delta_i + 1.0 / delta_j) + model.direct_j[i][j]


def spectrum_slice(model: SystemModel, bias: BiasPoint) -> SpectrumSlice:
    """Qubit-like lines, their symmetric-drive weights and widths, and the dressed cavity."""
    h = build_single_excitation_hamiltonian(model, bias)
    energies, vectors = eigh(h)
    probabilities = np.abs(vectors) ** 2

    n = model.n_qubits
    drive = np.zeros(n + 1)
    drive[1:] = 1.0 / math.sqrt(n)
    overlaps = np.abs(drive @ vectors) ** 2

    qubit_content = probabilities[1:, :].sum(axis=0)
    qubit_like = qubit_content > QUBIT_LIKE_THRESHOLD
    cavity_index = int(np.argmax(probabilities[0, :]))

    kappa = model.cavity.kappa_int + model.cavity.kappa_ext
    widths = np.asarray(model.qubit_linewidths) @ probabilities[1:, :] + kappa * probabilities[0, :]

    return SpectrumSlice(
        line_frequencies=energies[qubit_like].tolist(),
        line_weights=overlaps[qubit_like].tolist(),
        line_widths=widths[qubit_like].tolist(),
        cavity_frequency_dressed=float(energies[cavity_index]),
    )


def two_excitation_markers(model: SystemModel, bias: BiasPoint, tolerance: float = 0.01) -> List[TwoExcitationMarker]:
    """
    Qubits whose doubled frequency matches the sum of two others within tolerance.

    Only the matching condition is reported; no two-excitation dynamics are modelled.
    """
    freqs = predicted_frequencies(model.flux_map, model.qubits, bias)
    markers = []
    for i, j in combinations(range(model.n_qubits), 2):
        for k in range(model.n_qubits):
            if k in (i, j):
                continue
            detuning = 2.0 * freqs[k] - (freqs[i] + freqs[j])
            if abs(detuning) <= tolerance:
                markers.append(TwoExcitationMarker(qubit=k, partners=(i, j), detuning=float(detuning)))
    return markers


def lorentzian(f: np.ndarray, center: float, fwhm: float) -> np.ndarray:
    """Peak-normalized Lorentzian."""
    half = 0.5 * fwhm
    return half * half / ((f - center) ** 2 + half * half)


def _render_row(model: SystemModel, bias: BiasPoint, probe: np.ndarray) -> np.ndarray:
    lines = spectrum_slice(model, bias)
    row = np.zeros_like(probe)
    for center, weight, width in zip(lines.line_frequencies, lines.line_weights, lines.line_widths):
        row += weight * lorentzian(probe, center, width)
    return row


def simulate_map(
    model: SystemModel,
    sweep: Sweep,
    probe_range: ProbeRange,
    workers: Optional[int] = None
) -> SpectroscopyMap:
    """
    Two-tone spectroscopy map over a coil sweep.

    Rows are evaluated independently on a thread pool; output does not depend
    on the worker count.
    """
    biases = sweep.bias_points(model.flux_map.n_coils)
    probe = probe_range.frequencies()
    max_workers = workers or get_settings().WORKERS

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        rows = list(pool.map(lambda bias: _render_row(model, bias, probe), biases))

    logger.info(
        "📊 Simulated map: coil %d, %d bias x %d probe points",
        sweep.coil, len(biases), len(probe)
    )
    return SpectroscopyMap(
        coil_index=sweep.coil,
        bias_currents=np.array([b.currents for b in biases], dtype=float),
        probe_frequencies=probe,
        amplitudes=np.vstack(rows),
    )
