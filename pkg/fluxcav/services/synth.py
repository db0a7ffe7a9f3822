"""
Seeded synthetic data: spectroscopy maps, reflection traces, peak lists.

Random numbers come from numpy's PCG64 bit generator. Every independent
block of output (a map row, a bias point, a trace) draws from its own
generator seeded by SeedSequence(entropy=seed, spawn_key=(stream, index)),
so results do not depend on how rows are scheduled across threads. Changing
the generator or the stream layout changes every synthetic data set and is
reserved for a major version bump.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from fluxcav.config import get_settings
from fluxcav.core.exceptions import InvalidRange
from fluxcav.services.calibration import PeakObservation
from fluxcav.services.core_model import BiasPoint, predicted_frequencies
from fluxcav.services.resonator_fit import Background, ReflectionTrace, model_s11
from fluxcav.services.spectrum_engine import (
    ProbeRange,
    SpectroscopyMap,
    Sweep,
    SystemModel,
    simulate_map,
)

logger = logging.getLogger(__name__)

STREAM_MAP = 0
STREAM_TRACE = 1
STREAM_PEAKS = 2


class NoiseSpec(BaseModel):
    """Seed and Gaussian noise levels."""

    seed: int = Field(0, ge=0, lt=2 ** 64)
    frequency_jitter_sigma: float = Field(0.0, ge=0.0, description="GHz")
    amplitude_noise_sigma: float = Field(0.0, ge=0.0, description="dimensionless")


def block_generator(seed: int, stream: int, index: int) -> np.random.Generator:
    """PCG64 generator for one independent block of output."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(stream, index))))


def per_coil_sweeps(
    n_coils: int,
    start: float,
    stop: float,
    points: int,
    base: Optional[Sequence[float]] = None
) -> List[BiasPoint]:
    """Bias points sweeping each coil in turn while the others stay at base."""
    biases: List[BiasPoint] = []
    for coil in range(n_coils):
        sweep = Sweep(coil=coil, start=start, stop=stop, points=points, base=list(base) if base is not None else None)
        biases.extend(sweep.bias_points(n_coils))
    return biases


def gen_spectroscopy_map(
    model: SystemModel,
    sweep: Sweep,
    probe_range: ProbeRange,
    noise: NoiseSpec,
    workers: Optional[int] = None
) -> SpectroscopyMap:
    """Simulated map plus per-pixel Gaussian amplitude noise."""
    workers = workers or get_settings().WORKERS
    clean = simulate_map(model, sweep, probe_range, workers=workers)
    sigma = noise.amplitude_noise_sigma
    if sigma == 0.0:
        return clean

    n_rows, n_probe = clean.amplitudes.shape

    def noisy_row(row: int) -> np.ndarray:
        return clean.amplitudes[row] + block_generator(noise.seed, STREAM_MAP, row).normal(0.0, sigma, n_probe)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(noisy_row, range(n_rows)))

    logger.info("🎲 Added amplitude noise sigma=%.3g (seed %d) to %d x %d map", sigma, noise.seed, n_rows, n_probe)
    return clean.model_copy(update={"amplitudes": np.vstack(rows)})


def gen_reflection_trace(
    f0: float,
    q_int: float,
    q_ext: float,
    span: float,
    points: int,
    noise: NoiseSpec,
    background: Optional[Background] = None
) -> ReflectionTrace:
    """Reflection line shape on a uniform grid centred on f0, plus complex Gaussian noise."""
    if not (f0 > 0 and q_int > 0 and q_ext > 0 and span > 0):
        raise InvalidRange("resonator parameters and span must be positive", {"f0": f0, "q_int": q_int, "q_ext": q_ext, "span": span})
    if points < 2:
        raise InvalidRange("trace needs at least two points", {"points": points})

    f = np.linspace(f0 - 0.5 * span, f0 + 0.5 * span, points)
    s11 = model_s11(f0, q_int, q_ext, f)
    if background is not None:
        s11 = background.factor(f) * s11
    sigma = noise.amplitude_noise_sigma
    if sigma > 0.0:
        rng = block_generator(noise.seed, STREAM_TRACE, 0)
        s11 = s11 + sigma * (rng.normal(size=points) + 1j * rng.normal(size=points))
    return ReflectionTrace(frequencies=f, s11=s11)


def gen_peak_observations(
    model: SystemModel,
    bias_list: Sequence[BiasPoint],
    noise: Optional[NoiseSpec] = None
) -> List[PeakObservation]:
    """
    Bare qubit frequencies at each bias point, labelled by qubit, with optional
    Gaussian frequency jitter. Non-positive frequencies are skipped.
    """
    sigma = noise.frequency_jitter_sigma if noise is not None else 0.0
    observations: List[PeakObservation] = []
    skipped = 0
    for index, bias in enumerate(bias_list):
        freqs = predicted_frequencies(model.flux_map, model.qubits, bias)
        if sigma > 0.0:
            freqs = freqs + block_generator(noise.seed, STREAM_PEAKS, index).normal(0.0, sigma, len(freqs))
        for qubit, frequency in enumerate(freqs):
            if frequency <= 0.0:
                skipped += 1
                continue
            observations.append(PeakObservation(coil_currents=bias, qubit_index=qubit, frequency=float(frequency)))
    if skipped:
        logger.debug("Skipped %d non-positive frequencies", skipped)
    return observations
