"""
Digitize spectroscopy maps into peak lists and follow ridges across bias.

Peaks are local maxima of each bias column above a fraction of the column
maximum, thinned to a minimum frequency separation and refined by a 3-point
parabola. Tracks continue from column to column towards the nearest peak
within a maximum jump of the track's linear extrapolation. Whenever a track
has more than one way to continue, or loses its peak right next to another
ridge, the tracks involved end there and the contested peaks are
dropped until the ridges separate again: near crossings tracks are truncated
rather than guessed.
"""

import logging
from itertools import groupby
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from fluxcav.config import get_settings
from fluxcav.core.exceptions import AmbiguousTracking, EmptyMap, InvalidRange
from fluxcav.services.calibration import CalibrationResult, PeakObservation
from fluxcav.services.core_model import BiasPoint, predicted_frequencies
from fluxcav.services.spectrum_engine import SpectroscopyMap

logger = logging.getLogger(__name__)

Column = Tuple[np.ndarray, List[PeakObservation]]


def _column_peaks(amplitude: np.ndarray, probe: np.ndarray, threshold: float, min_separation: float) -> List[float]:
    if len(amplitude) < 3:
        return []
    top = float(amplitude.max())
    if not top > 0.0:
        return []

    inner = amplitude[1:-1]
    is_peak = (inner > amplitude[:-2]) & (inner >= amplitude[2:]) & (inner >= threshold * top)
    candidates = np.flatnonzero(is_peak) + 1

    kept: List[int] = []
    for k in candidates[np.argsort(-amplitude[candidates], kind="stable")]:
        if all(abs(probe[k] - probe[j]) >= min_separation for j in kept):
            kept.append(int(k))

    refined = []
    for k in kept:
        left, mid, right = amplitude[k - 1], amplitude[k], amplitude[k + 1]
        curvature = left - 2.0 * mid + right
        delta = 0.5 * (left - right) / curvature if curvature < 0.0 else 0.0
        delta = min(max(delta, -0.5), 0.5)
        step = probe[k + 1] - probe[k] if delta >= 0.0 else probe[k] - probe[k - 1]
        refined.append(float(probe[k] + delta * step))
    return sorted(refined)


def extract_peaks(
    spectroscopy_map: SpectroscopyMap,
    threshold: Optional[float] = None,
    min_separation: Optional[float] = None
) -> List[PeakObservation]:
    """
    Unassigned peak observations from a spectroscopy map, bias-major and
    ascending in frequency within each bias point.

    Args:
        spectroscopy_map: Map to digitize
        threshold: Fraction of each column's maximum a peak must reach
        min_separation: Minimum distance between peaks of one column, GHz

    Raises:
        EmptyMap: map without bias or probe points
        InvalidRange: threshold outside (0, 1] or negative separation
    """
    settings = get_settings()
    threshold = settings.PEAK_THRESHOLD if threshold is None else threshold
    min_separation = settings.PEAK_MIN_SEPARATION_GHZ if min_separation is None else min_separation
    if not 0.0 < threshold <= 1.0 or min_separation < 0.0:
        raise InvalidRange("threshold must lie in (0, 1] and min_separation must be non-negative",
                           {"threshold": threshold, "min_separation": min_separation})
    if spectroscopy_map.amplitudes.size == 0:
        raise EmptyMap()

    probe = spectroscopy_map.probe_frequencies
    peaks: List[PeakObservation] = []
    for amplitude, currents in zip(spectroscopy_map.amplitudes, spectroscopy_map.bias_currents):
        bias = BiasPoint(currents=currents.tolist())
        for frequency in _column_peaks(amplitude, probe, threshold, min_separation):
            if frequency > 0.0:
                peaks.append(PeakObservation(coil_currents=bias, frequency=frequency))

    logger.info("📊 Extracted %d peaks from %d bias points", len(peaks), spectroscopy_map.amplitudes.shape[0])
    return peaks


class _Track(BaseModel):
    """One followed ridge; merged tracks are followed but never emitted."""

    columns: List[int] = Field(default_factory=list)
    peaks: List[PeakObservation] = Field(default_factory=list)
    merged: bool = False
    release_count: int = 0

    def add(self, column: int, peak: PeakObservation) -> None:
        self.columns.append(column)
        self.peaks.append(peak)

    def predict(self, column: int) -> float:
        last = self.peaks[-1].frequency
        if len(self.peaks) < 2:
            return last
        previous = self.peaks[-2].frequency
        return last + (last - previous) * (column - self.columns[-1]) / (self.columns[-1] - self.columns[-2])

    @property
    def mean_frequency(self) -> float:
        return float(np.mean([p.frequency for p in self.peaks]))


def _columns(peaks: Sequence[PeakObservation]) -> List[Column]:
    columns = []
    for currents, group in groupby(peaks, key=lambda p: tuple(p.coil_currents.currents)):
        members = sorted(group, key=lambda p: p.frequency)
        columns.append((np.asarray(currents, dtype=float), members))
    return columns


def _segments(columns: List[Column]) -> List[List[int]]:
    """Split columns into runs that step through bias in one direction (one sweep each)."""
    segments: List[List[int]] = []
    current: List[int] = []
    direction: Optional[np.ndarray] = None
    for k, (currents, _) in enumerate(columns):
        if current:
            step = currents - columns[k - 1][0]
            unit = step / np.linalg.norm(step)
            if direction is None:
                direction = unit
            elif not np.allclose(unit, direction, rtol=0.0, atol=1e-9):
                segments.append(current)
                current, direction = [], None
        current.append(k)
    if current:
        segments.append(current)
    return segments


def _ambiguity(strict: bool, column: int, frequency: float) -> None:
    if strict:
        raise AmbiguousTracking(column, frequency)
    logger.debug("Ambiguous continuation at column %d near %.6f GHz", column, frequency)


def _follow(
    columns: List[Column],
    segment: List[int],
    max_jump: float,
    merge_distance: float,
    strict: bool
) -> List[_Track]:
    """
    Follow the ridges of one sweep segment.

    A track that finds no peak of its own while a peak lies within
    merge_distance of its prediction has most likely merged into a
    neighbouring ridge, so that peak is contested too. Contested peaks seed
    merged tracks, which run until the column's peak count is back to what it
    was before the contest and are then discarded with their peaks.
    """
    reach = max_jump * (1.0 + 1e-9)
    active: List[_Track] = []
    finished: List[_Track] = []
    previous_count: Optional[int] = None
    for c in segment:
        members = columns[c][1]
        freqs = np.array([p.frequency for p in members])
        before = len(members) if previous_count is None else previous_count
        previous_count = len(members)
        active = [t for t in active if not (t.merged and len(members) >= t.release_count)]

        claims: Dict[int, List[_Track]] = {}
        contested: Dict[int, int] = {}
        for track in active:
            distance = np.abs(freqs - track.predict(c))
            candidates = np.flatnonzero(distance <= reach)
            if len(candidates) == 1:
                claims.setdefault(int(candidates[0]), []).append(track)
                continue
            finished.append(track)
            if len(candidates) == 0:
                candidates = np.flatnonzero(distance <= merge_distance)
            if len(candidates) and not track.merged:
                _ambiguity(strict, c, float(freqs[candidates[0]]))
            release = track.release_count if track.merged else before
            for k in candidates:
                contested[int(k)] = max(contested.get(int(k), 0), release)

        survivors: List[_Track] = []
        for k, claimants in claims.items():
            if len(claimants) == 1 and k not in contested:
                claimants[0].add(c, members[k])
                survivors.append(claimants[0])
                continue
            if any(not t.merged for t in claimants):
                _ambiguity(strict, c, float(freqs[k]))
            finished.extend(claimants)
            releases = [t.release_count if t.merged else before for t in claimants]
            contested[k] = max([contested.get(k, 0), *releases])

        for k, peak in enumerate(members):
            if k not in claims or k in contested:
                track = _Track(merged=k in contested, release_count=contested.get(k, 0))
                track.add(c, peak)
                survivors.append(track)
        active = survivors

    return [t for t in finished + active if not t.merged]


def _build_tracks(
    peaks: Sequence[PeakObservation],
    probe_step: float,
    max_jump_steps: Optional[int],
    min_length: Optional[int],
    min_separation: Optional[float],
    strict: bool
) -> List[_Track]:
    settings = get_settings()
    min_separation = settings.PEAK_MIN_SEPARATION_GHZ if min_separation is None else min_separation
    max_jump_steps = settings.TRACK_MAX_JUMP_STEPS if max_jump_steps is None else max_jump_steps
    min_length = settings.TRACK_MIN_LENGTH if min_length is None else min_length
    if not probe_step > 0.0 or max_jump_steps < 1 or min_length < 1 or min_separation < 0.0:
        raise InvalidRange("probe_step must be positive, min_separation non-negative; max_jump_steps and min_length at least 1",
                           {"probe_step": probe_step, "max_jump_steps": max_jump_steps,
                            "min_length": min_length, "min_separation": min_separation})

    columns = _columns(peaks)
    tracks: List[_Track] = []
    max_jump = max_jump_steps * probe_step
    for segment in _segments(columns):
        tracks.extend(_follow(columns, segment, max_jump, min_separation + max_jump, strict))

    kept = [t for t in tracks if len(t.peaks) >= min_length]
    logger.debug("Kept %d of %d tracks (min length %d)", len(kept), len(tracks), min_length)
    return kept


def assign_tracks(
    peaks: Sequence[PeakObservation],
    probe_step: float,
    max_jump_steps: Optional[int] = None,
    min_length: Optional[int] = None,
    strict: bool = False,
    min_separation: Optional[float] = None
) -> List[PeakObservation]:
    """
    Label peaks by ridge.

    Peaks must be grouped by bias point in sweep order, as extract_peaks
    returns them; concatenated sweeps of different coils are split
    automatically. Tracks are labelled 0..K-1 by mean frequency, highest
    first. Peaks that end up in no track (contested, or in tracks shorter
    than min_length) are left out.

    min_separation should match the one the peaks were extracted with
    (default PEAK_MIN_SEPARATION_GHZ): ridges closer than that show up as a
    single peak, and tracks meeting there are cut until the ridges separate.

    Raises:
        AmbiguousTracking: with strict=True, at the first contested peak
    """
    tracks = _build_tracks(peaks, probe_step, max_jump_steps, min_length, min_separation, strict)
    tracks.sort(key=lambda t: t.mean_frequency, reverse=True)

    labelled: List[Tuple[int, PeakObservation]] = []
    for label, track in enumerate(tracks):
        for column, peak in zip(track.columns, track.peaks):
            labelled.append((column, peak.model_copy(update={"qubit_index": label})))
    labelled.sort(key=lambda item: (item[0], item[1].frequency))

    logger.info("✅ Assigned %d of %d peaks to %d tracks", len(labelled), len(peaks), len(tracks))
    return [peak for _, peak in labelled]


def label_tracks(
    peaks: Sequence[PeakObservation],
    seed: CalibrationResult,
    probe_step: float,
    max_jump_steps: Optional[int] = None,
    min_length: Optional[int] = None,
    min_separation: Optional[float] = None
) -> List[PeakObservation]:
    """Track the peaks, then give each track the seed qubit whose frequency curve it follows most closely."""
    tracks = _build_tracks(peaks, probe_step, max_jump_steps, min_length, min_separation, strict=False)

    labelled: List[Tuple[int, PeakObservation]] = []
    for track in tracks:
        observed = np.array([p.frequency for p in track.peaks])
        model = np.array([predicted_frequencies(seed.flux_map, seed.params, p.coil_currents) for p in track.peaks])
        distance = np.mean(np.abs(model - observed[:, None]), axis=0)
        qubit = int(np.argmin(distance))
        logger.debug("Track at %.4f GHz -> qubit %d (mean distance %.4f GHz)", track.mean_frequency, qubit, distance[qubit])
        for column, peak in zip(track.columns, track.peaks):
            labelled.append((column, peak.model_copy(update={"qubit_index": qubit})))
    labelled.sort(key=lambda item: (item[0], item[1].frequency))

    logger.info("✅ Labelled %d of %d peaks from %d tracks against the seed model", len(labelled), len(peaks), len(tracks))
    return [peak for _, peak in labelled]
