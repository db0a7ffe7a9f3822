"""
Tests for peak extraction and ridge tracking.
"""

import numpy as np
import pytest

from fluxcav.core.exceptions import AmbiguousTracking, EmptyMap, InvalidRange
from fluxcav.services.spectrum_engine import SpectroscopyMap, lorentzian
from fluxcav.services.synth import gen_peak_observations, per_coil_sweeps
from pipeline.ingest import assign_tracks, extract_peaks, label_tracks

PROBE_STEP = 0.001
PROBE = np.round(np.arange(5.0, 6.5 + PROBE_STEP / 2, PROBE_STEP), 6)
CROSSING = [[5.47 + 0.003 * c, 5.53 - 0.003 * c] for c in range(21)]


def ridge_map(centers, fwhm=0.01):
    """Map whose column c holds unit Lorentzians at centers[c]."""
    centers = np.atleast_2d(centers)
    amplitudes = np.zeros((centers.shape[0], len(PROBE)))
    for row, row_centers in enumerate(centers):
        for center in row_centers:
            amplitudes[row] += lorentzian(PROBE, center, fwhm)
    currents = np.linspace(-1.0, 1.0, centers.shape[0]) if centers.shape[0] > 1 else np.zeros(1)
    return SpectroscopyMap(
        coil_index=0,
        bias_currents=currents[:, None],
        probe_frequencies=PROBE,
        amplitudes=amplitudes,
    )


def by_label(peaks):
    labels = {}
    for peak in peaks:
        labels.setdefault(peak.qubit_index, []).append(peak)
    return labels


class TestExtractPeaks:
    """Digitizing maps into peak lists."""

    def test_single_lorentzian(self):
        """An off-grid peak is located within a tenth of a probe step."""
        peaks = extract_peaks(ridge_map([[5.61234]]))
        assert len(peaks) == 1
        assert peaks[0].frequency == pytest.approx(5.61234, abs=0.1 * PROBE_STEP)
        assert peaks[0].qubit_index == -1

    def test_three_ridges(self):
        """Three well separated ridges give three peaks per column, ascending."""
        columns = [[5.2 + 0.002 * c, 5.6, 6.0 - 0.002 * c] for c in range(11)]
        peaks = extract_peaks(ridge_map(columns))
        assert len(peaks) == 33
        for c in range(11):
            found = [p.frequency for p in peaks[3 * c:3 * c + 3]]
            np.testing.assert_allclose(found, sorted(columns[c]), atol=0.1 * PROBE_STEP)

    def test_min_separation(self):
        """Of two peaks closer than the minimum separation only the taller survives."""
        m = ridge_map([[5.5, 5.51]], fwhm=0.002)
        m.amplitudes[0] += 0.5 * lorentzian(PROBE, 5.51, 0.002)
        peaks = extract_peaks(m, min_separation=0.02)
        assert [round(p.frequency, 3) for p in peaks] == [5.51]
        assert len(extract_peaks(m, min_separation=0.005)) == 2

    def test_threshold(self):
        """Peaks below the threshold fraction of the column maximum are ignored."""
        m = ridge_map([[5.5]])
        m.amplitudes[0] += 0.2 * lorentzian(PROBE, 6.0, 0.01)
        assert len(extract_peaks(m, threshold=0.3)) == 1
        assert len(extract_peaks(m, threshold=0.1)) == 2

    def test_all_zero(self):
        """A flat map has no peaks."""
        m = ridge_map([[5.5]] * 4)
        m.amplitudes[:] = 0.0
        assert extract_peaks(m) == []

    def test_empty_map(self):
        """A map without bias points is rejected."""
        m = SpectroscopyMap(
            coil_index=0,
            bias_currents=np.zeros((0, 1)),
            probe_frequencies=PROBE,
            amplitudes=np.zeros((0, len(PROBE))),
        )
        with pytest.raises(EmptyMap):
            extract_peaks(m)

    @pytest.mark.parametrize("threshold,separation", [(0.0, 0.02), (1.5, 0.02), (0.3, -1.0)])
    def test_invalid_parameters(self, threshold, separation):
        """Thresholds outside (0, 1] and negative separations are rejected."""
        with pytest.raises(InvalidRange):
            extract_peaks(ridge_map([[5.5]]), threshold=threshold, min_separation=separation)


class TestAssignTracks:
    """Following ridges across bias."""

    def test_three_ridges(self):
        """Three ridges become three tracks labelled by descending mean frequency."""
        columns = [[5.2 + 0.002 * c, 5.6, 6.0 - 0.002 * c] for c in range(11)]
        tracks = by_label(assign_tracks(extract_peaks(ridge_map(columns)), PROBE_STEP))
        assert sorted(tracks) == [0, 1, 2]
        assert all(len(t) == 11 for t in tracks.values())
        assert np.mean([p.frequency for p in tracks[0]]) > 5.9
        assert np.mean([p.frequency for p in tracks[2]]) < 5.3

    def test_crossing_is_truncated(self):
        """Crossing ridges are cut at the crossing, never followed through it."""
        peaks = extract_peaks(ridge_map(CROSSING, fwhm=0.002), min_separation=0.002)
        labelled = assign_tracks(peaks, PROBE_STEP)
        assert len(labelled) < len(peaks)
        first, last = peaks[0].coil_currents, peaks[-1].coil_currents
        for track in by_label(labelled).values():
            biases = [p.coil_currents for p in track]
            assert not (first in biases and last in biases)

    def test_crossing_with_default_extraction(self):
        """Ridges merged by the extractor near a crossing are never followed through it."""
        rising = [5.40 + 0.003 * c for c in range(41)]
        falling = [5.60 - 0.003 * c for c in range(41)]
        m = ridge_map(list(zip(rising, falling)))
        peaks = extract_peaks(m)
        labelled = assign_tracks(peaks, PROBE_STEP)
        assert 0 < len(labelled) < len(peaks)

        column_of = {float(current): c for c, current in enumerate(m.bias_currents[:, 0])}
        for track in by_label(labelled).values():
            columns = [column_of[p.coil_currents.currents[0]] for p in track]
            ridges = {
                int(abs(p.frequency - falling[c]) < abs(p.frequency - rising[c]))
                for p, c in zip(track, columns)
            }
            assert len(ridges) == 1
            assert max(columns) < 33 or min(columns) > 33
        assert max(len(t) for t in by_label(labelled).values()) >= 25

    def test_jump_of_exactly_max_steps(self):
        """Ridges moving exactly the maximum jump per column are still followed."""
        columns = [[5.2 + 0.005 * c, 5.8 - 0.005 * c] for c in range(11)]
        tracks = by_label(assign_tracks(extract_peaks(ridge_map(columns)), PROBE_STEP, max_jump_steps=5))
        assert sorted(tracks) == [0, 1]
        assert all(len(t) == 11 for t in tracks.values())

    def test_strict_raises(self):
        """Strict mode refuses to resolve a crossing."""
        peaks = extract_peaks(ridge_map(CROSSING, fwhm=0.002), min_separation=0.002)
        with pytest.raises(AmbiguousTracking):
            assign_tracks(peaks, PROBE_STEP, strict=True)

    def test_min_length(self):
        """Tracks shorter than min_length are dropped."""
        columns = [[5.5]] * 2
        assert assign_tracks(extract_peaks(ridge_map(columns)), PROBE_STEP, min_length=3) == []
        assert len(assign_tracks(extract_peaks(ridge_map(columns)), PROBE_STEP, min_length=2)) == 2

    def test_sweeps_are_separate_segments(self, system_model):
        """Concatenated coil sweeps never share a track."""
        biases = per_coil_sweeps(3, -0.5, 0.5, 21)
        peaks = [p.model_copy(update={"qubit_index": -1}) for p in gen_peak_observations(system_model, biases)]
        tracks = by_label(assign_tracks(peaks, 0.01))
        assert sorted(tracks) == list(range(9))
        for track in tracks.values():
            assert len(track) == 21
            assert len({tuple(np.flatnonzero(p.coil_currents.currents)) for p in track} - {()}) == 1

    def test_invalid_parameters(self):
        """Probe step must be positive."""
        with pytest.raises(InvalidRange):
            assign_tracks([], 0.0)


class TestLabelTracks:
    """Naming tracks after seed-model qubits."""

    def test_recovers_qubit_labels(self, system_model, truth_calibration):
        """Tracks are mapped back to the qubits that produced them."""
        biases = per_coil_sweeps(3, -0.5, 0.5, 21)
        truth = gen_peak_observations(system_model, biases)
        blind = [p.model_copy(update={"qubit_index": -1}) for p in truth]
        labelled = label_tracks(blind, truth_calibration, 0.01)
        expected = {(tuple(p.coil_currents.currents), p.frequency): p.qubit_index for p in truth}
        assert len(labelled) == len(truth)
        for peak in labelled:
            assert peak.qubit_index == expected[(tuple(peak.coil_currents.currents), peak.frequency)]
