"""
Tests for the single-excitation cavity-qubit spectrum and simulated maps.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from fluxcav.core.exceptions import DimensionMismatch, InvalidRange, ZeroDetuning
from fluxcav.services.core_model import BiasPoint, FluxMap, TransmonParams, flux_for_frequency, predicted_frequencies
from fluxcav.services.eigensolver import eigh
from fluxcav.services.spectrum_engine import (
    CavityMode,
    ProbeRange,
    Sweep,
    SystemModel,
    build_single_excitation_hamiltonian,
    dispersive_shift,
    effective_exchange,
    lorentzian,
    simulate_map,
    spectrum_slice,
    two_excitation_markers,
)

E_C = 0.130


def parked_model(frequencies, f_r, g, direct_j=None, mutual=0.1):
    """Qubits at their sweet spots for zero current; coil i tunes qubit i only."""
    n = len(frequencies)
    return SystemModel(
        cavity=CavityMode(f_r=f_r),
        qubits=[TransmonParams.from_max_frequency(f, E_C) for f in frequencies],
        flux_map=FluxMap.from_arrays(mutual * np.eye(n), np.zeros(n)),
        couplings=[g] * n,
        direct_j=direct_j or [[0.0] * n for _ in range(n)],
    )


def min_qubit_splitting(model, center, half_width=0.05, points=801):
    """Smallest separation of the two qubit-like lines while coil 0 sweeps around center."""
    best = np.inf
    for current in np.linspace(center - half_width, center + half_width, points):
        lines = spectrum_slice(model, BiasPoint(currents=[current, 0.0])).line_frequencies
        best = min(best, lines[1] - lines[0])
    return best


def crossing_current(params, f_target, mutual=0.1):
    """Coil current at which a qubit parked at its sweet spot is tuned down to f_target."""
    return flux_for_frequency(params, f_target) / mutual


class TestSystemModel:
    """Model validation and defaults."""

    def test_default_couplings(self, truth_flux_map, truth_params):
        """Missing couplings and linewidths take the configured defaults."""
        model = SystemModel(cavity=CavityMode(f_r=7.5), qubits=truth_params, flux_map=truth_flux_map)
        assert model.couplings == [0.05, 0.05, 0.05]
        assert model.qubit_linewidths == [0.005, 0.005, 0.005]
        assert model.direct_j == [[0.0] * 3 for _ in range(3)]

    def test_rejects_asymmetric_exchange(self, truth_flux_map, truth_params):
        """direct_j must be symmetric."""
        j = [[0.0, 0.01, 0.0], [0.02, 0.0, 0.0], [0.0, 0.0, 0.0]]
        with pytest.raises(ValidationError):
            SystemModel(cavity=CavityMode(f_r=7.5), qubits=truth_params, flux_map=truth_flux_map, direct_j=j)

    def test_rejects_negative_coupling(self, truth_flux_map, truth_params):
        """Couplings must be non-negative."""
        with pytest.raises(ValidationError):
            SystemModel(
                cavity=CavityMode(f_r=7.5), qubits=truth_params, flux_map=truth_flux_map,
                couplings=[0.05, -0.01, 0.05],
            )

    def test_rejects_non_positive_cavity(self):
        """Cavity frequency must be positive."""
        with pytest.raises(ValidationError):
            CavityMode(f_r=0.0)


class TestHamiltonian:
    """Construction and exact spectra."""

    def test_layout(self, system_model):
        """Photon first, bare qubit frequencies on the diagonal, g in the first row."""
        bias = BiasPoint(currents=[0.5, -0.5, 1.0])
        h = build_single_excitation_hamiltonian(system_model, bias).values
        assert h.shape == (4, 4)
        assert h[0, 0] == 7.5905
        np.testing.assert_allclose(np.diag(h)[1:].real, predicted_frequencies(system_model.flux_map, system_model.qubits, bias))
        np.testing.assert_allclose(h[0, 1:].real, [0.05, 0.05, 0.05])
        np.testing.assert_array_equal(h, h.conj().T)

    def test_vacuum_rabi_splitting(self):
        """One qubit on resonance splits into f_r +- g."""
        model = parked_model([6.0], f_r=6.0, g=0.05)
        values, _ = eigh(build_single_excitation_hamiltonian(model, BiasPoint(currents=[0.0])))
        np.testing.assert_allclose(values, [5.95, 6.05], atol=1e-12)

    def test_matches_dense_solver(self, system_model):
        """Three qubits: Jacobi eigenvalues agree with LAPACK."""
        h = build_single_excitation_hamiltonian(system_model, BiasPoint(currents=[0.3, -1.2, 0.8]))
        values, _ = eigh(h)
        np.testing.assert_allclose(values, np.linalg.eigvalsh(h.values), atol=1e-10)

    def test_bias_size_mismatch(self, system_model):
        """Bias points must have one current per coil."""
        with pytest.raises(DimensionMismatch):
            build_single_excitation_hamiltonian(system_model, BiasPoint(currents=[0.0]))


class TestDispersiveShift:
    """g^2 / detuning and its exact counterpart."""

    def test_formula(self):
        """g = 0.05 GHz at 1 GHz detuning shifts by 2.5 MHz."""
        assert dispersive_shift(0.05, 1.0) == pytest.approx(0.0025)
        assert dispersive_shift(0.0, 0.7) == 0.0

    def test_zero_detuning(self):
        """On resonance the shift is undefined."""
        with pytest.raises(ZeroDetuning):
            dispersive_shift(0.05, 0.0)

    def test_dressed_cavity_shift(self):
        """Exact cavity shift matches g^2 / (f_r - f_q) within 5% at g / detuning = 0.05."""
        model = parked_model([6.0], f_r=7.0, g=0.05)
        lines = spectrum_slice(model, BiasPoint(currents=[0.0]))
        exact = lines.cavity_frequency_dressed - 7.0
        assert exact == pytest.approx(dispersive_shift(0.05, 1.0), rel=0.05)

    def test_dressed_qubit_line(self):
        """The far-detuned qubit line sits at f_q + g^2 / (f_q - f_r)."""
        model = parked_model([6.0], f_r=7.0, g=0.05)
        lines = spectrum_slice(model, BiasPoint(currents=[0.0]))
        assert len(lines.line_frequencies) == 1
        shift = lines.line_frequencies[0] - 6.0
        assert shift == pytest.approx(dispersive_shift(0.05, -1.0), rel=0.05)


class TestSpectrumSlice:
    """Qubit-like lines, drive weights and widths."""

    def test_decoupled_limit(self, truth_flux_map, truth_params):
        """Without coupling the lines are the bare frequencies with equal weights."""
        model = SystemModel(
            cavity=CavityMode(f_r=7.5905), qubits=truth_params, flux_map=truth_flux_map,
            couplings=[0.0, 0.0, 0.0], qubit_linewidths=[0.004, 0.005, 0.006],
        )
        bias = BiasPoint(currents=[0.2, 0.1, -0.3])
        lines = spectrum_slice(model, bias)
        bare = predicted_frequencies(truth_flux_map, truth_params, bias)
        np.testing.assert_allclose(lines.line_frequencies, np.sort(bare), atol=1e-12)
        np.testing.assert_allclose(lines.line_weights, [1.0 / 3] * 3, atol=1e-12)
        assert lines.cavity_frequency_dressed == pytest.approx(7.5905, abs=1e-12)
        widths = dict(zip(np.round(bare, 9), [0.004, 0.005, 0.006]))
        for f, w in zip(lines.line_frequencies, lines.line_widths):
            assert w == pytest.approx(widths[np.round(f, 9)], abs=1e-12)

    def test_dark_state(self):
        """Two degenerate qubits with equal g: exactly one qubit-like line is dark."""
        model = parked_model([6.195, 6.195], f_r=7.295, g=0.05)
        bias = BiasPoint(currents=[0.0, 0.0])
        lines = spectrum_slice(model, bias)
        assert len(lines.line_weights) == 2
        dark = [w for w in lines.line_weights if w < 1e-12]
        assert len(dark) == 1
        assert max(lines.line_weights) > 0.99

        values, vectors = eigh(build_single_excitation_hamiltonian(model, bias))
        dark_vector = vectors[:, np.argmin(np.abs(values - 6.195))]
        assert abs(dark_vector[0]) < 1e-12
        assert abs(dark_vector[1] + dark_vector[2]) < 1e-12

    def test_weights_bounded(self, system_model):
        """Drive weights lie in [0, 1]."""
        for current in np.linspace(-3.0, 3.0, 13):
            lines = spectrum_slice(system_model, BiasPoint(currents=[current, 0.0, 0.0]))
            assert all(0.0 <= w <= 1.0 + 1e-12 for w in lines.line_weights)


class TestExchange:
    """Cavity-mediated exchange at a two-qubit crossing."""

    G = 0.05
    F_R = 7.295
    F_HELD = 6.195

    def crossing_model(self, direct=0.0):
        return SystemModel(
            cavity=CavityMode(f_r=self.F_R),
            qubits=[TransmonParams.from_max_frequency(6.5, E_C), TransmonParams.from_max_frequency(self.F_HELD, E_C)],
            flux_map=FluxMap(mutuals=[[0.1, 0.0], [0.0, 0.1]], offsets=[0.0, 0.0]),
            couplings=[self.G, self.G],
            direct_j=[[0.0, direct], [direct, 0.0]],
        )

    def test_minimum_splitting(self):
        """Minimum gap equals g^2 (1/D1 + 1/D2) within 10%."""
        model = self.crossing_model()
        center = crossing_current(model.qubits[0], self.F_HELD)
        delta = self.F_HELD - self.F_R
        expected = abs(self.G ** 2 * (2.0 / delta))
        assert min_qubit_splitting(model, center) == pytest.approx(expected, rel=0.10)

    def test_effective_exchange(self):
        """effective_exchange at the crossing is half the splitting."""
        model = self.crossing_model()
        center = crossing_current(model.qubits[0], self.F_HELD)
        exchange = effective_exchange(model, BiasPoint(currents=[center, 0.0]), 0, 1)
        assert exchange == pytest.approx(self.G ** 2 / (self.F_HELD - self.F_R), rel=1e-6)

    def test_direct_coupling_cancels_exchange(self):
        """direct_j = -g^2 / D shrinks the gap at least tenfold."""
        delta = self.F_HELD - self.F_R
        plain = self.crossing_model()
        compensated = self.crossing_model(direct=-self.G ** 2 / delta)
        center = crossing_current(plain.qubits[0], self.F_HELD)
        assert min_qubit_splitting(compensated, center) * 10.0 <= min_qubit_splitting(plain, center)


class TestTwoExcitationMarkers:
    """Frequency-matching condition 2 f_k = f_i + f_j."""

    def test_midpoint_marker(self):
        """A qubit at the mean of two others is flagged."""
        model = parked_model([5.705, 6.195, 5.950], f_r=7.295, g=0.05)
        markers = two_excitation_markers(model, BiasPoint(currents=[0.0, 0.0, 0.0]))
        assert len(markers) == 1
        assert markers[0].qubit == 2
        assert markers[0].partners == (0, 1)
        assert abs(markers[0].detuning) < 1e-9

    def test_no_marker_when_detuned(self):
        """Outside the tolerance nothing is reported."""
        model = parked_model([5.705, 6.195, 5.80], f_r=7.295, g=0.05)
        assert two_excitation_markers(model, BiasPoint(currents=[0.0, 0.0, 0.0])) == []


class TestSimulateMap:
    """Rendered two-tone maps."""

    def test_lorentzian(self):
        """Unit peak and half maximum at half the FWHM."""
        f = np.array([4.99, 5.0, 5.01])
        np.testing.assert_allclose(lorentzian(f, 5.0, 0.02), [0.5, 1.0, 0.5])

    def test_flat_flux_map_gives_flat_ridge(self):
        """A qubit that no coil reaches stays at one frequency."""
        model = SystemModel(
            cavity=CavityMode(f_r=7.5),
            qubits=[TransmonParams.from_max_frequency(6.0, E_C)],
            flux_map=FluxMap(mutuals=[[0.0]], offsets=[0.1]),
            couplings=[0.0],
        )
        result = simulate_map(model, Sweep(coil=0, start=-1.0, stop=1.0, points=11), ProbeRange(start=5.5, stop=6.2, points=701))
        peaks = result.probe_frequencies[np.argmax(result.amplitudes, axis=1)]
        assert np.ptp(peaks) == 0.0

    def test_ridge_follows_frequency_law(self):
        """The brightest pixel per bias point is within half a probe step of the bare frequency."""
        model = SystemModel(
            cavity=CavityMode(f_r=7.5),
            qubits=[TransmonParams.from_max_frequency(6.0, E_C)],
            flux_map=FluxMap(mutuals=[[0.1]], offsets=[0.05]),
            couplings=[0.0],
        )
        probe = ProbeRange(start=4.0, stop=6.2, points=2201)
        result = simulate_map(model, Sweep(coil=0, start=-2.0, stop=2.0, points=21), probe)
        step = result.probe_frequencies[1] - result.probe_frequencies[0]
        for currents, row in zip(result.bias_currents, result.amplitudes):
            bare = predicted_frequencies(model.flux_map, model.qubits, BiasPoint(currents=currents.tolist()))[0]
            assert abs(result.probe_frequencies[np.argmax(row)] - bare) <= 0.5 * step + 1e-12

    def test_grid_shape_and_bias(self, system_model):
        """Rows follow the sweep; other coils stay at the base bias."""
        sweep = Sweep(coil=1, start=-1.0, stop=1.0, points=5, base=[0.2, 0.0, -0.1])
        result = simulate_map(system_model, sweep, ProbeRange(start=5.0, stop=7.0, points=101))
        assert result.amplitudes.shape == (5, 101)
        np.testing.assert_allclose(result.sweep_currents, np.linspace(-1.0, 1.0, 5))
        np.testing.assert_allclose(result.bias_currents[:, 0], 0.2)
        np.testing.assert_allclose(result.bias_currents[:, 2], -0.1)

    def test_one_coil_moves_every_qubit(self, system_model):
        """Crosstalk: sweeping coil 0 shifts all three bare frequencies."""
        start = predicted_frequencies(system_model.flux_map, system_model.qubits, BiasPoint(currents=[-1.0, 0.0, 0.0]))
        stop = predicted_frequencies(system_model.flux_map, system_model.qubits, BiasPoint(currents=[1.0, 0.0, 0.0]))
        assert np.all(np.abs(stop - start) > 1e-3)

    def test_deterministic_across_workers(self, system_model):
        """Output does not depend on the thread count."""
        sweep = Sweep(coil=0, start=-2.0, stop=2.0, points=17)
        probe = ProbeRange(start=5.0, stop=7.0, points=201)
        single = simulate_map(system_model, sweep, probe, workers=1)
        many = simulate_map(system_model, sweep, probe, workers=4)
        np.testing.assert_array_equal(single.amplitudes, many.amplitudes)

    def test_degenerate_ranges(self, system_model):
        """Sweeps and probe ranges need two distinct points."""
        with pytest.raises(InvalidRange):
            simulate_map(system_model, Sweep(coil=0, start=0.0, stop=1.0, points=1), ProbeRange(start=5.0, stop=6.0, points=11))
        with pytest.raises(InvalidRange):
            simulate_map(system_model, Sweep(coil=0, start=0.0, stop=1.0, points=3), ProbeRange(start=6.0, stop=5.0, points=11))

    def test_coil_out_of_range(self, system_model):
        """Sweeping a coil that does not exist raises DimensionMismatch."""
        with pytest.raises(DimensionMismatch):
            simulate_map(system_model, Sweep(coil=3, start=0.0, stop=1.0, points=3), ProbeRange(start=5.0, stop=6.0, points=11))
