"""
Test configuration and fixtures for fluxcav tests.

Ground truth is a three-qubit, three-coil device: E_c = 0.130 GHz and
zero-flux frequencies of 6.5, 6.2 and 5.9 GHz, with a diagonally dominant
crosstalk matrix.
"""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from fluxcav.config import Settings
from fluxcav.main import app
from fluxcav.services.calibration import CalibrationResult
from fluxcav.services.core_model import FluxMap, TransmonParams
from fluxcav.services.spectrum_engine import CavityMode, SystemModel

E_C = 0.130
F_MAX = (6.5, 6.2, 5.9)
MUTUALS = [
    [0.10, 0.02, 0.01],
    [0.03, 0.12, 0.02],
    [0.01, 0.04, 0.15],
]
OFFSETS = [0.10, -0.05, 0.02]


@pytest.fixture
def test_settings():
    """Provide test settings."""
    return Settings(
        ENVIRONMENT="testing",
        DEBUG=True,
        WORKERS=2
    )


@pytest.fixture
def client():
    """Provide synchronous test client."""
    with TestClient(app) as client:
        yield client


@pytest.fixture
def truth_params():
    """Transmon parameters of the ground-truth device."""
    return [TransmonParams.from_max_frequency(f, E_C) for f in F_MAX]


@pytest.fixture
def truth_flux_map():
    """Crosstalk map of the ground-truth device."""
    return FluxMap(mutuals=MUTUALS, offsets=OFFSETS)


@pytest.fixture
def truth_calibration(truth_flux_map, truth_params):
    """Ground truth packaged as a calibration result."""
    return CalibrationResult(flux_map=truth_flux_map, params=truth_params)


@pytest.fixture
def seed_calibration(truth_params):
    """Fit seed about 10% away from the ground truth."""
    scale = np.array([[1.1, 0.9, 1.1], [0.9, 1.1, 0.9], [1.1, 0.9, 1.1]])
    return CalibrationResult(
        flux_map=FluxMap.from_arrays(np.array(MUTUALS) * scale, np.array(OFFSETS) + 0.02),
        params=[TransmonParams(e_j_max=p.e_j_max * 0.95, e_c=p.e_c) for p in truth_params],
    )


@pytest.fixture
def system_model(truth_flux_map, truth_params):
    """Ground-truth device coupled to a 7.5905 GHz cavity."""
    return SystemModel(
        cavity=CavityMode(f_r=7.5905, kappa_int=7.5905 / 102000, kappa_ext=7.5905 / 100000),
        qubits=truth_params,
        flux_map=truth_flux_map,
        couplings=[0.05, 0.05, 0.05],
    )


@pytest.fixture
def rng():
    """Seeded generator for randomized tests."""
    return np.random.default_rng(20240601)
