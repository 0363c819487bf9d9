"""Shared fixtures for the simulator test suite."""

import numpy as np
import pytest

from src.data.peres_mermin import build_ideal_state
from src.quantum.linalg import DensityOperator
from src.services.bounds_service import BoundsService
from src.services.calibration_service import CalibrationService, calibrated_model
from src.services.measurement_service import SequentialMeasurementService
from src.services.noise_service import NoiseService
from src.services.sampling_service import SamplingService


@pytest.fixture(scope="session")
def ideal_state():
    return build_ideal_state()


@pytest.fixture(scope="session")
def ideal_rho(ideal_state):
    return DensityOperator.from_state_vector(ideal_state)


@pytest.fixture(scope="session")
def engine():
    return SequentialMeasurementService()


@pytest.fixture(scope="session")
def noise_service():
    return NoiseService()


@pytest.fixture(scope="session")
def bounds_service():
    return BoundsService(partitions=4)


@pytest.fixture(scope="session")
def sampling_service(noise_service):
    return SamplingService(noise_service, workers=4)


@pytest.fixture(scope="session")
def calibration_service(noise_service):
    return CalibrationService(noise_service=noise_service)


@pytest.fixture(scope="session")
def calibrated():
    return calibrated_model()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
