import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.core.exceptions import InvalidStateError, NoiseModelError, NoiseParameterError
from src.data.peres_mermin import build_ideal_state
from src.models.domain import SignMode, StateSpec
from src.models.statistics import NoiseModel
from src.quantum.linalg import DensityOperator, StateVector
from src.services.noise_service import phase_unitary


def closed_form(eta: float, phase: float, v: float):
    """χ and absolute-mode S for measurement visibility, singlet phase and state visibility."""
    c = math.cos(phase)
    chi = 6 * eta**2
    s = v * (eta * (2 + 2 * c + 2 * c**2) + eta**2 * (3 + 3 * c))
    return chi, s


class TestNoiseModel:
    def test_defaults_are_ideal(self):
        assert NoiseModel().is_ideal
        assert NoiseModel.ideal() == NoiseModel()
        assert not NoiseModel(state_white_noise=0.9).is_ideal

    @pytest.mark.parametrize(
        "fields",
        [
            {"state_white_noise": 1.5},
            {"per_measurement_visibility": -0.1},
            {"detection_efficiency": 0.0},
            {"prep_phase_error": 4.0},
            {"dark_counts": 0.1},
        ],
    )
    def test_out_of_range(self, fields):
        with pytest.raises(ValidationError):
            NoiseModel(**fields)


class TestApplyNoise:
    def test_ideal_model_leaves_state_pure(self, noise_service, ideal_rho):
        assert noise_service.apply_noise(NoiseModel()).allclose(ideal_rho)

    def test_zero_visibility_is_maximally_mixed(self, noise_service):
        rho = noise_service.apply_noise(NoiseModel(state_white_noise=0.0))
        assert rho.allclose(DensityOperator.maximally_mixed(16))

    def test_phase_error_rotates_each_singlet(self, noise_service):
        rho = noise_service.apply_noise(NoiseModel(prep_phase_error=0.4))
        assert rho.allclose(build_ideal_state(0.4).density())

    def test_phase_unitary(self):
        u = phase_unitary(0.7)
        np.testing.assert_allclose(u @ u.conj().T, np.eye(16), atol=1e-12)
        assert np.count_nonzero(u - np.diag(np.diag(u))) == 0

    def test_rejects_small_states(self, noise_service):
        small = StateVector(amplitudes=[1, 0])
        with pytest.raises(NoiseModelError):
            noise_service.apply_noise(NoiseModel(), ideal=small)

    def test_rejects_other_types(self, noise_service):
        with pytest.raises(NoiseParameterError):
            noise_service.apply_noise({"state_white_noise": 0.5})


class TestStateSpec:
    def test_ideal_model(self, noise_service):
        spec = noise_service.state_spec(NoiseModel())
        assert spec.description == "ideal"
        assert spec.parameters == {}
        assert spec.qubit_roles[1] == "alice-spatial-mode"

    def test_measurement_noise_keeps_state_ideal(self, noise_service):
        model = NoiseModel(per_measurement_visibility=0.9, detection_efficiency=0.5)
        assert noise_service.state_spec(model).description == "ideal"

    def test_noisy_model(self, noise_service):
        spec = noise_service.state_spec(NoiseModel(state_white_noise=0.9))
        assert spec.description == "noisy"
        assert spec.parameters == {"state_white_noise": 0.9, "prep_phase_error": 0.0}

    def test_prepare_matches_apply_noise(self, noise_service, calibrated):
        spec, rho = noise_service.prepare(calibrated)
        assert spec.parameters["prep_phase_error"] == calibrated.prep_phase_error
        assert rho.allclose(noise_service.apply_noise(calibrated))

    @pytest.mark.parametrize(
        "fields",
        [
            {"description": "ideal", "parameters": {"state_white_noise": 0.9}},
            {"description": "noisy"},
        ],
    )
    def test_inconsistent_description(self, fields):
        with pytest.raises(InvalidStateError):
            StateSpec(**fields)


class TestNoisyCorrelators:
    @pytest.mark.parametrize("eta", [1.0, 0.9, 0.6])
    @pytest.mark.parametrize("phase", [0.0, 0.2603, 0.8])
    @pytest.mark.parametrize("v", [1.0, 0.7])
    def test_closed_form(self, noise_service, eta, phase, v):
        model = NoiseModel(
            per_measurement_visibility=eta, prep_phase_error=phase, state_white_noise=v
        )
        report = noise_service.evaluate(model)
        chi, s = closed_form(eta, phase, v)
        assert report.chi == pytest.approx(chi, abs=1e-9)
        assert report.s == pytest.approx(s, abs=1e-9)
        assert report.omega == pytest.approx(chi + s, abs=1e-9)

    def test_white_noise_threshold_value(self, noise_service):
        report = noise_service.evaluate(NoiseModel(state_white_noise=5 / 6))
        assert report.omega == pytest.approx(16.0)

    def test_state_noise_leaves_chi_maximal(self, noise_service):
        model = NoiseModel(state_white_noise=0.5, prep_phase_error=1.0)
        assert noise_service.evaluate(model).chi == pytest.approx(6.0)

    @pytest.mark.parametrize(
        "parameter, values",
        [
            ("state_white_noise", [1.0, 0.9, 0.75, 0.5]),
            ("per_measurement_visibility", [1.0, 0.95, 0.8, 0.5]),
            ("prep_phase_error", [0.0, 0.2, 0.6, 1.2]),
        ],
    )
    def test_omega_decreases_with_noise(self, noise_service, parameter, values):
        omegas = [
            noise_service.evaluate(NoiseModel(**{parameter: x})).omega for x in values
        ]
        assert all(a > b for a, b in zip(omegas, omegas[1:]))

    def test_fixed_sign_matches_absolute_for_small_phase(self, noise_service):
        model = NoiseModel(prep_phase_error=0.3, per_measurement_visibility=0.95)
        absolute = noise_service.evaluate(model, SignMode.ABSOLUTE)
        fixed = noise_service.evaluate(model, SignMode.FIXED_SIGN)
        assert fixed.s == pytest.approx(absolute.s)

    def test_noisy_no_signaling(self, noise_service, calibrated):
        assert noise_service.no_signaling(calibrated).max_deviation <= 1e-10
