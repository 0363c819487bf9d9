import json

import pytest

from src.core.exceptions import ConfigurationError
from src.models.domain import SignMode
from src.models.schemas import ScenarioMode
from src.services.scenario_service import (
    ScenarioService,
    calibration_failed,
    load_config,
)


@pytest.fixture(scope="module")
def scenario_service():
    return ScenarioService()


def error_paths(exc_info) -> list:
    return [e["path"] for e in exc_info.value.details["errors"]]


class TestLoadConfig:
    def test_defaults(self):
        config = load_config(overrides={"mode": "quantum-exact"})
        assert config.mode == ScenarioMode.QUANTUM_EXACT
        assert config.noise.is_ideal
        assert config.resolved_sign_mode == SignMode.ABSOLUTE

    def test_bounds_default_to_fixed_signs(self):
        config = load_config(overrides={"mode": "bounds"})
        assert config.resolved_sign_mode == SignMode.FIXED_SIGN
        explicit = load_config(overrides={"mode": "bounds", "sign_mode": "absolute"})
        assert explicit.resolved_sign_mode == SignMode.ABSOLUTE

    def test_file_and_overrides_merge(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text(
            json.dumps(
                {
                    "schema_version": 1,
                    "mode": "sample",
                    "shots": 500,
                    "noise": {"state_white_noise": 0.9},
                }
            ),
            encoding="utf-8",
        )
        config = load_config(
            str(path), {"seed": 3, "noise": {"prep_phase_error": 0.1}}
        )
        assert config.shots == 500
        assert config.seed == 3
        assert config.noise.state_white_noise == 0.9
        assert config.noise.prep_phase_error == 0.1

    @pytest.mark.parametrize(
        "overrides, path",
        [
            ({"mode": "quantum-exact", "noise": {"state_white_noise": 1.5}},
             "/noise/state_white_noise"),
            ({"mode": "bounds", "colour": 1}, "/colour"),
            ({"mode": "nonsense"}, "/mode"),
            ({"mode": "sample", "shots": 0}, "/shots"),
            ({"mode": "quantum-exact", "schema_version": 2}, "/schema_version"),
        ],
    )
    def test_validation_errors_carry_pointers(self, overrides, path):
        with pytest.raises(ConfigurationError) as exc_info:
            load_config(overrides=overrides)
        assert path in error_paths(exc_info)

    @pytest.mark.parametrize(
        "overrides",
        [
            {"mode": "bounds", "bound_model": "nchv", "past_only": True},
            {"mode": "bounds", "bound_model": "lhv", "bob_all_plus": True},
            {"mode": "significance", "value": 17.0},
            {"mode": "significance", "value": 17.0, "standard_error": 0.0, "bound": 16},
        ],
    )
    def test_inconsistent_options(self, overrides):
        with pytest.raises(ConfigurationError):
            load_config(overrides=overrides)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(str(tmp_path / "absent.json"))

    @pytest.mark.parametrize("text", ["{not json", "[1, 2]"])
    def test_malformed_file(self, tmp_path, text):
        path = tmp_path / "bad.json"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_config(str(path))


class TestRunScenario:
    def test_quantum_exact(self, scenario_service):
        report = scenario_service.run_scenario(load_config(overrides={"mode": "quantum-exact"}))
        assert report.correlators.omega == pytest.approx(18.0)
        assert len(report.distributions) == 18
        assert [v.name for v in report.verdicts] == ["nchv-violation", "lhv-violation"]
        assert report.all_verdicts_hold
        assert report.wall_time is None
        assert not calibration_failed(report)

    def test_calibrated_prediction(self, scenario_service):
        config = load_config(
            overrides={"mode": "quantum-exact", "use_calibrated_noise": True}
        )
        report = scenario_service.run_scenario(config)
        assert report.correlators.omega == pytest.approx(17.247, abs=5e-3)

    def test_bounds_verdicts(self, scenario_service):
        lhv = scenario_service.run_scenario(
            load_config(overrides={"mode": "bounds", "bound_model": "lhv"})
        )
        assert lhv.bounds[0].maximum == 18
        assert not lhv.all_verdicts_hold
        assert lhv.verdicts[0].name == "lhv-contextual-bound"

        nc = scenario_service.run_scenario(
            load_config(overrides={"mode": "bounds", "bound_model": "nc-local"})
        )
        assert nc.bounds[0].maximum == 16
        assert nc.all_verdicts_hold

    def test_sample(self, scenario_service):
        config = load_config(
            overrides={
                "mode": "sample",
                "shots": 200_000,
                "seed": 1,
                "use_calibrated_noise": True,
            }
        )
        report = scenario_service.run_scenario(config)
        assert len(report.counts.tables) == 18
        assert report.estimates.omega.value > 16
        assert [r.bound for r in report.significance] == [4.0, 16.0]
        assert report.effective_noise.detection_efficiency == 0.033

    def test_default_significance_pairs(self, scenario_service):
        report = scenario_service.run_scenario(load_config(overrides={"mode": "significance"}))
        assert [r.sigma_rounded for r in report.significance] == [165, 66]
        assert report.all_verdicts_hold

    def test_explicit_significance(self, scenario_service):
        config = load_config(
            overrides={
                "mode": "significance",
                "value": 15.0,
                "standard_error": 0.5,
                "bound": 16.0,
            }
        )
        report = scenario_service.run_scenario(config)
        assert report.significance[0].sigma == pytest.approx(-2.0)
        assert not report.all_verdicts_hold

    def test_no_signaling_exact_only(self, scenario_service):
        config = load_config(
            overrides={
                "mode": "no-signaling",
                "use_calibrated_noise": True,
                "include_sampled": False,
            }
        )
        report = scenario_service.run_scenario(config)
        assert report.no_signaling.max_deviation <= 1e-10
        assert report.counts is None
        assert report.all_verdicts_hold

    def test_record_timing(self, scenario_service):
        config = load_config(overrides={"mode": "significance", "record_timing": True})
        assert scenario_service.run_scenario(config).wall_time is not None

    def test_calibration_outside_reachable_range(self, scenario_service):
        config = load_config(overrides={"mode": "calibrate", "chi_target": 7.0})
        report = scenario_service.run_scenario(config)
        assert not report.calibration.feasible
        assert report.calibration.chi_residual == pytest.approx(1.0, abs=1e-3)
        assert report.verdicts[0].name == "calibration-feasible"
        assert not report.verdicts[0].holds
        assert calibration_failed(report)


class TestCalibratedNoise:
    @pytest.mark.parametrize(
        "noise",
        [
            {"state_white_noise": 0.9},
            {"prep_phase_error": 0.1},
            {"per_measurement_visibility": 0.95, "state_white_noise": 0.9},
        ],
    )
    def test_explicit_noise_conflicts(self, noise):
        with pytest.raises(ConfigurationError) as exc_info:
            load_config(
                overrides={
                    "mode": "quantum-exact",
                    "use_calibrated_noise": True,
                    "noise": noise,
                }
            )
        assert sorted(error_paths(exc_info)) == sorted(f"/noise/{k}" for k in noise)

    def test_conflict_across_file_and_overrides(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text(
            json.dumps({"mode": "sample", "noise": {"prep_phase_error": 0.2}}),
            encoding="utf-8",
        )
        with pytest.raises(ConfigurationError):
            load_config(str(path), {"use_calibrated_noise": True})

    def test_measured_efficiency_by_default(self, scenario_service):
        config = load_config(
            overrides={"mode": "quantum-exact", "use_calibrated_noise": True}
        )
        model = scenario_service._noise_model(config)
        assert model.detection_efficiency == 0.033
        assert model.prep_phase_error == pytest.approx(0.2603)

    def test_explicit_efficiency_is_kept(self, scenario_service):
        config = load_config(
            overrides={
                "mode": "quantum-exact",
                "use_calibrated_noise": True,
                "noise": {"detection_efficiency": 0.5},
            }
        )
        assert scenario_service._noise_model(config).detection_efficiency == 0.5

    def test_uncalibrated_runs_use_config_noise(self, scenario_service):
        config = load_config(
            overrides={"mode": "quantum-exact", "noise": {"state_white_noise": 0.9}}
        )
        assert scenario_service._noise_model(config) == config.noise


class TestReportedState:
    def test_ideal_state(self, scenario_service):
        report = scenario_service.run_scenario(load_config(overrides={"mode": "quantum-exact"}))
        assert report.state.description == "ideal"
        assert report.state.parameters == {}
        assert report.effective_noise.is_ideal

    def test_calibrated_state(self, scenario_service):
        config = load_config(
            overrides={
                "mode": "no-signaling",
                "use_calibrated_noise": True,
                "include_sampled": False,
            }
        )
        report = scenario_service.run_scenario(config)
        assert report.state.description == "noisy"
        assert report.state.parameters["prep_phase_error"] == pytest.approx(0.2603)
        assert report.state.parameters["state_white_noise"] == 1.0
        assert report.effective_noise.per_measurement_visibility == pytest.approx(0.98463)

    def test_calibration_records_fitted_state(self, scenario_service):
        report = scenario_service.run_scenario(
            load_config(overrides={"mode": "calibrate", "chi_target": 6.0, "s_target": 12.0})
        )
        assert report.effective_noise == report.calibration.model
        assert report.state == scenario_service.noise.state_spec(report.calibration.model)

    def test_bounds_carry_no_state(self, scenario_service):
        report = scenario_service.run_scenario(
            load_config(overrides={"mode": "bounds", "bound_model": "nchv"})
        )
        assert report.state is None
        assert report.effective_noise is None
