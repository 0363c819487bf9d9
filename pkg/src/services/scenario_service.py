"""Scenario runner: dispatches a validated config to the matching pipeline."""

import json
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from .. import __version__
from ..core.exceptions import ConfigurationError
from ..core.logging import log_with_context
from ..core.utils import generate_run_id
from ..data.peres_mermin import (
    MEASURED_CHI,
    MEASURED_DETECTION_EFFICIENCY,
    MEASURED_OMEGA,
)
from ..models.bounds import BoundModel
from ..models.domain import CorrelatorReport
from ..models.schemas import RunReport, ScenarioConfig, ScenarioMode, Verdict
from ..models.statistics import EstimateReport, NoiseModel
from .bounds_service import NCHV_PRINTED_BOUND, BoundsService, LHV_PRINTED_BOUND
from .calibration_service import CalibrationService, calibrated_model
from .measurement_service import all_plans, experiment_plans
from .noise_service import NoiseService
from .sampling_service import SamplingService, significance_result

logger = logging.getLogger(__name__)

NO_SIGNALING_TOL = 1e-10

# Fixed by the calibrated model; only the detection efficiency may be given with it
CALIBRATED_NOISE_FIELDS = (
    "state_white_noise",
    "prep_phase_error",
    "per_measurement_visibility",
)


def _pointer(loc) -> str:
    return "/" + "/".join(str(part) for part in loc)


def validation_details(error: ValidationError) -> List[Dict[str, str]]:
    """One JSON-pointer path and message per validation error."""
    return [{"path": _pointer(e["loc"]), "message": e["msg"]} for e in error.errors()]


def load_config(
    path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
) -> ScenarioConfig:
    """
    Read a JSON scenario file, apply overrides, and validate.

    Args:
        path: Optional JSON config file
        overrides: Values taking precedence over the file (nested for "noise")

    Returns:
        Validated scenario config
    """
    data: Dict[str, Any] = {}
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigurationError(
                f"Config file not found: {path}", details={"path": path}
            )
        except json.JSONDecodeError as e:
            raise ConfigurationError(
                f"Config file is not valid JSON: {e}", details={"path": path}
            )
        if not isinstance(data, dict):
            raise ConfigurationError("Config root must be a JSON object")

    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value

    noise = data.get("noise")
    if data.get("use_calibrated_noise") is True and isinstance(noise, dict):
        clashing = [k for k in CALIBRATED_NOISE_FIELDS if k in noise]
        if clashing:
            details = [
                {"path": f"/noise/{k}", "message": "fixed by use_calibrated_noise"}
                for k in clashing
            ]
            logger.error(
                "Noise flags conflict with the calibrated model",
                extra={"errors": details},
            )
            raise ConfigurationError(
                "Noise parameters conflict with the calibrated model",
                details={"errors": details},
            )

    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        details = validation_details(e)
        logger.error("Invalid scenario config", extra={"errors": details})
        raise ConfigurationError("Invalid scenario config", details={"errors": details})


def _verdict(name: str, bound: str, value: float, threshold: float, holds: bool) -> Verdict:
    return Verdict(
        name=name,
        bound=bound,
        value=value,
        threshold=threshold,
        margin=value - threshold,
        holds=holds,
    )


def violation_verdicts(chi: float, omega: float) -> List[Verdict]:
    return [
        _verdict(
            "nchv-violation", "NCHV: chi <= 4", chi, NCHV_PRINTED_BOUND,
            chi > NCHV_PRINTED_BOUND,
        ),
        _verdict(
            "lhv-violation", "LHV: omega <= 16", omega, LHV_PRINTED_BOUND,
            omega > LHV_PRINTED_BOUND,
        ),
    ]


class ScenarioService:
    """Runs one scenario end to end."""

    def __init__(
        self,
        noise_service: Optional[NoiseService] = None,
        bounds_service: Optional[BoundsService] = None,
        sampling_service: Optional[SamplingService] = None,
        calibration_service: Optional[CalibrationService] = None,
    ):
        self.noise = noise_service or NoiseService()
        self.bounds = bounds_service
        self.sampling = sampling_service or SamplingService(self.noise)
        self.calibration = calibration_service

    def _noise_model(self, config: ScenarioConfig) -> NoiseModel:
        if not config.use_calibrated_noise:
            return config.noise
        efficiency = (
            config.noise.detection_efficiency
            if "detection_efficiency" in config.noise.model_fields_set
            else MEASURED_DETECTION_EFFICIENCY
        )
        return calibrated_model().model_copy(update={"detection_efficiency": efficiency})

    def run_scenario(self, config: ScenarioConfig) -> RunReport:
        """
        Dispatch to the pipeline named by ``config.mode``.

        Returns:
            Report with verdicts; deterministic for a given config and seed
        """
        run_id = generate_run_id()
        start = time.time()
        logger.info("=" * 80)
        logger.info(
            f"Running scenario: {config.mode.value}",
            extra={"run_id": run_id, "mode": config.mode.value, "seed": config.seed},
        )

        handlers = {
            ScenarioMode.QUANTUM_EXACT: self._quantum_exact,
            ScenarioMode.BOUNDS: self._bounds,
            ScenarioMode.SAMPLE: self._sample,
            ScenarioMode.CALIBRATE: self._calibrate,
            ScenarioMode.SIGNIFICANCE: self._significance,
            ScenarioMode.NO_SIGNALING: self._no_signaling,
        }
        fields = handlers[config.mode](config)
        wall_time = time.time() - start
        report = RunReport(
            tool_version=__version__,
            mode=config.mode,
            config=config,
            wall_time=wall_time if config.record_timing else None,
            **fields,
        )
        log_with_context(
            logger,
            "info" if report.all_verdicts_hold else "warning",
            f"Scenario finished: {sum(v.holds for v in report.verdicts)}/"
            f"{len(report.verdicts)} verdicts hold",
            run_id=run_id,
            duration=wall_time,
            failed_verdicts=[v.name for v in report.verdicts if not v.holds],
        )
        logger.info("=" * 80)
        return report

    def _quantum_exact(self, config: ScenarioConfig) -> Dict[str, Any]:
        model = self._noise_model(config)
        engine = self.noise.engine(model)
        state, rho = self.noise.prepare(model)
        correlators: CorrelatorReport = engine.evaluate_omega(
            rho, config.resolved_sign_mode
        )
        distributions = list(engine.run_plans(rho, experiment_plans()).values())
        return {
            "correlators": correlators,
            "distributions": distributions,
            "state": state,
            "effective_noise": model,
            "verdicts": violation_verdicts(correlators.chi, correlators.omega),
        }

    def _bounds(self, config: ScenarioConfig) -> Dict[str, Any]:
        service = self.bounds or BoundsService(record_timing=config.record_timing)
        report = service.run(
            config.bound_model,
            config.resolved_sign_mode,
            past_only=config.past_only,
            bob_all_plus=config.bob_all_plus,
        )
        expression = "chi" if report.model == BoundModel.NCHV else "omega"
        verdict = _verdict(
            f"{report.model_class}-bound",
            f"{report.model_class}: max {expression} <= {report.printed_bound}",
            report.maximum,
            report.printed_bound,
            report.within_printed_bound,
        )
        return {"bounds": [report], "verdicts": [verdict]}

    def _sample(self, config: ScenarioConfig) -> Dict[str, Any]:
        model = self._noise_model(config)
        mode = config.resolved_sign_mode
        counts = self.sampling.sample_experiment(model, config.shots, config.seed)
        estimates: EstimateReport = self.sampling.estimate(
            counts, mode, config.chi_source
        )
        significance = [
            significance_result(est.value, est.standard_error, bound)
            for est, bound in (
                (estimates.chi, NCHV_PRINTED_BOUND),
                (estimates.omega, LHV_PRINTED_BOUND),
            )
            if est.standard_error > 0
        ]
        return {
            "correlators": self.noise.evaluate(model, mode),
            "state": self.noise.state_spec(model),
            "effective_noise": model,
            "counts": counts,
            "estimates": estimates,
            "significance": significance,
            "verdicts": violation_verdicts(estimates.chi.value, estimates.omega.value),
        }

    def _calibrate(self, config: ScenarioConfig) -> Dict[str, Any]:
        service = self.calibration or CalibrationService(noise_service=self.noise)
        result = service.calibrate(
            config.chi_target, config.s_target, config.calibration_axes
        )
        worst = max(result.chi_residual, result.s_residual)
        verdicts = [
            _verdict(
                "calibration-feasible",
                "max residual <= tolerance",
                worst,
                result.tolerance,
                result.feasible,
            )
        ]
        return {
            "calibration": result,
            "correlators": self.noise.evaluate(result.model),
            "state": self.noise.state_spec(result.model),
            "effective_noise": result.model,
            "verdicts": verdicts + violation_verdicts(result.chi, result.omega),
        }

    def _significance(self, config: ScenarioConfig) -> Dict[str, Any]:
        if config.value is not None:
            pairs = [(config.value, config.standard_error, config.bound)]
        else:
            pairs = [
                (MEASURED_CHI[0], MEASURED_CHI[1], float(NCHV_PRINTED_BOUND)),
                (MEASURED_OMEGA[0], MEASURED_OMEGA[1], float(LHV_PRINTED_BOUND)),
            ]
        results = [significance_result(v, se, b) for v, se, b in pairs]
        verdicts = [
            _verdict(
                "bound-violation",
                f"value <= {r.bound:g}",
                r.value,
                r.bound,
                r.violated,
            )
            for r in results
        ]
        return {"significance": results, "verdicts": verdicts}

    def _no_signaling(self, config: ScenarioConfig) -> Dict[str, Any]:
        model = self._noise_model(config)
        exact = self.noise.no_signaling(model)
        verdicts = [
            _verdict(
                "no-signaling-exact",
                "max marginal deviation <= 1e-10",
                exact.max_deviation,
                NO_SIGNALING_TOL,
                exact.max_deviation <= NO_SIGNALING_TOL,
            )
        ]
        fields: Dict[str, Any] = {
            "no_signaling": exact,
            "state": self.noise.state_spec(model),
            "effective_noise": model,
        }
        if config.include_sampled:
            counts = self.sampling.sample_experiment(
                model, config.shots, config.seed, plans=all_plans()
            )
            sampled = self.sampling.sampled_no_signaling_report(counts)
            verdicts.append(
                _verdict(
                    "no-signaling-sampled",
                    f"max |z| <= {sampled.threshold:g}",
                    sampled.max_abs_z,
                    sampled.threshold,
                    sampled.consistent,
                )
            )
            fields.update(counts=counts, sampled_no_signaling=sampled)
        fields["verdicts"] = verdicts
        return fields


def calibration_failed(report: RunReport) -> bool:
    return report.calibration is not None and not report.calibration.feasible
