"""Scenario configuration and run report schemas."""

from enum import Enum
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..config.settings import settings
from ..data.peres_mermin import MEASURED_CHI, MEASURED_S
from .bounds import BoundModel, BoundReport
from .domain import (
    CorrelatorReport,
    JointDistribution,
    NoSignalingReport,
    SignMode,
    StateSpec,
)
from .statistics import (
    CalibrationResult,
    CountsCollection,
    EstimateReport,
    NoiseModel,
    SampledNoSignalingReport,
    SignificanceResult,
)


class ScenarioMode(str, Enum):
    """Pipelines a scenario can run."""

    QUANTUM_EXACT = "quantum-exact"
    BOUNDS = "bounds"
    SAMPLE = "sample"
    CALIBRATE = "calibrate"
    SIGNIFICANCE = "significance"
    NO_SIGNALING = "no-signaling"


class ScenarioConfig(BaseModel):
    """Validated scenario configuration (JSON file plus CLI overrides)."""

    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1] = 1
    mode: ScenarioMode
    noise: NoiseModel = Field(default_factory=NoiseModel)
    use_calibrated_noise: bool = Field(
        default=False, description="Replace noise with the calibrated model"
    )
    shots: int = Field(default_factory=lambda: settings.default_shots, ge=1)
    seed: int = Field(default_factory=lambda: settings.default_seed, ge=0, lt=2**64)
    sign_mode: Optional[SignMode] = Field(
        default=None, description="Defaults to fixed-sign for bounds, absolute otherwise"
    )
    output_dir: str = Field(default_factory=lambda: settings.output_dir)

    # bounds
    bound_model: BoundModel = BoundModel.LHV
    past_only: bool = False
    bob_all_plus: bool = False

    # sample
    chi_source: Literal["dedicated", "marginal"] = "dedicated"

    # calibrate
    chi_target: float = MEASURED_CHI[0]
    s_target: float = MEASURED_S[0]
    calibration_axes: Literal["eta-phi", "eta-v"] = "eta-phi"

    # significance
    value: Optional[float] = None
    standard_error: Optional[float] = None
    bound: Optional[float] = None

    # no-signaling
    include_sampled: bool = True

    assert_verdicts: bool = False
    record_timing: bool = False

    @model_validator(mode="after")
    def validate_mode_options(self) -> "ScenarioConfig":
        if self.past_only and self.bound_model != BoundModel.LHV:
            raise ValueError("past_only applies only to bound_model 'lhv'")
        if self.bob_all_plus and self.bound_model != BoundModel.NC_LOCAL:
            raise ValueError("bob_all_plus applies only to bound_model 'nc-local'")
        given = [
            x is not None for x in (self.value, self.standard_error, self.bound)
        ]
        if any(given) and not all(given):
            raise ValueError("value, standard_error and bound must be given together")
        if self.standard_error is not None and self.standard_error <= 0:
            raise ValueError("standard_error must be positive")
        return self

    @property
    def resolved_sign_mode(self) -> SignMode:
        if self.sign_mode is not None:
            return self.sign_mode
        if self.mode == ScenarioMode.BOUNDS:
            return SignMode.FIXED_SIGN
        return SignMode.ABSOLUTE


class Verdict(BaseModel):
    """A named claim about a value against a threshold."""

    name: str
    bound: str = Field(..., description="The inequality or criterion checked")
    value: float
    threshold: float
    margin: float = Field(..., description="value - threshold")
    holds: bool


class RunReport(BaseModel):
    """Everything a scenario run produced."""

    tool_version: str
    mode: ScenarioMode
    config: ScenarioConfig
    state: Optional[StateSpec] = None
    effective_noise: Optional[NoiseModel] = Field(
        None, description="Noise model the run evaluated, after calibration defaults"
    )
    correlators: Optional[CorrelatorReport] = None
    distributions: List[JointDistribution] = Field(default_factory=list)
    bounds: List[BoundReport] = Field(default_factory=list)
    counts: Optional[CountsCollection] = None
    estimates: Optional[EstimateReport] = None
    calibration: Optional[CalibrationResult] = None
    significance: List[SignificanceResult] = Field(default_factory=list)
    no_signaling: Optional[NoSignalingReport] = None
    sampled_no_signaling: Optional[SampledNoSignalingReport] = None
    verdicts: List[Verdict] = Field(default_factory=list)
    wall_time: Optional[float] = None

    @property
    def all_verdicts_hold(self) -> bool:
        return all(v.holds for v in self.verdicts)
