"""Noise, counts and estimate models."""

import math
from typing import Any, Dict, List, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.exceptions import MissingConfigurationError, SamplingError
from ..core.utils import format_outcome
from .domain import MeasurementPlan, SignMode


class NoiseModel(BaseModel):
    """Imperfections of the source, the sequential devices and the detectors."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    state_white_noise: float = Field(
        default=1.0, ge=0.0, le=1.0, description="Weight v of the ideal state"
    )
    prep_phase_error: float = Field(
        default=0.0,
        ge=-math.pi,
        le=math.pi,
        description="Relative phase between |01> and |10> of each singlet (radians)",
    )
    per_measurement_visibility: float = Field(
        default=1.0,
        ge=0.0,
        le=1.0,
        description="Depolarizing strength η before Alice's 2nd and 3rd measurements",
    )
    detection_efficiency: float = Field(
        default=1.0, gt=0.0, le=1.0, description="Fair-sampling thinning probability"
    )

    @classmethod
    def ideal(cls) -> "NoiseModel":
        return cls()

    @property
    def is_ideal(self) -> bool:
        return (
            self.state_white_noise == 1.0
            and self.prep_phase_error == 0.0
            and self.per_measurement_visibility == 1.0
            and self.detection_efficiency == 1.0
        )


class CountsTable(BaseModel):
    """Recorded outcome counts for one measurement configuration.

    ``counts`` is aligned with ``plan.outcome_space()``.
    """

    model_config = ConfigDict(frozen=True)

    plan: MeasurementPlan
    emitted: int = Field(..., ge=1, description="Pairs emitted before thinning")
    shots: int = Field(..., ge=0, description="Pairs recorded after thinning")
    counts: List[int]
    seed: int = Field(..., ge=0)

    @model_validator(mode="after")
    def validate_counts(self) -> "CountsTable":
        expected = 2 ** len(self.plan.positions)
        if len(self.counts) != expected:
            raise SamplingError(
                "Counts have the wrong number of entries",
                details={"plan": self.plan.plan_id, "expected": expected},
            )
        if any(c < 0 for c in self.counts) or sum(self.counts) != self.shots:
            raise SamplingError(
                "Counts must be non-negative and sum to the recorded shots",
                details={"plan": self.plan.plan_id, "shots": self.shots},
            )
        if self.shots > self.emitted:
            raise SamplingError("More shots recorded than emitted")
        return self

    @property
    def plan_id(self) -> str:
        return self.plan.plan_id

    def to_rows(self) -> List[Dict[str, Any]]:
        return [
            {"plan_id": self.plan_id, "outcome": format_outcome(o), "count": c}
            for o, c in zip(self.plan.outcome_space(), self.counts)
        ]


class CountsCollection(BaseModel):
    """All counts of one sampled experiment, keyed by plan id."""

    tables: Dict[str, CountsTable]
    seed: int
    emitted_per_configuration: int
    detection_efficiency: float

    def get(self, plan_id: str) -> CountsTable:
        if plan_id not in self.tables:
            raise MissingConfigurationError(
                f"No counts for configuration {plan_id}",
                details={"available": sorted(self.tables)},
            )
        return self.tables[plan_id]

    def to_rows(self) -> List[Dict[str, Any]]:
        rows: List[Dict[str, Any]] = []
        for plan_id in sorted(self.tables):
            rows.extend(self.tables[plan_id].to_rows())
        return rows


class EstimateWithError(BaseModel):
    """A mean value with its standard error."""

    value: float
    standard_error: float = Field(..., ge=0.0)
    shots: int = Field(..., ge=0)
    biased_near_zero: bool = False


class EstimateReport(BaseModel):
    """χ, S and ω estimated from counts."""

    chi: EstimateWithError
    s: EstimateWithError
    omega: EstimateWithError
    chi_terms: Dict[str, EstimateWithError]
    s_terms: Dict[str, EstimateWithError]
    s_mode: SignMode
    chi_source: Literal["dedicated", "marginal"]
    configurations_disjoint: bool

    def term_rows(self) -> List[Dict[str, Any]]:
        rows: List[Dict[str, Any]] = []
        for kind, terms in (("chi", self.chi_terms), ("s", self.s_terms)):
            for term, est in terms.items():
                rows.append(
                    {
                        "kind": kind,
                        "term": term,
                        "sequence": term.split("@")[-1],
                        "position": "",
                        "sign": "",
                        "value": est.value,
                        "contribution": "",
                        "standard_error": est.standard_error,
                    }
                )
        return rows


class CalibrationResult(BaseModel):
    """Best noise model found for a pair of (χ, S) targets."""

    model: NoiseModel
    axes: Literal["eta-phi", "eta-v"]
    chi_target: float
    s_target: float
    chi: float
    s: float
    omega: float
    chi_residual: float
    s_residual: float
    tolerance: float
    feasible: bool
    rounds: int = Field(..., ge=0)


class SampledNoSignalingReport(BaseModel):
    """No-signaling check on sampled counts via two-proportion z-scores."""

    z_scores: Dict[str, float] = Field(
        ..., description="Largest |z| per marginal family"
    )
    max_abs_z: float
    max_deviation: float = Field(..., description="Largest observed TV distance")
    threshold: float = 4.0

    @property
    def consistent(self) -> bool:
        return self.max_abs_z <= self.threshold


class SignificanceResult(BaseModel):
    """Distance of a value above a bound in units of its standard error."""

    value: float
    standard_error: float = Field(..., gt=0.0)
    bound: float
    sigma: float
    sigma_rounded: int

    @property
    def violated(self) -> bool:
        return self.value > self.bound
