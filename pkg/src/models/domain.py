"""Domain models for the Peres-Mermin scenario and its exact evaluation."""

from enum import Enum
from itertools import product
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.exceptions import (
    InvalidStateError,
    MeasurementError,
    UnknownObservableError,
)
from ..core.utils import format_outcome
from ..quantum.linalg import PauliWord

ALICE_KEYS: Tuple[str, ...] = ("A", "B", "C", "a", "b", "c", "α", "β", "γ")
BOB_KEYS: Tuple[str, ...] = ("A'", "B'", "C'", "a'", "b'", "α'", "γ'")
SEQUENCE_IDS: Tuple[str, ...] = ("CAB", "cba", "βγα", "αAa", "βbB", "cγC")

OMEGA_TOL = 1e-9


class Party(str, Enum):
    """Which side of the experiment measures an observable."""

    ALICE = "alice"
    BOB = "bob"


class SignMode(str, Enum):
    """How remote correlators enter the S sum."""

    ABSOLUTE = "absolute"
    FIXED_SIGN = "fixed-sign"


def outcome_tuples(length: int) -> List[Tuple[int, ...]]:
    """All ±1 tuples of a given length, +1 before -1 in lexicographic order."""
    return list(product((1, -1), repeat=length))


class ObservableLabel(BaseModel):
    """A registered dichotomic observable and the Pauli word realizing it."""

    model_config = ConfigDict(frozen=True)

    key: str = Field(..., description="Registry key, e.g. 'A' or \"A'\"")
    name: str = Field(..., description="Base letter shared by Alice and Bob copies")
    party: Party
    word: PauliWord = Field(..., description="Word over (spatial-mode, polarization)")
    slots: Tuple[int, int] = Field(..., description="Qubits the word acts on")

    @field_validator("word")
    @classmethod
    def validate_word(cls, v: PauliWord) -> PauliWord:
        if len(v) != 2:
            raise ValueError("Observable words act on exactly two qubits")
        if v.is_identity:
            raise ValueError("Observable word must contain a non-identity letter")
        return v

    @property
    def is_primed(self) -> bool:
        return self.party == Party.BOB

    @property
    def partner_key(self) -> str:
        return self.name if self.is_primed else f"{self.name}'"

    def __str__(self) -> str:
        return f"{self.key}={self.word}@{self.slots}"


class ContextSequence(BaseModel):
    """One of Alice's six ordered measurement sequences."""

    model_config = ConfigDict(frozen=True)

    id: str
    labels: Tuple[str, str, str]
    chi_sign: Literal[1, -1]

    def position_of(self, key: str) -> int:
        return self.labels.index(key) + 1


class ContextAlgebra(BaseModel):
    """Commutation and ordered-product check for one sequence."""

    sequence: str
    commuting: bool
    max_commutator_norm: float
    product_sign: Literal[1, -1]


class STerm(BaseModel):
    """A remote correlator between Alice's outcome at a position and Bob's partner."""

    model_config = ConfigDict(frozen=True)

    sequence: str
    position: Literal[2, 3]
    alice_label: str
    bob_label: str
    fixed_sign: Literal[1, -1]

    @property
    def term_id(self) -> str:
        return f"{self.alice_label}{self.bob_label}@{self.sequence}"


class StateSpec(BaseModel):
    """Description of the four-qubit source state."""

    model_config = ConfigDict(frozen=True)

    description: Literal["ideal", "noisy"] = "ideal"
    parameters: Dict[str, float] = Field(default_factory=dict)
    qubit_roles: Dict[int, str] = Field(
        default_factory=lambda: {
            1: "alice-spatial-mode",
            2: "alice-polarization",
            3: "bob-spatial-mode",
            4: "bob-polarization",
        }
    )

    @model_validator(mode="after")
    def validate_parameters(self) -> "StateSpec":
        if (self.description == "ideal") == bool(self.parameters):
            raise InvalidStateError(
                "Ideal states carry no noise parameters; noisy states must",
                details={"description": self.description},
            )
        return self


class MeasurementPlan(BaseModel):
    """Alice's sequence plus an optional single measurement on Bob's side."""

    model_config = ConfigDict(frozen=True)

    sequence: str
    bob_setting: Optional[str] = None

    @model_validator(mode="after")
    def validate_labels(self) -> "MeasurementPlan":
        if self.sequence not in SEQUENCE_IDS:
            raise UnknownObservableError(
                f"Unknown sequence: {self.sequence}",
                details={"allowed": list(SEQUENCE_IDS)},
            )
        if self.bob_setting is not None and self.bob_setting not in BOB_KEYS:
            raise UnknownObservableError(
                f"Unknown Bob setting: {self.bob_setting}",
                details={"allowed": list(BOB_KEYS)},
            )
        return self

    @property
    def plan_id(self) -> str:
        if self.bob_setting is None:
            return self.sequence
        return f"{self.sequence}|{self.bob_setting}"

    @property
    def positions(self) -> Tuple[Any, ...]:
        return (1, 2, 3) if self.bob_setting is None else (1, 2, 3, "B")

    def outcome_space(self) -> List[Tuple[int, ...]]:
        return outcome_tuples(len(self.positions))


class JointDistribution(BaseModel):
    """Probabilities over outcome tuples (o1, o2, o3[, oB]) for one plan.

    ``probabilities`` is aligned with ``plan.outcome_space()``.
    """

    model_config = ConfigDict(frozen=True)

    plan: MeasurementPlan
    probabilities: Tuple[float, ...]

    @model_validator(mode="after")
    def validate_probabilities(self) -> "JointDistribution":
        expected = 2 ** len(self.plan.positions)
        if len(self.probabilities) != expected:
            raise MeasurementError(
                "Distribution has the wrong number of entries",
                details={"expected": expected, "got": len(self.probabilities)},
            )
        if min(self.probabilities) < -OMEGA_TOL:
            raise MeasurementError("Negative probability in distribution")
        total = sum(self.probabilities)
        if abs(total - 1.0) > OMEGA_TOL:
            raise MeasurementError(
                "Distribution does not sum to one", details={"total": total}
            )
        return self

    @property
    def outcomes(self) -> List[Tuple[int, ...]]:
        return self.plan.outcome_space()

    def as_dict(self) -> Dict[Tuple[int, ...], float]:
        return dict(zip(self.outcomes, self.probabilities))

    def probability(self, outcome: Tuple[int, ...]) -> float:
        return self.as_dict()[tuple(outcome)]

    def to_rows(self) -> List[Dict[str, Any]]:
        return [
            {
                "plan_id": self.plan.plan_id,
                "outcome": format_outcome(o),
                "probability": p,
            }
            for o, p in zip(self.outcomes, self.probabilities)
        ]


class ChiTerm(BaseModel):
    """One sequence's contribution to χ."""

    sequence: str
    chi_sign: Literal[1, -1]
    correlator: float = Field(..., ge=-1.0 - OMEGA_TOL, le=1.0 + OMEGA_TOL)
    contribution: float


class STermValue(BaseModel):
    """Evaluated remote correlator for one S-term, in both sign forms."""

    sequence: str
    position: Literal[2, 3]
    alice_label: str
    bob_label: str
    fixed_sign: Literal[1, -1]
    signed: float = Field(..., ge=-1.0 - OMEGA_TOL, le=1.0 + OMEGA_TOL)
    absolute: float
    contribution: float

    @property
    def term_id(self) -> str:
        return f"{self.alice_label}{self.bob_label}@{self.sequence}"


class CorrelatorReport(BaseModel):
    """χ, S and ω with their per-term breakdowns."""

    chi: float
    chi_terms: List[ChiTerm]
    s: float
    s_mode: SignMode
    s_terms: List[STermValue]
    omega: float
    violates_nchv: bool = Field(..., description="χ above the noncontextual bound 4")
    violates_lhv: bool = Field(..., description="ω above the local bound 16")

    @model_validator(mode="after")
    def validate_omega(self) -> "CorrelatorReport":
        if abs(self.omega - (self.chi + self.s)) > OMEGA_TOL:
            raise MeasurementError(
                "omega must equal chi + s",
                details={"chi": self.chi, "s": self.s, "omega": self.omega},
            )
        return self

    def term_rows(self) -> List[Dict[str, Any]]:
        """One row per χ-term and per S-term for the CSV report."""
        rows: List[Dict[str, Any]] = []
        for t in self.chi_terms:
            rows.append(
                {
                    "kind": "chi",
                    "term": t.sequence,
                    "sequence": t.sequence,
                    "position": "",
                    "sign": t.chi_sign,
                    "value": t.correlator,
                    "contribution": t.contribution,
                    "standard_error": "",
                }
            )
        for t in self.s_terms:
            rows.append(
                {
                    "kind": "s",
                    "term": t.term_id,
                    "sequence": t.sequence,
                    "position": t.position,
                    "sign": t.fixed_sign,
                    "value": t.signed,
                    "contribution": t.contribution,
                    "standard_error": "",
                }
            )
        return rows


class NoSignalingReport(BaseModel):
    """Largest total-variation distances between marginals across remote settings."""

    bob_marginal_deviation: Dict[str, float] = Field(
        ..., description="Per Bob setting, max TV distance across Alice's sequences"
    )
    alice_marginal_deviation: Dict[str, float] = Field(
        ..., description="Per sequence, max TV distance across Bob's settings"
    )
    max_deviation: float
