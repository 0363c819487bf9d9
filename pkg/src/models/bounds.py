"""Hidden-variable strategy models and sweep reports."""

from enum import Enum
from typing import Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .domain import ALICE_KEYS, BOB_KEYS, SEQUENCE_IDS, SignMode


class BoundModel(str, Enum):
    """Hidden-variable model classes the sweeps enumerate."""

    NCHV = "nchv"
    LHV = "lhv"
    NC_LOCAL = "nc-local"


def _check_outcomes(values) -> None:
    if any(v not in (1, -1) for v in values):
        raise ValueError("Outcomes must be +1 or -1")


class NCHVAssignment(BaseModel):
    """One context-independent outcome per Alice observable."""

    model_config = ConfigDict(frozen=True)

    values: Dict[str, int]

    @field_validator("values")
    @classmethod
    def validate_values(cls, v: Dict[str, int]) -> Dict[str, int]:
        if set(v) != set(ALICE_KEYS):
            raise ValueError(f"Assignment must cover exactly {list(ALICE_KEYS)}")
        _check_outcomes(v.values())
        return {k: v[k] for k in ALICE_KEYS}

    @classmethod
    def from_tuple(cls, outcomes: Tuple[int, ...]) -> "NCHVAssignment":
        return cls(values=dict(zip(ALICE_KEYS, (int(o) for o in outcomes))))


class DeterministicStrategy(BaseModel):
    """Alice answers per announced sequence; Bob answers per own setting only."""

    model_config = ConfigDict(frozen=True)

    alice: Dict[str, Tuple[int, int, int]]
    bob: Dict[str, int]

    @field_validator("alice")
    @classmethod
    def validate_alice(cls, v):
        if set(v) != set(SEQUENCE_IDS):
            raise ValueError(f"Alice responses must cover {list(SEQUENCE_IDS)}")
        for triple in v.values():
            _check_outcomes(triple)
        return {k: tuple(v[k]) for k in SEQUENCE_IDS}

    @field_validator("bob")
    @classmethod
    def validate_bob(cls, v):
        if set(v) != set(BOB_KEYS):
            raise ValueError(f"Bob outcomes must cover {list(BOB_KEYS)}")
        _check_outcomes(v.values())
        return {k: v[k] for k in BOB_KEYS}

    @classmethod
    def from_nchv(
        cls, assignment: NCHVAssignment, bob: Dict[str, int]
    ) -> "DeterministicStrategy":
        """Expand a noncontextual assignment into per-sequence triples."""
        from ..data.peres_mermin import context_table

        alice = {
            seq.id: tuple(assignment.values[k] for k in seq.labels)
            for seq in context_table()
        }
        return cls(alice=alice, bob=bob)


class BoundReport(BaseModel):
    """Outcome of an exhaustive hidden-variable sweep."""

    model: BoundModel
    mode: Optional[SignMode] = Field(None, description="None for χ-only sweeps")
    past_only: bool = False
    bob_all_plus: bool = False
    maximum: int
    maximizer_count: int = Field(..., ge=1)
    sweep_size: int = Field(..., ge=1, description="Strategies covered by the sweep")
    witness_assignment: Optional[NCHVAssignment] = None
    witness_strategy: Optional[DeterministicStrategy] = None
    witness_value: int
    printed_bound: int = Field(..., description="Bound quoted for this expression")
    bound_reproduced: bool
    wall_time: Optional[float] = None

    @property
    def within_printed_bound(self) -> bool:
        return self.maximum <= self.printed_bound

    @property
    def model_class(self) -> str:
        if self.model == BoundModel.LHV:
            return "lhv-past-only" if self.past_only else "lhv-contextual"
        return self.model.value
