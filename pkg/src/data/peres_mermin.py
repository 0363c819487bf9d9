"""Observable registry for the hybrid contextuality/nonlocality scenario.

Qubits: 1 = Alice spatial mode, 2 = Alice polarization, 3 = Bob spatial mode,
4 = Bob polarization. Every word is written over (spatial mode, polarization).
|0> is H polarization / the first path, |1> is V / the second path.
"""

import logging
from functools import lru_cache
from typing import Any, Dict, List

import numpy as np

from ..core.exceptions import (
    ModelDefinitionError,
    NonCommutingContextError,
    UnknownObservableError,
)
from ..models.domain import (
    ALICE_KEYS,
    BOB_KEYS,
    SEQUENCE_IDS,
    ContextAlgebra,
    ContextSequence,
    ObservableLabel,
    Party,
    STerm,
)
from ..quantum.linalg import (
    ALGEBRA_TOL,
    DensityOperator,
    Operator,
    PauliWord,
    StateVector,
    commutator_norm,
    expectation,
    reorder_qubits,
    tensor_embed,
)

logger = logging.getLogger(__name__)

# Reported values of the hybrid experiment: (value, standard error)
MEASURED_CHI = (5.817, 0.011)
MEASURED_S = (11.430, 0.016)
MEASURED_OMEGA = (17.247, 0.019)
# Overall detection efficiency; the default thinning for the calibrated model
MEASURED_DETECTION_EFFICIENCY = 0.033

TOTAL_QUBITS = 4
ALICE_SLOTS = (1, 2)
BOB_SLOTS = (3, 4)

# The square: rows (A, B, C), (a, b, c), (α, β, γ) by letter
ALICE_WORDS: Dict[str, str] = {
    "A": "ZI",
    "B": "IZ",
    "C": "ZZ",
    "a": "IX",
    "b": "XI",
    "c": "XX",
    "α": "ZX",
    "β": "XZ",
    "γ": "YY",
}

SEQUENCES: List[ContextSequence] = [
    ContextSequence(id="CAB", labels=("C", "A", "B"), chi_sign=1),
    ContextSequence(id="cba", labels=("c", "b", "a"), chi_sign=1),
    ContextSequence(id="βγα", labels=("β", "γ", "α"), chi_sign=1),
    ContextSequence(id="αAa", labels=("α", "A", "a"), chi_sign=1),
    ContextSequence(id="βbB", labels=("β", "b", "B"), chi_sign=1),
    ContextSequence(id="cγC", labels=("c", "γ", "C"), chi_sign=-1),
]

# Ideal-state sign of <X X'> per Alice observable; regenerated by compute_fixed_signs()
FIXED_SIGNS: Dict[str, int] = {
    "A": -1,
    "B": -1,
    "a": -1,
    "b": -1,
    "C": 1,
    "α": 1,
    "γ": 1,
}


def _build_labels() -> Dict[str, ObservableLabel]:
    labels: Dict[str, ObservableLabel] = {}
    for key in ALICE_KEYS:
        labels[key] = ObservableLabel(
            key=key,
            name=key,
            party=Party.ALICE,
            word=PauliWord(letters=ALICE_WORDS[key]),
            slots=ALICE_SLOTS,
        )
    for key in BOB_KEYS:
        name = key.rstrip("'")
        labels[key] = ObservableLabel(
            key=key,
            name=name,
            party=Party.BOB,
            word=PauliWord(letters=ALICE_WORDS[name]),
            slots=BOB_SLOTS,
        )
    return labels


OBSERVABLES: Dict[str, ObservableLabel] = _build_labels()

S_TERMS: List[STerm] = [
    STerm(
        sequence=seq.id,
        position=position,
        alice_label=seq.labels[position - 1],
        bob_label=f"{seq.labels[position - 1]}'",
        fixed_sign=FIXED_SIGNS[seq.labels[position - 1]],
    )
    for seq in SEQUENCES
    for position in (2, 3)
]


def get_observable(key: str) -> ObservableLabel:
    """Get a registered observable by key."""
    if key not in OBSERVABLES:
        raise UnknownObservableError(
            f"Unknown observable: {key}", details={"allowed": list(OBSERVABLES)}
        )
    return OBSERVABLES[key]


def get_all_observables() -> List[ObservableLabel]:
    """Get all nine Alice and seven Bob observables."""
    return list(OBSERVABLES.values())


@lru_cache(maxsize=None)
def build_observable(key: str) -> Operator:
    """16-dimensional operator for a registered observable."""
    label = get_observable(key)
    return tensor_embed(label.word, label.slots, TOTAL_QUBITS)


def build_ideal_state(phase: float = 0.0) -> StateVector:
    """|ψ⁻>₁₃ ⊗ |ψ⁻>₂₄ in slot order 1,2,3,4.

    ``phase`` is the preparation phase between the |01> and |10> components
    of each singlet: (|01> - e^{iφ}|10>)/√2.
    """
    singlet = np.array([0.0, 1.0, -np.exp(1j * phase), 0.0], dtype=complex) / np.sqrt(2)
    return reorder_qubits(np.kron(singlet, singlet), (1, 3, 2, 4))


def context_table() -> List[ContextSequence]:
    """Alice's six measurement sequences with their χ signs."""
    return list(SEQUENCES)


def get_context(seq_id: str) -> ContextSequence:
    """Get a sequence by id."""
    for seq in SEQUENCES:
        if seq.id == seq_id:
            return seq
    raise UnknownObservableError(
        f"Unknown sequence: {seq_id}", details={"allowed": list(SEQUENCE_IDS)}
    )


def verify_context_algebra(seq: ContextSequence) -> ContextAlgebra:
    """Check that a sequence's observables commute and multiply to ±I."""
    ops = [build_observable(k) for k in seq.labels]
    norms = [
        commutator_norm(ops[i], ops[j]) for i in range(3) for j in range(i + 1, 3)
    ]
    max_norm = max(norms)
    if max_norm > ALGEBRA_TOL:
        raise NonCommutingContextError(
            f"Sequence {seq.id} contains a non-commuting pair",
            details={"labels": list(seq.labels), "max_commutator_norm": max_norm},
        )

    prod = ops[0] @ ops[1] @ ops[2]
    identity = Operator.identity(prod.dim)
    if prod.allclose(identity):
        sign = 1
    elif prod.allclose(Operator(matrix=-identity.matrix)):
        sign = -1
    else:
        raise ModelDefinitionError(
            f"Ordered product of {seq.id} is not ±I",
            details={"labels": list(seq.labels)},
        )
    return ContextAlgebra(
        sequence=seq.id, commuting=True, max_commutator_norm=max_norm, product_sign=sign
    )


def s_term_table() -> List[STerm]:
    """The twelve remote-correlation terms, two per sequence."""
    return list(S_TERMS)


def s_terms_for(seq_id: str) -> List[STerm]:
    """S-terms belonging to one sequence (positions 2 and 3)."""
    get_context(seq_id)
    return [t for t in S_TERMS if t.sequence == seq_id]


def compute_fixed_signs() -> Dict[str, int]:
    """Recompute the ideal-state sign of <X X'> for every Alice label in an S-term."""
    rho = DensityOperator.from_state_vector(build_ideal_state())
    signs: Dict[str, int] = {}
    for term in S_TERMS:
        value = expectation(
            rho, build_observable(term.alice_label) @ build_observable(term.bob_label)
        )
        if abs(abs(value) - 1.0) > ALGEBRA_TOL:
            raise ModelDefinitionError(
                f"{term.term_id} is not perfectly correlated on the ideal state",
                details={"expectation": value},
            )
        signs[term.alice_label] = 1 if value > 0 else -1
    logger.debug("Fixed signs recomputed", extra={"fixed_signs": signs})
    return signs


def registry_document() -> Dict[str, Any]:
    """JSON-ready description of the whole registry."""
    return {
        "qubits": {
            "1": "alice-spatial-mode",
            "2": "alice-polarization",
            "3": "bob-spatial-mode",
            "4": "bob-polarization",
        },
        "observables": [
            {
                "key": o.key,
                "party": o.party.value,
                "word": o.word.letters,
                "slots": list(o.slots),
            }
            for o in OBSERVABLES.values()
        ],
        "sequences": [
            {"id": s.id, "labels": list(s.labels), "chi_sign": s.chi_sign}
            for s in SEQUENCES
        ],
        "s_terms": [
            {
                "term": t.term_id,
                "sequence": t.sequence,
                "position": t.position,
                "alice_label": t.alice_label,
                "bob_label": t.bob_label,
                "fixed_sign": t.fixed_sign,
            }
            for t in S_TERMS
        ],
        "fixed_signs": dict(FIXED_SIGNS),
    }
