"""Dense complex linear algebra for Hilbert spaces of up to four qubits.

Operators, pure states and density operators are frozen pydantic models
wrapping read-only numpy arrays. Invariants are checked on construction;
hot paths inside the measurement engine work on raw arrays and wrap the
results with ``model_construct`` once they are known to be valid.

Tensor slots follow qubit-index order: slot 1 is the leftmost Kronecker
factor.
"""

import string
from functools import reduce
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.exceptions import (
    DimensionMismatchError,
    InvalidSlotError,
    InvalidStateError,
    LinearAlgebraError,
    NonHermitianError,
    NotDichotomicError,
)

ALGEBRA_TOL = 1e-9
BRANCH_TOL = 1e-12
ALLOWED_DIMS = (2, 4, 16)

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# XY = iZ, YZ = iX, ZX = iY; reversed order picks up -i
_CYCLIC = {("X", "Y"): "Z", ("Y", "Z"): "X", ("Z", "X"): "Y"}


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=complex)
    out.setflags(write=False)
    return out


def _max_abs(array: np.ndarray) -> float:
    return float(np.max(np.abs(array))) if array.size else 0.0


def _check_square(matrix: np.ndarray) -> np.ndarray:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError(
            "Operator entries must form a square matrix",
            details={"shape": list(matrix.shape)},
        )
    if matrix.shape[0] not in ALLOWED_DIMS:
        raise DimensionMismatchError(
            f"Dimension {matrix.shape[0]} not supported",
            details={"allowed": list(ALLOWED_DIMS)},
        )
    return matrix


def pauli_matrix(letter: str) -> np.ndarray:
    """2×2 matrix of a single Pauli letter."""
    if letter not in PAULI_MATRICES:
        raise LinearAlgebraError(
            f"Unknown Pauli letter: {letter!r}", details={"allowed": "IXYZ"}
        )
    return PAULI_MATRICES[letter]


def pauli_product(left: str, right: str) -> tuple[complex, str]:
    """Multiply two single-qubit Pauli letters, returning (phase, letter)."""
    if left == "I":
        return 1, right
    if right == "I":
        return 1, left
    if left == right:
        return 1, "I"
    if (left, right) in _CYCLIC:
        return 1j, _CYCLIC[(left, right)]
    return -1j, _CYCLIC[(right, left)]


class PauliWord(BaseModel):
    """Tensor product of single-qubit Pauli letters, e.g. ``"ZX"``."""

    model_config = ConfigDict(frozen=True)

    letters: str = Field(..., pattern=r"^[IXYZ]+$", description="One letter per qubit")

    def __len__(self) -> int:
        return len(self.letters)

    def __str__(self) -> str:
        return self.letters

    @property
    def is_identity(self) -> bool:
        return set(self.letters) == {"I"}

    def multiply(self, other: "PauliWord") -> tuple[complex, "PauliWord"]:
        """Return (phase, word) with self·other = phase · word, letter by letter."""
        if len(other) != len(self):
            raise DimensionMismatchError(
                "Pauli words must have equal length to multiply",
                details={"left": self.letters, "right": other.letters},
            )
        phase: complex = 1
        letters = []
        for a, b in zip(self.letters, other.letters):
            p, c = pauli_product(a, b)
            phase *= p
            letters.append(c)
        return phase, PauliWord(letters="".join(letters))

    def to_matrix(self) -> np.ndarray:
        return reduce(np.kron, (pauli_matrix(c) for c in self.letters))


class Operator(BaseModel):
    """Dense complex operator on a 2-, 4- or 16-dimensional space."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    matrix: np.ndarray

    @field_validator("matrix", mode="before")
    @classmethod
    def _coerce(cls, v) -> np.ndarray:
        return _check_square(_frozen(v))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "Operator":
        return cls(matrix=np.eye(dim))

    def dagger(self) -> "Operator":
        return Operator(matrix=self.matrix.conj().T)

    def is_hermitian(self, tol: float = ALGEBRA_TOL) -> bool:
        return _max_abs(self.matrix - self.matrix.conj().T) <= tol

    def is_involution(self, tol: float = ALGEBRA_TOL) -> bool:
        return _max_abs(self.matrix @ self.matrix - np.eye(self.dim)) <= tol

    def is_projector(self, tol: float = ALGEBRA_TOL) -> bool:
        return self.is_hermitian(tol) and (
            _max_abs(self.matrix @ self.matrix - self.matrix) <= tol
        )

    def allclose(self, other: "Operator", tol: float = ALGEBRA_TOL) -> bool:
        return self.dim == other.dim and _max_abs(self.matrix - other.matrix) <= tol

    def __matmul__(self, other: "Operator") -> "Operator":
        if self.dim != other.dim:
            raise DimensionMismatchError(
                "Cannot compose operators of different dimension",
                details={"left": self.dim, "right": other.dim},
            )
        return Operator(matrix=self.matrix @ other.matrix)

    def __eq__(self, other) -> bool:
        return isinstance(other, Operator) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self) -> int:
        return hash(self.matrix.tobytes())


class StateVector(BaseModel):
    """Normalized pure state."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    amplitudes: np.ndarray

    @field_validator("amplitudes", mode="before")
    @classmethod
    def _coerce(cls, v) -> np.ndarray:
        amps = _frozen(v)
        if amps.ndim != 1 or amps.shape[0] not in ALLOWED_DIMS:
            raise InvalidStateError(
                "State vector must be one-dimensional with dimension 2, 4 or 16",
                details={"shape": list(amps.shape)},
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > ALGEBRA_TOL:
            raise InvalidStateError(
                "State vector is not normalized", details={"squared_norm": norm}
            )
        return amps

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def density(self) -> "DensityOperator":
        return DensityOperator.from_state_vector(self)

    def allclose(self, other: "StateVector", tol: float = ALGEBRA_TOL) -> bool:
        return self.dim == other.dim and _max_abs(self.amplitudes - other.amplitudes) <= tol

    def __eq__(self, other) -> bool:
        return isinstance(other, StateVector) and np.array_equal(
            self.amplitudes, other.amplitudes
        )

    def __hash__(self) -> int:
        return hash(self.amplitudes.tobytes())


class DensityOperator(BaseModel):
    """Hermitian, unit-trace, positive semidefinite operator."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    matrix: np.ndarray

    @field_validator("matrix", mode="before")
    @classmethod
    def _coerce(cls, v) -> np.ndarray:
        try:
            rho = _check_square(_frozen(v))
        except DimensionMismatchError as e:
            raise InvalidStateError(e.message, details=e.details)
        if _max_abs(rho - rho.conj().T) > ALGEBRA_TOL:
            raise InvalidStateError("Density operator is not Hermitian")
        trace = complex(np.trace(rho))
        if abs(trace - 1.0) > ALGEBRA_TOL:
            raise InvalidStateError(
                "Density operator must have unit trace",
                details={"trace": [trace.real, trace.imag]},
            )
        min_eig = float(np.linalg.eigvalsh(rho).min())
        if min_eig < -ALGEBRA_TOL:
            raise InvalidStateError(
                "Density operator has a negative eigenvalue",
                details={"min_eigenvalue": min_eig},
            )
        return rho

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_state_vector(cls, psi: StateVector) -> "DensityOperator":
        return cls.trusted(np.outer(psi.amplitudes, psi.amplitudes.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(matrix=np.eye(dim) / dim)

    @classmethod
    def trusted(cls, matrix: np.ndarray) -> "DensityOperator":
        """Wrap an array already known to satisfy the invariants."""
        return cls.model_construct(matrix=_frozen(matrix))

    def allclose(self, other: "DensityOperator", tol: float = ALGEBRA_TOL) -> bool:
        return self.dim == other.dim and _max_abs(self.matrix - other.matrix) <= tol

    def __eq__(self, other) -> bool:
        return isinstance(other, DensityOperator) and np.array_equal(
            self.matrix, other.matrix
        )

    def __hash__(self) -> int:
        return hash(self.matrix.tobytes())


class ProjectorPair(BaseModel):
    """Eigenprojectors of a dichotomic observable onto its +1 and -1 eigenspaces."""

    model_config = ConfigDict(frozen=True)

    plus: Operator
    minus: Operator

    @model_validator(mode="after")
    def _check_algebra(self) -> "ProjectorPair":
        p, m = self.plus.matrix, self.minus.matrix
        identity = np.eye(self.plus.dim)
        checks = {
            "completeness": _max_abs(p + m - identity),
            "orthogonality": _max_abs(p @ m),
            "plus_idempotent": _max_abs(p @ p - p),
            "minus_idempotent": _max_abs(m @ m - m),
        }
        failed = {k: v for k, v in checks.items() if v > ALGEBRA_TOL}
        if failed:
            raise LinearAlgebraError("Projector pair is inconsistent", details=failed)
        return self

    def observable(self) -> Operator:
        return Operator(matrix=self.plus.matrix - self.minus.matrix)

    def for_outcome(self, outcome: int) -> Operator:
        return self.plus if outcome > 0 else self.minus


class LudersBranch(BaseModel):
    """Result of conditioning a state on one projector."""

    model_config = ConfigDict(frozen=True)

    probability: float
    post_state: Optional[DensityOperator] = None

    @property
    def reachable(self) -> bool:
        return self.post_state is not None


def tensor_embed(word: PauliWord, slots: Sequence[int], total_qubits: int) -> Operator:
    """Act as ``word`` on ``slots`` (1-based) and as identity on every other qubit."""
    slots = list(slots)
    if len(slots) != len(word):
        raise InvalidSlotError(
            "Word length must equal the number of slots",
            details={"word": word.letters, "slots": slots},
        )
    if len(set(slots)) != len(slots):
        raise InvalidSlotError("Duplicate slot", details={"slots": slots})
    bad = [s for s in slots if not 1 <= s <= total_qubits]
    if bad:
        raise InvalidSlotError(
            "Slot out of range",
            details={"slots": bad, "total_qubits": total_qubits},
        )
    if 2**total_qubits not in ALLOWED_DIMS:
        raise DimensionMismatchError(
            f"{total_qubits} qubits give an unsupported dimension",
            details={"allowed": list(ALLOWED_DIMS)},
        )

    factors = [PAULI_MATRICES["I"]] * total_qubits
    for letter, slot in zip(word.letters, slots):
        factors[slot - 1] = PAULI_MATRICES[letter]
    return Operator(matrix=reduce(np.kron, factors))


def dichotomic_projectors(obs: Operator) -> ProjectorPair:
    """Spectral projectors (I ± obs)/2 of a Hermitian involution."""
    if not obs.is_hermitian():
        raise NotDichotomicError("Observable is not Hermitian")
    if not obs.is_involution():
        raise NotDichotomicError("Observable does not square to the identity")
    identity = np.eye(obs.dim)
    return ProjectorPair(
        plus=Operator(matrix=(identity + obs.matrix) / 2),
        minus=Operator(matrix=(identity - obs.matrix) / 2),
    )


def expectation(state: DensityOperator, obs: Operator) -> float:
    """Tr(state · obs) for a Hermitian observable."""
    if state.dim != obs.dim:
        raise DimensionMismatchError(
            "State and observable dimensions differ",
            details={"state": state.dim, "observable": obs.dim},
        )
    value = complex(np.trace(state.matrix @ obs.matrix))
    if abs(value.imag) > ALGEBRA_TOL:
        raise NonHermitianError(
            "Expectation value has an imaginary residue",
            details={"imag": value.imag},
        )
    return value.real


def luders_update(state: DensityOperator, proj: Operator) -> LudersBranch:
    """Condition ``state`` on ``proj``: p = Tr(PρP), ρ' = PρP / p."""
    if state.dim != proj.dim:
        raise DimensionMismatchError(
            "State and projector dimensions differ",
            details={"state": state.dim, "projector": proj.dim},
        )
    if not proj.is_projector():
        raise LinearAlgebraError("Operator is not a Hermitian idempotent")

    unnormalized = proj.matrix @ state.matrix @ proj.matrix
    probability = float(np.trace(unnormalized).real)
    if probability <= BRANCH_TOL:
        return LudersBranch(probability=max(probability, 0.0))
    return LudersBranch(
        probability=probability,
        post_state=DensityOperator.trusted(unnormalized / probability),
    )


def partial_trace(state: DensityOperator, keep: Sequence[int]) -> DensityOperator:
    """Reduced state on the 1-based qubits in ``keep`` (returned in index order)."""
    n = int(round(np.log2(state.dim)))
    keep = sorted(set(keep))
    if not keep or any(not 1 <= q <= n for q in keep):
        raise InvalidSlotError(
            "Qubits to keep are out of range", details={"keep": keep, "qubits": n}
        )

    letters = string.ascii_letters
    rows = list(letters[:n])
    cols = list(letters[n : 2 * n])
    for q in range(1, n + 1):
        if q not in keep:
            cols[q - 1] = rows[q - 1]
    out = "".join(rows[q - 1] for q in keep) + "".join(cols[q - 1] for q in keep)
    reduced = np.einsum(
        "".join(rows) + "".join(cols) + "->" + out, state.matrix.reshape([2] * (2 * n))
    )
    d = 2 ** len(keep)
    return DensityOperator(matrix=reduced.reshape(d, d))


def reorder_qubits(amplitudes: np.ndarray, factor_order: Sequence[int]) -> StateVector:
    """Re-sort a vector whose Kronecker factors follow ``factor_order`` into index order."""
    factor_order = list(factor_order)
    n = len(factor_order)
    if sorted(factor_order) != list(range(1, n + 1)):
        raise InvalidSlotError(
            "Factor order must be a permutation of 1..n",
            details={"factor_order": factor_order},
        )
    tensor = np.asarray(amplitudes, dtype=complex).reshape([2] * n)
    axes = [factor_order.index(q) for q in range(1, n + 1)]
    return StateVector(amplitudes=np.transpose(tensor, axes).reshape(-1))


def commutator_norm(a: Operator, b: Operator) -> float:
    """Largest entry of |AB - BA|."""
    return _max_abs(a.matrix @ b.matrix - b.matrix @ a.matrix)


def random_density_operator(dim: int, rng: np.random.Generator) -> DensityOperator:
    """Full-rank random state from the Ginibre ensemble."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return DensityOperator(matrix=rho / np.trace(rho).real)
