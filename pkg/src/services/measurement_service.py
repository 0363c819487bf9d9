"""Sequential-measurement engine: exact joint distributions and χ, S, ω."""

import logging
import time
from functools import lru_cache
from itertools import combinations
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from ..core.exceptions import (
    ContextualityError,
    MeasurementError,
    MissingPositionError,
    NoiseParameterError,
)
from ..data.peres_mermin import (
    build_observable,
    context_table,
    get_context,
    s_term_table,
)
from ..models.domain import (
    BOB_KEYS,
    SEQUENCE_IDS,
    ChiTerm,
    CorrelatorReport,
    JointDistribution,
    MeasurementPlan,
    NoSignalingReport,
    SignMode,
    STermValue,
)
from ..quantum.linalg import (
    BRANCH_TOL,
    DensityOperator,
    StateVector,
    dichotomic_projectors,
)

logger = logging.getLogger(__name__)

NCHV_BOUND = 4
LHV_BOUND = 16

StateLike = Union[DensityOperator, StateVector, np.ndarray]


@lru_cache(maxsize=None)
def _projector_arrays(key: str) -> Dict[int, np.ndarray]:
    pair = dichotomic_projectors(build_observable(key))
    return {1: pair.plus.matrix, -1: pair.minus.matrix}


def _as_array(state: StateLike) -> np.ndarray:
    if isinstance(state, DensityOperator):
        return state.matrix
    if isinstance(state, StateVector):
        return np.outer(state.amplitudes, state.amplitudes.conj())
    return np.asarray(state, dtype=complex)


def depolarize_alice(rho: np.ndarray, eta: float) -> np.ndarray:
    """ηρ + (1-η)·I₄/4 ⊗ Tr₁₂ρ on a (possibly unnormalized) 16×16 array."""
    if eta == 1.0:
        return rho
    bob = np.einsum("abac->bc", rho.reshape(4, 4, 4, 4))
    return eta * rho + (1.0 - eta) * np.kron(np.eye(4) / 4.0, bob)


def experiment_plans() -> List[MeasurementPlan]:
    """The six χ configurations followed by the twelve S configurations."""
    plans = [MeasurementPlan(sequence=s) for s in SEQUENCE_IDS]
    plans += [
        MeasurementPlan(sequence=t.sequence, bob_setting=t.bob_label)
        for t in s_term_table()
    ]
    return plans


def all_plans() -> List[MeasurementPlan]:
    """Every sequence with no Bob measurement and with each of Bob's settings."""
    return [
        MeasurementPlan(sequence=s, bob_setting=b)
        for s in SEQUENCE_IDS
        for b in (None, *BOB_KEYS)
    ]


def correlator(dist: JointDistribution, positions: Iterable) -> float:
    """Expectation of the product of the outcomes at ``positions``.

    For positions {1, 2, 3} this is P1 - P2 + P3 - ... over the
    +1-first outcome order.
    """
    available = dist.plan.positions
    indices = []
    for pos in positions:
        if pos not in available:
            raise MissingPositionError(
                f"Position {pos} not recorded by plan {dist.plan.plan_id}",
                details={"available": [str(p) for p in available]},
            )
        indices.append(available.index(pos))

    return float(
        sum(
            p * np.prod([outcome[i] for i in indices])
            for outcome, p in zip(dist.outcomes, dist.probabilities)
        )
    )


def total_variation(p: Sequence[float], q: Sequence[float]) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


class SequentialMeasurementService:
    """Lüders-rule engine for Alice's three-step sequences and Bob's single setting."""

    def __init__(self, measurement_visibility: float = 1.0):
        """
        Initialize the engine.

        Args:
            measurement_visibility: η of the depolarizing channel applied to
                Alice's qubits before her second and third measurements
        """
        if not 0.0 <= measurement_visibility <= 1.0:
            raise NoiseParameterError(
                "Measurement visibility must lie in [0, 1]",
                details={"per_measurement_visibility": measurement_visibility},
            )
        self.eta = float(measurement_visibility)
        logger.debug("Measurement engine initialized", extra={"eta": self.eta})

    def _branch_probabilities(
        self, rho: np.ndarray, plan: MeasurementPlan, bob_stage: int
    ) -> Tuple[float, ...]:
        seq = get_context(plan.sequence)
        steps: List[Tuple[object, str]] = [(i + 1, k) for i, k in enumerate(seq.labels)]
        if plan.bob_setting is not None:
            steps.insert(bob_stage, ("B", plan.bob_setting))

        branches: List[Tuple[Dict[object, int], np.ndarray]] = [({}, rho)]
        for pos, key in steps:
            if pos in (2, 3):
                branches = [(o, depolarize_alice(r, self.eta)) for o, r in branches]
            projectors = _projector_arrays(key)
            next_branches = []
            for outcomes, r in branches:
                for value in (1, -1):
                    proj = projectors[value]
                    updated = proj @ r @ proj
                    if np.trace(updated).real <= BRANCH_TOL:
                        continue
                    next_branches.append(({**outcomes, pos: value}, updated))
            branches = next_branches

        weights: Dict[Tuple[int, ...], float] = {}
        for outcomes, r in branches:
            key = tuple(outcomes[p] for p in plan.positions)
            weights[key] = max(float(np.trace(r).real), 0.0)
        return tuple(weights.get(o, 0.0) for o in plan.outcome_space())

    def run_plan(
        self, state: StateLike, plan: MeasurementPlan, bob_stage: int = 0
    ) -> JointDistribution:
        """
        Exact joint distribution of one plan by iterated Lüders updates.

        Args:
            state: 16-dimensional state
            plan: Alice's sequence and optional Bob setting
            bob_stage: 0 applies Bob's projector first, k applies it after
                Alice's k-th measurement

        Returns:
            Joint distribution aligned with the plan's outcome space
        """
        rho = _as_array(state)
        if rho.shape != (16, 16):
            raise MeasurementError(
                "Plans run on 16-dimensional states",
                details={"shape": list(rho.shape)},
            )
        if bob_stage not in (0, 1, 2, 3):
            raise MeasurementError(
                "Bob stage must be 0, 1, 2 or 3", details={"bob_stage": bob_stage}
            )
        try:
            probabilities = self._branch_probabilities(rho, plan, bob_stage)
            logger.debug(
                f"Plan {plan.plan_id} evaluated",
                extra={"plan_id": plan.plan_id, "bob_stage": bob_stage},
            )
            return JointDistribution(plan=plan, probabilities=probabilities)
        except ContextualityError:
            raise
        except Exception as e:
            logger.error(f"Plan {plan.plan_id} failed: {e}", exc_info=True)
            raise MeasurementError(
                f"Plan evaluation failed: {str(e)}", details={"plan": plan.plan_id}
            )

    def run_plans(
        self, state: StateLike, plans: Iterable[MeasurementPlan]
    ) -> Dict[str, JointDistribution]:
        rho = _as_array(state)
        return {p.plan_id: self.run_plan(rho, p) for p in plans}

    def raw_term_values(
        self, state: StateLike
    ) -> Tuple[Dict[str, float], Dict[str, float]]:
        """Sequence-product correlators and signed remote correlators.

        Returns:
            (sequence id -> <o1 o2 o3>, term id -> <X X'>)
        """
        rho = _as_array(state)
        chi = {
            s: correlator(self.run_plan(rho, MeasurementPlan(sequence=s)), (1, 2, 3))
            for s in SEQUENCE_IDS
        }
        signed = {}
        for term in s_term_table():
            dist = self.run_plan(
                rho, MeasurementPlan(sequence=term.sequence, bob_setting=term.bob_label)
            )
            signed[term.term_id] = correlator(dist, (term.position, "B"))
        return chi, signed

    def evaluate_chi(self, state: StateLike) -> Tuple[List[ChiTerm], float]:
        """Six-term χ breakdown and total."""
        rho = _as_array(state)
        terms = []
        for seq in context_table():
            value = correlator(
                self.run_plan(rho, MeasurementPlan(sequence=seq.id)), (1, 2, 3)
            )
            terms.append(
                ChiTerm(
                    sequence=seq.id,
                    chi_sign=seq.chi_sign,
                    correlator=value,
                    contribution=seq.chi_sign * value,
                )
            )
        return terms, float(sum(t.contribution for t in terms))

    def evaluate_s(
        self, state: StateLike, mode: SignMode = SignMode.ABSOLUTE
    ) -> Tuple[List[STermValue], float]:
        """Twelve-term S breakdown and total in the requested sign mode."""
        rho = _as_array(state)
        terms = []
        for term in s_term_table():
            dist = self.run_plan(
                rho, MeasurementPlan(sequence=term.sequence, bob_setting=term.bob_label)
            )
            signed = correlator(dist, (term.position, "B"))
            contribution = (
                abs(signed) if mode == SignMode.ABSOLUTE else term.fixed_sign * signed
            )
            terms.append(
                STermValue(
                    sequence=term.sequence,
                    position=term.position,
                    alice_label=term.alice_label,
                    bob_label=term.bob_label,
                    fixed_sign=term.fixed_sign,
                    signed=signed,
                    absolute=abs(signed),
                    contribution=contribution,
                )
            )
        return terms, float(sum(t.contribution for t in terms))

    def evaluate_omega(
        self, state: StateLike, mode: SignMode = SignMode.ABSOLUTE
    ) -> CorrelatorReport:
        """ω = χ + S with NCHV and LHV violation flags."""
        start = time.time()
        rho = _as_array(state)
        chi_terms, chi = self.evaluate_chi(rho)
        s_terms, s = self.evaluate_s(rho, mode)
        omega = chi + s
        report = CorrelatorReport(
            chi=chi,
            chi_terms=chi_terms,
            s=s,
            s_mode=mode,
            s_terms=s_terms,
            omega=omega,
            violates_nchv=chi > NCHV_BOUND,
            violates_lhv=omega > LHV_BOUND,
        )
        logger.info(
            f"Evaluated omega = {omega:.6f} (chi = {chi:.6f}, S = {s:.6f})",
            extra={
                "chi": chi,
                "s": s,
                "omega": omega,
                "s_mode": mode.value,
                "eta": self.eta,
                "duration": time.time() - start,
            },
        )
        return report

    def no_signaling_report(self, state: StateLike) -> NoSignalingReport:
        """
        Exact no-signaling check.

        For each Bob setting, Bob's marginal is compared across Alice's six
        sequences; for each sequence, Alice's triple marginal is compared
        across no Bob measurement and all seven Bob settings.
        """
        rho = _as_array(state)
        dists = self.run_plans(rho, all_plans())

        bob_dev: Dict[str, float] = {}
        for bob in BOB_KEYS:
            marginals = [
                bob_marginal(dists[MeasurementPlan(sequence=s, bob_setting=bob).plan_id])
                for s in SEQUENCE_IDS
            ]
            bob_dev[bob] = _max_pairwise_tv(marginals)

        alice_dev: Dict[str, float] = {}
        for seq in SEQUENCE_IDS:
            marginals = [
                alice_marginal(dists[MeasurementPlan(sequence=seq, bob_setting=b).plan_id])
                for b in (None, *BOB_KEYS)
            ]
            alice_dev[seq] = _max_pairwise_tv(marginals)

        max_dev = max([*bob_dev.values(), *alice_dev.values()])
        logger.info(
            f"No-signaling max deviation: {max_dev:.3e}",
            extra={"max_deviation": max_dev, "eta": self.eta},
        )
        return NoSignalingReport(
            bob_marginal_deviation=bob_dev,
            alice_marginal_deviation=alice_dev,
            max_deviation=max_dev,
        )


def alice_marginal(dist: JointDistribution) -> Tuple[float, ...]:
    """Probabilities of Alice's eight triples, summed over Bob's outcome."""
    if dist.plan.bob_setting is None:
        return tuple(dist.probabilities)
    probs = dist.as_dict()
    return tuple(
        probs[(*triple, 1)] + probs[(*triple, -1)]
        for triple in MeasurementPlan(sequence=dist.plan.sequence).outcome_space()
    )


def bob_marginal(dist: JointDistribution) -> Tuple[float, float]:
    """(P(oB = +1), P(oB = -1))."""
    if dist.plan.bob_setting is None:
        raise MissingPositionError(
            f"Plan {dist.plan.plan_id} has no Bob measurement"
        )
    plus = sum(p for o, p in zip(dist.outcomes, dist.probabilities) if o[3] == 1)
    minus = sum(p for o, p in zip(dist.outcomes, dist.probabilities) if o[3] == -1)
    return plus, minus


def _max_pairwise_tv(marginals: List[Sequence[float]]) -> float:
    return max(total_variation(p, q) for p, q in combinations(marginals, 2))
