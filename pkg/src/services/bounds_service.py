"""Exhaustive hidden-variable sweeps for the χ and ω bounds.

All sweep arithmetic is exact integer arithmetic on numpy int64 arrays.
Outcome tuples are enumerated +1 first, so index 0 is the all-(+1) choice.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from itertools import product
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..config.settings import settings
from ..core.exceptions import BoundsError, ContextualityError
from ..data.peres_mermin import context_table, s_terms_for
from ..models.bounds import (
    BoundModel,
    BoundReport,
    DeterministicStrategy,
    NCHVAssignment,
)
from ..models.domain import ALICE_KEYS, BOB_KEYS, SEQUENCE_IDS, SignMode

logger = logging.getLogger(__name__)

NCHV_PRINTED_BOUND = 4
LHV_PRINTED_BOUND = 16

TRIPLES = np.array(list(product((1, -1), repeat=3)), dtype=np.int64)
BOB_ASSIGNMENTS = np.array(list(product((1, -1), repeat=len(BOB_KEYS))), dtype=np.int64)
NCHV_ASSIGNMENTS = np.array(
    list(product((1, -1), repeat=len(ALICE_KEYS))), dtype=np.int64
)


class SweepPartial(NamedTuple):
    """Best value, maximizer count and lexicographically smallest witness key."""

    maximum: int
    count: int
    witness: Tuple[int, ...]


class _SequenceSpec(NamedTuple):
    index: int
    chi_sign: int
    labels: Tuple[str, str, str]
    # (position, fixed_sign, bob column)
    terms: Tuple[Tuple[int, int, int], ...]


def _sequence_specs() -> List[_SequenceSpec]:
    specs = []
    for i, seq in enumerate(context_table()):
        terms = tuple(
            (t.position, t.fixed_sign, BOB_KEYS.index(t.bob_label))
            for t in s_terms_for(seq.id)
        )
        specs.append(_SequenceSpec(i, seq.chi_sign, seq.labels, terms))
    return specs


SEQUENCE_SPECS = _sequence_specs()


def merge_partials(partials: Iterable[SweepPartial]) -> SweepPartial:
    """Max-reduce partition results; independent of their order."""
    partials = list(partials)
    if not partials:
        raise BoundsError("Nothing to merge")
    best = max(p.maximum for p in partials)
    winners = [p for p in partials if p.maximum == best]
    return SweepPartial(
        maximum=best,
        count=sum(p.count for p in winners),
        witness=min(p.witness for p in winners),
    )


def _contribution_table(
    spec: _SequenceSpec, bob: np.ndarray, mode: SignMode
) -> np.ndarray:
    """(Bob assignment, Alice triple) -> χ-term plus the sequence's two S-terms."""
    chi = spec.chi_sign * TRIPLES.prod(axis=1)
    table = np.tile(chi, (bob.shape[0], 1))
    for position, sign, col in spec.terms:
        if mode == SignMode.FIXED_SIGN:
            table += sign * np.outer(bob[:, col], TRIPLES[:, position - 1])
        else:
            # |t·b| = 1 at every deterministic vertex
            table += 1
    return table


def _sequence_groups(past_only: bool) -> List[List[_SequenceSpec]]:
    """Sequences that must share their first outcome."""
    if not past_only:
        return [[spec] for spec in SEQUENCE_SPECS]
    groups: Dict[str, List[_SequenceSpec]] = {}
    for spec in SEQUENCE_SPECS:
        groups.setdefault(spec.labels[0], []).append(spec)
    return list(groups.values())


def _group_best(
    group: List[_SequenceSpec], tables: Dict[int, np.ndarray]
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per Bob row: best group value, maximizer count, and per-first-outcome values."""
    values, counts = [], []
    for first in (1, -1):
        cols = np.flatnonzero(TRIPLES[:, 0] == first)
        v = np.zeros(next(iter(tables.values())).shape[0], dtype=np.int64)
        c = np.ones_like(v)
        for spec in group:
            sub = tables[spec.index][:, cols]
            m = sub.max(axis=1)
            v += m
            c *= (sub == m[:, None]).sum(axis=1)
        values.append(v)
        counts.append(c)
    best = np.maximum(values[0], values[1])
    count = counts[0] * (values[0] == best) + counts[1] * (values[1] == best)
    return best, count, np.stack(values)


class BoundsService:
    """Enumerates deterministic hidden-variable strategies."""

    def __init__(self, partitions: Optional[int] = None, record_timing: bool = False):
        """
        Initialize the sweep service.

        Args:
            partitions: Number of Bob-assignment partitions per sweep
            record_timing: Whether reports carry wall time
        """
        self.partitions = partitions or settings.sweep_partitions
        if not 1 <= self.partitions <= len(BOB_ASSIGNMENTS):
            raise BoundsError(
                "Partition count must be between 1 and 128",
                details={"partitions": self.partitions},
            )
        self.record_timing = record_timing
        logger.debug("Bounds service initialized", extra={"partitions": self.partitions})

    def _bob_partitions(self, bob_indices: np.ndarray) -> List[np.ndarray]:
        return [p for p in np.array_split(bob_indices, self.partitions) if p.size]

    def _map_partitions(self, fn, parts: List[np.ndarray]) -> SweepPartial:
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            partials = list(pool.map(fn, parts))
        return merge_partials(partials)

    # Evaluators

    def evaluate_strategies(
        self, alice: np.ndarray, bob: np.ndarray, mode: SignMode
    ) -> np.ndarray:
        """
        Vectorised ω for a batch of strategies.

        Args:
            alice: (n, 6, 3) outcomes per sequence and position
            bob: (n, 7) outcomes per Bob setting
            mode: Sign mode for the S-terms

        Returns:
            (n,) integer values
        """
        alice = np.asarray(alice, dtype=np.int64)
        bob = np.asarray(bob, dtype=np.int64)
        total = np.zeros(alice.shape[0], dtype=np.int64)
        for spec in SEQUENCE_SPECS:
            total += self._sequence_values(spec, alice, bob, mode)
        return total

    def _sequence_values(
        self, spec: _SequenceSpec, alice: np.ndarray, bob: np.ndarray, mode: SignMode
    ) -> np.ndarray:
        triple = alice[:, spec.index, :]
        value = spec.chi_sign * triple.prod(axis=1)
        for position, sign, col in spec.terms:
            if mode == SignMode.FIXED_SIGN:
                value = value + sign * triple[:, position - 1] * bob[:, col]
            else:
                value = value + np.abs(triple[:, position - 1] * bob[:, col])
        return value

    def evaluate_strategy(self, strategy: DeterministicStrategy, mode: SignMode) -> int:
        """χ + S of one deterministic strategy, exactly."""
        alice, bob = strategy_to_arrays(strategy)
        return int(self.evaluate_strategies(alice[None], bob[None], mode)[0])

    def sequence_contributions(
        self, strategy: DeterministicStrategy, mode: SignMode
    ) -> Dict[str, int]:
        """Each sequence's χ-term plus its two S-terms under the strategy's Bob answers."""
        alice, bob = strategy_to_arrays(strategy)
        return {
            spec_id: int(self._sequence_values(spec, alice[None], bob[None], mode)[0])
            for spec_id, spec in zip(SEQUENCE_IDS, SEQUENCE_SPECS)
        }

    def evaluate_mixture(
        self,
        alice: np.ndarray,
        bob: np.ndarray,
        weights: Sequence[float],
        mode: SignMode,
    ) -> float:
        """ω of a probabilistic model mixing deterministic strategies."""
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.shape[0] != np.asarray(alice).shape[0] or np.any(w < 0):
            raise BoundsError("Weights must be non-negative, one per strategy")
        w = w / w.sum()
        alice = np.asarray(alice, dtype=float)
        bob = np.asarray(bob, dtype=float)

        total = 0.0
        for spec in SEQUENCE_SPECS:
            triple = alice[:, spec.index, :]
            total += spec.chi_sign * float(w @ triple.prod(axis=1))
            for position, sign, col in spec.terms:
                corr = float(w @ (triple[:, position - 1] * bob[:, col]))
                total += sign * corr if mode == SignMode.FIXED_SIGN else abs(corr)
        return total

    # Sweeps

    def enumerate_nchv_chi(self) -> BoundReport:
        """Maximize χ over all 512 noncontextual assignments."""
        start = time.time()
        chi = nchv_chi_values()
        best = int(chi.max())
        hits = np.flatnonzero(chi == best)
        witness = NCHVAssignment.from_tuple(tuple(NCHV_ASSIGNMENTS[hits[0]]))
        value = int(nchv_chi_values(NCHV_ASSIGNMENTS[hits[0]][None])[0])
        return self._report(
            model=BoundModel.NCHV,
            mode=None,
            maximum=best,
            count=len(hits),
            sweep_size=len(NCHV_ASSIGNMENTS),
            witness_assignment=witness,
            witness_value=value,
            printed_bound=NCHV_PRINTED_BOUND,
            start=start,
        )

    def enumerate_lhv_omega(
        self, mode: SignMode = SignMode.FIXED_SIGN, past_only: bool = False
    ) -> BoundReport:
        """
        Maximize ω over local strategies with contextual Alice responses.

        For each Bob assignment the sequences decouple (or, with
        ``past_only``, the groups of sequences sharing a first observable
        do), so each is maximized independently and the results summed.
        """
        start = time.time()
        groups = _sequence_groups(past_only)

        def sweep(bob_indices: np.ndarray) -> SweepPartial:
            bob = BOB_ASSIGNMENTS[bob_indices]
            tables = {s.index: _contribution_table(s, bob, mode) for s in SEQUENCE_SPECS}
            totals = np.zeros(len(bob_indices), dtype=np.int64)
            counts = np.ones(len(bob_indices), dtype=np.int64)
            for group in groups:
                best, count, _ = _group_best(group, tables)
                totals += best
                counts *= count
            top = int(totals.max())
            hits = totals == top
            return SweepPartial(
                maximum=top,
                count=int(counts[hits].sum()),
                witness=(int(bob_indices[np.flatnonzero(hits)[0]]),),
            )

        try:
            merged = self._map_partitions(
                sweep, self._bob_partitions(np.arange(len(BOB_ASSIGNMENTS)))
            )
            strategy = self._lhv_witness(merged.witness[0], mode, groups)
        except ContextualityError:
            raise
        except Exception as e:
            logger.error(f"LHV sweep failed: {e}", exc_info=True)
            raise BoundsError(f"LHV sweep failed: {str(e)}", details={"mode": mode.value})

        shared = sum(len(g) - 1 for g in groups)
        sweep_size = len(BOB_ASSIGNMENTS) * len(TRIPLES) ** len(SEQUENCE_SPECS) // 2**shared
        return self._report(
            model=BoundModel.LHV,
            mode=mode,
            past_only=past_only,
            maximum=merged.maximum,
            count=merged.count,
            sweep_size=sweep_size,
            witness_strategy=strategy,
            witness_value=self.evaluate_strategy(strategy, mode),
            printed_bound=LHV_PRINTED_BOUND,
            start=start,
        )

    def _lhv_witness(
        self, bob_index: int, mode: SignMode, groups: List[List[_SequenceSpec]]
    ) -> DeterministicStrategy:
        bob = BOB_ASSIGNMENTS[[bob_index]]
        tables = {s.index: _contribution_table(s, bob, mode) for s in SEQUENCE_SPECS}
        alice: Dict[str, Tuple[int, int, int]] = {}
        for group in groups:
            best, _, per_first = _group_best(group, tables)
            first = 1 if per_first[0, 0] == best[0] else -1
            cols = np.flatnonzero(TRIPLES[:, 0] == first)
            for spec in group:
                row = tables[spec.index][0, cols]
                choice = cols[int(np.argmax(row))]
                alice[SEQUENCE_IDS[spec.index]] = tuple(int(x) for x in TRIPLES[choice])
        return DeterministicStrategy(
            alice=alice, bob=dict(zip(BOB_KEYS, (int(x) for x in bob[0])))
        )

    def noncontextual_local_omega(
        self, mode: SignMode = SignMode.FIXED_SIGN, bob_all_plus: bool = False
    ) -> BoundReport:
        """Maximize ω when Alice is noncontextual and Bob is local."""
        start = time.time()
        chi = nchv_chi_values()
        alice_cols = [
            ALICE_KEYS.index(spec.labels[pos - 1])
            for spec in SEQUENCE_SPECS
            for pos, _, _ in spec.terms
        ]
        bob_cols = [col for spec in SEQUENCE_SPECS for _, _, col in spec.terms]
        signs = np.array(
            [sign for spec in SEQUENCE_SPECS for _, sign, _ in spec.terms], dtype=np.int64
        )
        alice_s = NCHV_ASSIGNMENTS[:, alice_cols] * signs

        def sweep(bob_indices: np.ndarray) -> SweepPartial:
            bob = BOB_ASSIGNMENTS[bob_indices][:, bob_cols]
            if mode == SignMode.FIXED_SIGN:
                s = alice_s @ bob.T
            else:
                s = np.full((len(NCHV_ASSIGNMENTS), len(bob_indices)), len(signs))
            totals = chi[:, None] + s
            top = int(totals.max())
            rows, cols = np.nonzero(totals == top)
            first = np.lexsort((rows, cols))[0]
            return SweepPartial(
                maximum=top,
                count=len(rows),
                witness=(int(bob_indices[cols[first]]), int(rows[first])),
            )

        indices = np.array([0]) if bob_all_plus else np.arange(len(BOB_ASSIGNMENTS))
        try:
            merged = self._map_partitions(sweep, self._bob_partitions(indices))
        except ContextualityError:
            raise
        except Exception as e:
            logger.error(f"Noncontextual-local sweep failed: {e}", exc_info=True)
            raise BoundsError(f"Noncontextual-local sweep failed: {str(e)}")

        bob_index, alice_index = merged.witness
        assignment = NCHVAssignment.from_tuple(tuple(NCHV_ASSIGNMENTS[alice_index]))
        strategy = DeterministicStrategy.from_nchv(
            assignment,
            dict(zip(BOB_KEYS, (int(x) for x in BOB_ASSIGNMENTS[bob_index]))),
        )
        return self._report(
            model=BoundModel.NC_LOCAL,
            mode=mode,
            bob_all_plus=bob_all_plus,
            maximum=merged.maximum,
            count=merged.count,
            sweep_size=len(NCHV_ASSIGNMENTS) * len(indices),
            witness_assignment=assignment,
            witness_strategy=strategy,
            witness_value=self.evaluate_strategy(strategy, mode),
            printed_bound=LHV_PRINTED_BOUND,
            start=start,
        )

    def run(
        self,
        model: BoundModel,
        mode: SignMode = SignMode.FIXED_SIGN,
        past_only: bool = False,
        bob_all_plus: bool = False,
    ) -> BoundReport:
        """Dispatch to the sweep for one model class."""
        if past_only and model != BoundModel.LHV:
            raise BoundsError("past_only applies only to the lhv class")
        if bob_all_plus and model != BoundModel.NC_LOCAL:
            raise BoundsError("bob_all_plus applies only to the nc-local class")
        if model == BoundModel.NCHV:
            return self.enumerate_nchv_chi()
        if model == BoundModel.LHV:
            return self.enumerate_lhv_omega(mode, past_only=past_only)
        return self.noncontextual_local_omega(mode, bob_all_plus=bob_all_plus)

    def _report(
        self, *, start: float, count: int, printed_bound: int, **fields
    ) -> BoundReport:
        if fields["witness_value"] != fields["maximum"]:
            raise BoundsError(
                "Witness does not reproduce the sweep maximum",
                details={
                    "maximum": fields["maximum"],
                    "witness_value": fields["witness_value"],
                },
            )
        wall_time = time.time() - start
        report = BoundReport(
            maximizer_count=count,
            printed_bound=printed_bound,
            bound_reproduced=fields["maximum"] == printed_bound,
            wall_time=wall_time if self.record_timing else None,
            **fields,
        )
        logger.info(
            f"Sweep {report.model_class} finished: max {report.maximum} "
            f"({report.maximizer_count} maximizers, printed bound {printed_bound})",
            extra={
                "model": report.model_class,
                "mode": report.mode.value if report.mode else None,
                "maximum": report.maximum,
                "maximizers": report.maximizer_count,
                "sweep_size": report.sweep_size,
                "duration": wall_time,
            },
        )
        if not report.bound_reproduced:
            logger.warning(
                f"Sweep {report.model_class} reaches {report.maximum}, "
                f"not the printed bound {printed_bound}",
                extra={"model": report.model_class, "maximum": report.maximum},
            )
        return report


def nchv_chi_values(assignments: Optional[np.ndarray] = None) -> np.ndarray:
    """χ for each row of (n, 9) noncontextual assignments."""
    values = NCHV_ASSIGNMENTS if assignments is None else np.asarray(assignments)
    chi = np.zeros(values.shape[0], dtype=np.int64)
    for spec in SEQUENCE_SPECS:
        cols = [ALICE_KEYS.index(k) for k in spec.labels]
        chi += spec.chi_sign * values[:, cols].prod(axis=1)
    return chi


def strategy_to_arrays(strategy: DeterministicStrategy) -> Tuple[np.ndarray, np.ndarray]:
    alice = np.array([strategy.alice[s] for s in SEQUENCE_IDS], dtype=np.int64)
    bob = np.array([strategy.bob[k] for k in BOB_KEYS], dtype=np.int64)
    return alice, bob


def arrays_to_strategy(alice: np.ndarray, bob: np.ndarray) -> DeterministicStrategy:
    return DeterministicStrategy(
        alice={s: tuple(int(x) for x in alice[i]) for i, s in enumerate(SEQUENCE_IDS)},
        bob={k: int(bob[i]) for i, k in enumerate(BOB_KEYS)},
    )


def random_strategies(
    n: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """n uniformly random strategies as (n, 6, 3) and (n, 7) arrays."""
    alice = rng.choice(np.array([1, -1]), size=(n, len(SEQUENCE_IDS), 3))
    bob = rng.choice(np.array([1, -1]), size=(n, len(BOB_KEYS)))
    return alice.astype(np.int64), bob.astype(np.int64)
