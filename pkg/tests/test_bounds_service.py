import numpy as np
import pytest

from src.core.exceptions import BoundsError
from src.data.peres_mermin import FIXED_SIGNS
from src.models.bounds import BoundModel, DeterministicStrategy, NCHVAssignment
from src.models.domain import ALICE_KEYS, BOB_KEYS, SEQUENCE_IDS, SignMode
from src.services.bounds_service import (
    BOB_ASSIGNMENTS,
    NCHV_ASSIGNMENTS,
    TRIPLES,
    BoundsService,
    SweepPartial,
    arrays_to_strategy,
    merge_partials,
    nchv_chi_values,
    random_strategies,
    strategy_to_arrays,
)

FIXED = SignMode.FIXED_SIGN
ABSOLUTE = SignMode.ABSOLUTE


def all_plus_strategy(bob=None) -> DeterministicStrategy:
    return DeterministicStrategy(
        alice={s: (1, 1, 1) for s in SEQUENCE_IDS},
        bob=bob or {k: 1 for k in BOB_KEYS},
    )


def partner_witness() -> DeterministicStrategy:
    """All +1 for Alice; Bob answers each partner with its fixed sign."""
    return all_plus_strategy({k: FIXED_SIGNS[k.rstrip("'")] for k in BOB_KEYS})


class TestTables:
    def test_shapes(self):
        assert TRIPLES.shape == (8, 3)
        assert BOB_ASSIGNMENTS.shape == (128, 7)
        assert NCHV_ASSIGNMENTS.shape == (512, 9)
        assert tuple(TRIPLES[0]) == (1, 1, 1)

    def test_all_plus_noncontextual_chi(self):
        assert nchv_chi_values(NCHV_ASSIGNMENTS[:1])[0] == 4

    def test_strategy_array_conversion(self):
        strategy = partner_witness()
        alice, bob = strategy_to_arrays(strategy)
        assert alice.shape == (6, 3) and bob.shape == (7,)
        assert arrays_to_strategy(alice, bob) == strategy

    def test_strategy_validation(self):
        with pytest.raises(ValueError):
            DeterministicStrategy(
                alice={s: (1, 1, 1) for s in SEQUENCE_IDS},
                bob={k: 0 for k in BOB_KEYS},
            )
        with pytest.raises(ValueError):
            NCHVAssignment(values={k: 1 for k in ALICE_KEYS[:-1]})


class TestEvaluation:
    def test_all_plus_scores_zero(self, bounds_service):
        assert bounds_service.evaluate_strategy(all_plus_strategy(), FIXED) == 0

    def test_partner_witness_scores_sixteen(self, bounds_service):
        assert bounds_service.evaluate_strategy(partner_witness(), FIXED) == 16

    def test_absolute_mode_counts_every_remote_term(self, bounds_service):
        assert bounds_service.evaluate_strategy(all_plus_strategy(), ABSOLUTE) == 16

    def test_sequence_decomposition(self, bounds_service, rng):
        alice, bob = random_strategies(1000, rng)
        batch = bounds_service.evaluate_strategies(alice, bob, FIXED)
        for i in range(1000):
            strategy = arrays_to_strategy(alice[i], bob[i])
            parts = bounds_service.sequence_contributions(strategy, FIXED)
            assert set(parts) == set(SEQUENCE_IDS)
            assert sum(parts.values()) == batch[i]

    @pytest.mark.slow
    @pytest.mark.parametrize("mode", [FIXED, ABSOLUTE])
    def test_random_strategies_stay_below_sweep_maximum(self, bounds_service, rng, mode):
        report = bounds_service.enumerate_lhv_omega(mode)
        alice, bob = random_strategies(100_000, rng)
        values = bounds_service.evaluate_strategies(alice, bob, mode)
        assert values.max() <= report.maximum
        assert values.min() >= -report.maximum
        hit_rate = report.maximizer_count / report.sweep_size
        hits = int((values == report.maximum).sum())
        expected = 100_000 * hit_rate
        assert abs(hits - expected) <= 5 * np.sqrt(expected * (1 - hit_rate)) + 1

    def test_flipping_a_first_outcome_costs_two(self, bounds_service):
        report = bounds_service.enumerate_lhv_omega(FIXED)
        strategy = report.witness_strategy
        alice = dict(strategy.alice)
        t1, t2, t3 = alice["CAB"]
        alice["CAB"] = (-t1, t2, t3)
        flipped = DeterministicStrategy(alice=alice, bob=strategy.bob)
        assert bounds_service.evaluate_strategy(flipped, FIXED) == report.maximum - 2

    def test_mixture_is_linear_in_fixed_mode(self, bounds_service, rng):
        alice, bob = random_strategies(5, rng)
        weights = np.array([0.1, 0.2, 0.3, 0.15, 0.25])
        values = bounds_service.evaluate_strategies(alice, bob, FIXED)
        mixed = bounds_service.evaluate_mixture(alice, bob, weights, FIXED)
        assert mixed == pytest.approx(float(weights @ values))

    def test_mixture_absolute_mode_is_convex(self, bounds_service, rng):
        alice, bob = random_strategies(5, rng)
        weights = np.full(5, 0.2)
        values = bounds_service.evaluate_strategies(alice, bob, ABSOLUTE)
        mixed = bounds_service.evaluate_mixture(alice, bob, weights, ABSOLUTE)
        assert mixed <= float(weights @ values) + 1e-12

    def test_mixture_rejects_negative_weights(self, bounds_service, rng):
        alice, bob = random_strategies(2, rng)
        with pytest.raises(BoundsError):
            bounds_service.evaluate_mixture(alice, bob, [1.0, -0.5], FIXED)


class TestSweeps:
    def test_nchv(self, bounds_service):
        report = bounds_service.enumerate_nchv_chi()
        assert report.maximum == 4
        assert report.maximizer_count == 96
        assert report.sweep_size == 512
        assert report.bound_reproduced
        assert report.witness_assignment.values == {k: 1 for k in ALICE_KEYS}

    @pytest.mark.parametrize(
        "mode, past_only, count, size",
        [
            (FIXED, False, 128, 2**25),
            (ABSOLUTE, False, 524288, 2**25),
            (FIXED, True, 32, 2**23),
            (ABSOLUTE, True, 131072, 2**23),
        ],
    )
    def test_contextual_lhv(self, bounds_service, mode, past_only, count, size):
        report = bounds_service.enumerate_lhv_omega(mode, past_only=past_only)
        assert report.maximum == 18
        assert report.maximizer_count == count
        assert report.sweep_size == size
        assert report.witness_value == 18
        assert not report.bound_reproduced
        assert not report.within_printed_bound

    def test_past_only_witness_shares_first_outcomes(self, bounds_service):
        report = bounds_service.enumerate_lhv_omega(FIXED, past_only=True)
        alice = report.witness_strategy.alice
        assert alice["cba"][0] == alice["cγC"][0]
        assert alice["βγα"][0] == alice["βbB"][0]
        assert report.model_class == "lhv-past-only"

    @pytest.mark.parametrize(
        "mode, bob_all_plus, count",
        [(FIXED, False, 96), (ABSOLUTE, False, 12288), (FIXED, True, 2)],
    )
    def test_noncontextual_local(self, bounds_service, mode, bob_all_plus, count):
        report = bounds_service.noncontextual_local_omega(mode, bob_all_plus=bob_all_plus)
        assert report.maximum == 16
        assert report.maximizer_count == count
        assert report.bound_reproduced
        assert report.witness_value == 16

    def test_noncontextual_witness_is_consistent(self, bounds_service):
        report = bounds_service.noncontextual_local_omega(FIXED)
        expanded = DeterministicStrategy.from_nchv(
            report.witness_assignment, report.witness_strategy.bob
        )
        assert expanded == report.witness_strategy

    def test_contextual_gap(self, bounds_service):
        contextual = bounds_service.run(BoundModel.LHV, FIXED)
        noncontextual = bounds_service.run(BoundModel.NC_LOCAL, FIXED)
        assert contextual.maximum - noncontextual.maximum == 2

    @pytest.mark.parametrize("partitions", [1, 3, 128])
    def test_partitioning_does_not_change_results(self, bounds_service, partitions):
        split = BoundsService(partitions=partitions)
        for model in (BoundModel.LHV, BoundModel.NC_LOCAL):
            a = bounds_service.run(model, FIXED)
            b = split.run(model, FIXED)
            assert (a.maximum, a.maximizer_count) == (b.maximum, b.maximizer_count)
            assert a.witness_strategy == b.witness_strategy

    def test_wall_time_only_when_requested(self, bounds_service):
        assert bounds_service.enumerate_nchv_chi().wall_time is None
        timed = BoundsService(record_timing=True).enumerate_nchv_chi()
        assert timed.wall_time is not None


class TestValidation:
    def test_partition_range(self):
        with pytest.raises(BoundsError):
            BoundsService(partitions=200)

    def test_option_requires_matching_model(self, bounds_service):
        with pytest.raises(BoundsError):
            bounds_service.run(BoundModel.NCHV, past_only=True)
        with pytest.raises(BoundsError):
            bounds_service.run(BoundModel.LHV, bob_all_plus=True)

    def test_merge_partials(self):
        parts = [
            SweepPartial(18, 3, (5,)),
            SweepPartial(17, 9, (0,)),
            SweepPartial(18, 2, (2,)),
        ]
        merged = merge_partials(parts)
        assert merged == SweepPartial(18, 5, (2,))
        assert merge_partials(reversed(parts)) == merged
        with pytest.raises(BoundsError):
            merge_partials([])
