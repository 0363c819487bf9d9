import math

import pytest

from src.config.settings import settings
from src.core.exceptions import (
    EstimationError,
    MissingConfigurationError,
    SamplingError,
    SignificanceError,
)
from src.models.domain import MeasurementPlan, SignMode
from src.models.statistics import CountsCollection, CountsTable, NoiseModel
from src.services.measurement_service import all_plans, experiment_plans
from src.services.sampling_service import (
    binomial_se,
    plan_rng,
    significance,
    significance_result,
)


@pytest.fixture(scope="module")
def calibrated_counts(sampling_service, calibrated):
    return sampling_service.sample_experiment(calibrated, shots=200_000, seed=11)


@pytest.fixture(scope="module")
def full_counts(sampling_service, calibrated):
    return sampling_service.sample_experiment(
        calibrated, shots=100_000, seed=5, plans=all_plans()
    )


class TestSampling:
    def test_zero_shots_rejected(self, sampling_service):
        with pytest.raises(SamplingError):
            sampling_service.sample_experiment(NoiseModel(), shots=0, seed=1)

    def test_reproducible(self, sampling_service):
        a = sampling_service.sample_experiment(NoiseModel(), shots=500, seed=7)
        b = sampling_service.sample_experiment(NoiseModel(), shots=500, seed=7)
        c = sampling_service.sample_experiment(NoiseModel(), shots=500, seed=8)
        assert a == b
        assert a != c

    def test_plan_order_does_not_matter(self, sampling_service):
        plans = experiment_plans()
        forward = sampling_service.sample_experiment(
            NoiseModel(), shots=300, seed=3, plans=plans
        )
        backward = sampling_service.sample_experiment(
            NoiseModel(), shots=300, seed=3, plans=list(reversed(plans))
        )
        assert forward.tables == backward.tables

    def test_streams_are_per_plan(self):
        assert plan_rng(1, "CAB").integers(2**32) == plan_rng(1, "CAB").integers(2**32)
        assert plan_rng(1, "CAB").integers(2**32) != plan_rng(1, "cba").integers(2**32)

    def test_detection_efficiency_thins_shots(self, sampling_service):
        model = NoiseModel(detection_efficiency=0.033)
        table = sampling_service.sample_counts(
            model, MeasurementPlan(sequence="CAB"), shots=1_000_000, seed=2
        )
        sigma = math.sqrt(1_000_000 * 0.033 * 0.967)
        assert table.emitted == 1_000_000
        assert abs(table.shots - 33_000) < 5 * sigma
        assert sum(table.counts) == table.shots

    def test_counts_table_validation(self):
        plan = MeasurementPlan(sequence="CAB")
        with pytest.raises(SamplingError):
            CountsTable(plan=plan, emitted=10, shots=10, counts=[10], seed=0)
        with pytest.raises(SamplingError):
            CountsTable(plan=plan, emitted=10, shots=10, counts=[1] * 8, seed=0)


class TestEstimation:
    def test_ideal_sequence_products_are_exact(self, sampling_service):
        counts = sampling_service.sample_experiment(NoiseModel(), shots=2000, seed=4)
        report = sampling_service.estimate(counts)
        assert report.chi_terms["CAB"].value == 1.0
        assert report.chi_terms["CAB"].standard_error == 0.0
        assert report.chi_terms["cγC"].value == -1.0
        assert report.chi.value == 6.0

    def test_binomial_standard_error(self):
        assert binomial_se(0.0, 100) == pytest.approx(0.1)
        assert binomial_se(0.0, 400) == pytest.approx(0.05)
        assert binomial_se(1.0, 100) == 0.0
        assert binomial_se(-1.0, 100) == 0.0

    def test_estimates_agree_with_exact_values(
        self, sampling_service, noise_service, calibrated, calibrated_counts
    ):
        exact = noise_service.evaluate(calibrated)
        report = sampling_service.estimate(calibrated_counts)
        for key in ("chi", "s", "omega"):
            est = getattr(report, key)
            assert est.standard_error > 0
            assert abs(est.value - getattr(exact, key)) <= 5 * est.standard_error

    def test_independent_seeds_agree(
        self, sampling_service, calibrated, calibrated_counts
    ):
        other = sampling_service.estimate(
            sampling_service.sample_experiment(calibrated, shots=200_000, seed=12)
        )
        first = sampling_service.estimate(calibrated_counts)
        for key in ("chi", "s", "omega"):
            a, b = getattr(first, key), getattr(other, key)
            combined = math.hypot(a.standard_error, b.standard_error)
            assert abs(a.value - b.value) <= 5 * combined

    def test_errors_add_in_quadrature(self, sampling_service, calibrated_counts):
        report = sampling_service.estimate(calibrated_counts)
        expected = math.sqrt(report.chi.standard_error**2 + report.s.standard_error**2)
        assert report.omega.standard_error == pytest.approx(expected)
        assert report.configurations_disjoint
        assert len(report.chi_terms) == 6
        assert len(report.s_terms) == 12

    def test_exact_limit(self, sampling_service, noise_service, calibrated):
        engine = noise_service.engine(calibrated)
        rho = noise_service.apply_noise(calibrated)
        dists = engine.run_plans(rho, experiment_plans())
        exact = engine.evaluate_omega(rho)
        for source in ("dedicated", "marginal"):
            report = sampling_service.estimate_exact(dists, chi_source=source)
            assert report.chi.value == pytest.approx(exact.chi, abs=1e-10)
            assert report.omega.value == pytest.approx(exact.omega, abs=1e-10)
            assert report.omega.standard_error == 0.0

    def test_marginal_chi_source_reuses_configurations(
        self, sampling_service, calibrated_counts
    ):
        report = sampling_service.estimate(calibrated_counts, chi_source="marginal")
        assert not report.configurations_disjoint
        assert report.omega.shots == report.s.shots

    def test_missing_configuration(self, sampling_service):
        counts = sampling_service.sample_experiment(
            NoiseModel(), shots=100, seed=1, plans=experiment_plans()[:6]
        )
        with pytest.raises(MissingConfigurationError):
            sampling_service.estimate(counts)

    def test_unknown_chi_source(self, sampling_service, calibrated_counts):
        with pytest.raises(EstimationError):
            sampling_service.estimate(calibrated_counts, chi_source="pooled")

    def test_absolute_mode_flags_terms_near_zero(self, sampling_service):
        counts = sampling_service.sample_experiment(
            NoiseModel(state_white_noise=0.0), shots=10_000, seed=9
        )
        absolute = sampling_service.estimate(counts, SignMode.ABSOLUTE)
        fixed = sampling_service.estimate(counts, SignMode.FIXED_SIGN)
        assert absolute.s.biased_near_zero
        assert not fixed.s.biased_near_zero



class TestShotScaling:
    SHOTS = (10_000, 100_000, 1_000_000)

    @pytest.fixture(scope="class")
    def estimates(self, sampling_service, calibrated):
        return {
            n: sampling_service.estimate(
                sampling_service.sample_experiment(calibrated, shots=n, seed=21)
            )
            for n in self.SHOTS
        }

    @pytest.mark.parametrize("shots", SHOTS)
    def test_estimates_within_five_standard_errors(
        self, noise_service, calibrated, estimates, shots
    ):
        exact = noise_service.evaluate(calibrated)
        for key in ("chi", "s", "omega"):
            est = getattr(estimates[shots], key)
            assert abs(est.value - getattr(exact, key)) <= 5 * est.standard_error

    @pytest.mark.parametrize("fewer, more", list(zip(SHOTS, SHOTS[1:])))
    def test_standard_error_shrinks_as_root_n(self, estimates, fewer, more):
        for key in ("chi", "s"):
            ratio = (
                getattr(estimates[fewer], key).standard_error
                / getattr(estimates[more], key).standard_error
            )
            assert ratio == pytest.approx(math.sqrt(10), rel=0.2)


class TestSignificance:
    def test_measured_chi(self):
        result = significance_result(5.817, 0.011, 4.0)
        assert result.sigma == pytest.approx(165.18, abs=0.01)
        assert result.sigma_rounded == 165
        assert result.violated

    def test_measured_omega(self):
        result = significance_result(17.247, 0.019, 16.0)
        assert result.sigma == pytest.approx(65.63, abs=0.01)
        assert result.sigma_rounded == 66

    @pytest.mark.parametrize("se", [0.0, -0.1])
    def test_non_positive_error(self, se):
        with pytest.raises(SignificanceError):
            significance(1.0, se, 0.0)


class TestSampledNoSignaling:
    @pytest.mark.slow
    @pytest.mark.parametrize("seed", [settings.default_seed, 1, 2, 3, 4])
    def test_consistent_at_a_million_shots(self, sampling_service, calibrated, seed):
        counts = sampling_service.sample_experiment(
            calibrated, shots=1_000_000, seed=seed, plans=all_plans()
        )
        report = sampling_service.sampled_no_signaling_report(counts)
        assert report.threshold == 4.0
        assert report.consistent
        assert report.max_abs_z < report.threshold

    def test_consistent_counts(self, sampling_service, full_counts):
        report = sampling_service.sampled_no_signaling_report(full_counts)
        assert len(report.z_scores) == 13
        assert report.max_abs_z < 6.0
        assert report.max_deviation < 0.02

    def test_detects_signaling(self, sampling_service, full_counts):
        original = full_counts.get("CAB|A'")
        plan = original.plan
        counts = [0] * 16
        counts[0] = original.shots
        tampered = CountsTable(
            plan=plan,
            emitted=original.emitted,
            shots=original.shots,
            counts=counts,
            seed=original.seed,
        )
        collection = CountsCollection(
            tables={**full_counts.tables, plan.plan_id: tampered},
            seed=full_counts.seed,
            emitted_per_configuration=full_counts.emitted_per_configuration,
            detection_efficiency=full_counts.detection_efficiency,
        )
        report = sampling_service.sampled_no_signaling_report(collection)
        assert not report.consistent
        assert report.z_scores["bob:A'"] > 10
