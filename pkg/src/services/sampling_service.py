"""Finite-shot sampling, estimation with standard errors, and significance."""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np

from ..config.settings import settings
from ..core.exceptions import (
    ContextualityError,
    EstimationError,
    SamplingError,
    SignificanceError,
)
from ..core.utils import stable_hash
from ..data.peres_mermin import context_table, s_term_table, s_terms_for
from ..models.domain import JointDistribution, MeasurementPlan, SignMode
from ..models.statistics import (
    CountsCollection,
    CountsTable,
    EstimateReport,
    EstimateWithError,
    NoiseModel,
    SampledNoSignalingReport,
    SignificanceResult,
)
from .measurement_service import experiment_plans
from .noise_service import NoiseService

logger = logging.getLogger(__name__)

ChiSource = Literal["dedicated", "marginal"]
NEAR_ZERO_SE = 3.0


def plan_rng(seed: int, plan_id: str) -> np.random.Generator:
    """Independent stream per (master seed, plan id), whatever the sampling order."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(stable_hash(plan_id),))
    )


def binomial_se(mean: float, shots: int) -> float:
    """Standard error of a ±1 mean: 2·sqrt(p(1-p)/n) with p = (1+mean)/2."""
    p = min(max((1.0 + mean) / 2.0, 0.0), 1.0)
    return 2.0 * math.sqrt(p * (1.0 - p) / shots)


def significance(value: float, se: float, bound: float) -> float:
    """(value - bound) / se."""
    if not se > 0:
        raise SignificanceError(
            "Standard error must be positive", details={"standard_error": se}
        )
    return (value - bound) / se


def significance_result(value: float, se: float, bound: float) -> SignificanceResult:
    sigma = significance(value, se, bound)
    return SignificanceResult(
        value=value,
        standard_error=se,
        bound=bound,
        sigma=sigma,
        sigma_rounded=int(round(sigma)),
    )


class _Frequencies:
    """Outcome frequencies of one or more pooled configurations."""

    def __init__(self, outcomes: List[Tuple[int, ...]], weights: np.ndarray, shots: int):
        self.outcomes = np.array(outcomes, dtype=np.int64)
        self.weights = weights
        self.shots = shots

    def mean(self, indices: Sequence[int]) -> float:
        total = self.weights.sum()
        if total <= 0:
            raise EstimationError("Configuration recorded no shots")
        products = self.outcomes[:, list(indices)].prod(axis=1)
        return float(products @ self.weights / total)


class SamplingService:
    """Draws counts from exact distributions and turns counts into estimates."""

    def __init__(
        self,
        noise_service: Optional[NoiseService] = None,
        workers: Optional[int] = None,
    ):
        """
        Initialize sampling.

        Args:
            noise_service: Noise service instance
            workers: Threads used to sample configurations concurrently
        """
        self.noise = noise_service or NoiseService()
        self.workers = workers or settings.sampling_workers

    def sample_distribution(
        self,
        dist: JointDistribution,
        shots: int,
        seed: int,
        detection_efficiency: float = 1.0,
    ) -> CountsTable:
        """
        Thin the emitted pairs, then draw the recorded ones from ``dist``.

        Thinning is outcome-independent, so recorded counts stay a fair sample.
        """
        if shots < 1:
            raise SamplingError("At least one shot is required", details={"shots": shots})
        if not 0.0 < detection_efficiency <= 1.0:
            raise SamplingError(
                "Detection efficiency must lie in (0, 1]",
                details={"detection_efficiency": detection_efficiency},
            )
        rng = plan_rng(seed, dist.plan.plan_id)
        p = np.clip(np.array(dist.probabilities, dtype=float), 0.0, None)
        p = p / p.sum()
        recorded = (
            shots
            if detection_efficiency == 1.0
            else int(rng.binomial(shots, detection_efficiency))
        )
        counts = rng.multinomial(recorded, p)
        return CountsTable(
            plan=dist.plan,
            emitted=shots,
            shots=recorded,
            counts=[int(c) for c in counts],
            seed=seed,
        )

    def sample_counts(
        self, model: NoiseModel, plan: MeasurementPlan, shots: int, seed: int
    ) -> CountsTable:
        """Counts for one configuration under a noise model."""
        dist = self.noise.engine(model).run_plan(self.noise.apply_noise(model), plan)
        return self.sample_distribution(dist, shots, seed, model.detection_efficiency)

    def sample_experiment(
        self,
        model: NoiseModel,
        shots: int,
        seed: int,
        plans: Optional[Iterable[MeasurementPlan]] = None,
    ) -> CountsCollection:
        """
        Sample every configuration concurrently.

        Args:
            model: Noise model
            shots: Emitted pairs per configuration
            seed: Master seed
            plans: Configurations; defaults to the six χ and twelve S plans

        Returns:
            Counts keyed by plan id
        """
        if shots < 1:
            raise SamplingError("At least one shot is required", details={"shots": shots})
        start = time.time()
        plans = list(plans) if plans is not None else experiment_plans()
        try:
            engine = self.noise.engine(model)
            rho = self.noise.apply_noise(model)
            dists = [engine.run_plan(rho, p) for p in plans]
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                tables = list(
                    pool.map(
                        lambda d: self.sample_distribution(
                            d, shots, seed, model.detection_efficiency
                        ),
                        dists,
                    )
                )
        except ContextualityError:
            raise
        except Exception as e:
            logger.error(f"Sampling failed: {e}", exc_info=True)
            raise SamplingError(f"Sampling failed: {str(e)}", details={"seed": seed})

        logger.info(
            f"Sampled {len(tables)} configurations",
            extra={
                "configurations": len(tables),
                "shots": shots,
                "seed": seed,
                "recorded": sum(t.shots for t in tables),
                "duration": time.time() - start,
            },
        )
        return CountsCollection(
            tables={t.plan_id: t for t in tables},
            seed=seed,
            emitted_per_configuration=shots,
            detection_efficiency=model.detection_efficiency,
        )

    # Estimation

    def estimate(
        self,
        counts: CountsCollection,
        mode: SignMode = SignMode.ABSOLUTE,
        chi_source: ChiSource = "dedicated",
    ) -> EstimateReport:
        """
        Per-term means with binomial errors; χ, S, ω errors by quadrature.

        With ``chi_source="marginal"`` the χ-terms reuse the two Bob-tagged
        runs of each sequence instead of dedicated runs.
        """

        def frequencies(plan_ids: List[str]) -> _Frequencies:
            tables = [counts.get(pid) for pid in plan_ids]
            outcomes = tables[0].plan.outcome_space()
            weights = np.sum([np.array(t.counts, dtype=float) for t in tables], axis=0)
            return _Frequencies(outcomes, weights, sum(t.shots for t in tables))

        return self._estimate(frequencies, mode, chi_source, exact=False)

    def estimate_exact(
        self,
        distributions: Dict[str, JointDistribution],
        mode: SignMode = SignMode.ABSOLUTE,
        chi_source: ChiSource = "dedicated",
    ) -> EstimateReport:
        """Infinite-shot limit: exact probabilities as frequencies, zero errors."""

        def frequencies(plan_ids: List[str]) -> _Frequencies:
            missing = [pid for pid in plan_ids if pid not in distributions]
            if missing:
                raise EstimationError(
                    f"No distribution for {missing[0]}",
                    details={"available": sorted(distributions)},
                )
            dists = [distributions[pid] for pid in plan_ids]
            weights = np.sum([np.array(d.probabilities) for d in dists], axis=0)
            return _Frequencies(dists[0].outcomes, weights, 0)

        return self._estimate(frequencies, mode, chi_source, exact=True)

    def _estimate(self, frequencies, mode, chi_source, exact: bool) -> EstimateReport:
        if chi_source not in ("dedicated", "marginal"):
            raise EstimationError(f"Unknown chi source: {chi_source}")

        def term(mean: float, shots: int) -> Tuple[float, float]:
            if exact:
                return mean, 0.0
            if shots < 1:
                raise EstimationError("Configuration recorded no shots")
            return mean, binomial_se(mean, shots)

        chi_terms: Dict[str, EstimateWithError] = {}
        chi_value, chi_var, chi_shots = 0.0, 0.0, 0
        for seq in context_table():
            if chi_source == "dedicated":
                plan_ids = [seq.id]
            else:
                plan_ids = [f"{seq.id}|{t.bob_label}" for t in s_terms_for(seq.id)]
            freq = frequencies(plan_ids)
            mean, se = term(freq.mean((0, 1, 2)), freq.shots)
            chi_terms[seq.id] = EstimateWithError(
                value=mean, standard_error=se, shots=freq.shots
            )
            chi_value += seq.chi_sign * mean
            chi_var += se**2
            chi_shots += freq.shots

        s_terms: Dict[str, EstimateWithError] = {}
        s_value, s_var, s_shots = 0.0, 0.0, 0
        for t in s_term_table():
            freq = frequencies([f"{t.sequence}|{t.bob_label}"])
            mean, se = term(freq.mean((t.position - 1, 3)), freq.shots)
            if mode == SignMode.ABSOLUTE:
                value = abs(mean)
                biased = (not exact) and abs(mean) <= NEAR_ZERO_SE * se
            else:
                value = t.fixed_sign * mean
                biased = False
            s_terms[t.term_id] = EstimateWithError(
                value=value, standard_error=se, shots=freq.shots, biased_near_zero=biased
            )
            s_value += value
            s_var += se**2
            s_shots += freq.shots

        chi = EstimateWithError(
            value=chi_value, standard_error=math.sqrt(chi_var), shots=chi_shots
        )
        s = EstimateWithError(
            value=s_value,
            standard_error=math.sqrt(s_var),
            shots=s_shots,
            biased_near_zero=any(e.biased_near_zero for e in s_terms.values()),
        )
        disjoint = chi_source == "dedicated"
        omega = EstimateWithError(
            value=chi_value + s_value,
            standard_error=math.sqrt(chi_var + s_var),
            shots=chi_shots + s_shots if disjoint else s_shots,
            biased_near_zero=s.biased_near_zero,
        )
        logger.info(
            f"Estimated omega = {omega.value:.4f} ± {omega.standard_error:.4f}",
            extra={
                "chi": chi.value,
                "chi_se": chi.standard_error,
                "s": s.value,
                "s_se": s.standard_error,
                "s_mode": mode.value,
                "chi_source": chi_source,
            },
        )
        return EstimateReport(
            chi=chi,
            s=s,
            omega=omega,
            chi_terms=chi_terms,
            s_terms=s_terms,
            s_mode=mode,
            chi_source=chi_source,
            configurations_disjoint=disjoint,
        )

    # No-signaling on counts

    def sampled_no_signaling_report(
        self, counts: CountsCollection, threshold: float = 4.0
    ) -> SampledNoSignalingReport:
        """
        Two-proportion z-scores of each marginal against its pooled value.

        Families: Bob's outcome per Bob setting across sequences, and each
        of Alice's triples per sequence across Bob settings. Categories with
        zero pooled variance are skipped.
        """
        bob_families: Dict[str, List[Tuple[np.ndarray, int]]] = {}
        alice_families: Dict[str, List[Tuple[np.ndarray, int]]] = {}
        for table in counts.tables.values():
            c = np.array(table.counts, dtype=float)
            if table.plan.bob_setting is not None:
                grid = c.reshape(8, 2)
                bob_families.setdefault(f"bob:{table.plan.bob_setting}", []).append(
                    (grid.sum(axis=0), table.shots)
                )
                alice_c = grid.sum(axis=1)
            else:
                alice_c = c
            alice_families.setdefault(f"alice:{table.plan.sequence}", []).append(
                (alice_c, table.shots)
            )

        z_scores: Dict[str, float] = {}
        max_dev = 0.0
        for name, members in sorted({**bob_families, **alice_families}.items()):
            members = [m for m in members if m[1] > 0]
            if len(members) < 2:
                continue
            z_scores[name] = _family_max_z(members)
            freqs = [c / n for c, n in members]
            max_dev = max(
                max_dev,
                max(0.5 * float(np.abs(p - q).sum()) for p, q in combinations(freqs, 2)),
            )

        max_abs_z = max(z_scores.values(), default=0.0)
        logger.info(
            f"Sampled no-signaling: max |z| = {max_abs_z:.3f}",
            extra={"max_abs_z": max_abs_z, "families": len(z_scores)},
        )
        return SampledNoSignalingReport(
            z_scores=z_scores,
            max_abs_z=max_abs_z,
            max_deviation=max_dev,
            threshold=threshold,
        )


def _family_max_z(members: List[Tuple[np.ndarray, int]]) -> float:
    pooled = np.sum([c for c, _ in members], axis=0)
    total = sum(n for _, n in members)
    pooled_p = pooled / total
    worst = 0.0
    for c, n in members:
        var = pooled_p * (1.0 - pooled_p) * (1.0 / n - 1.0 / total)
        ok = var > 0
        if not np.any(ok):
            continue
        z = np.abs(c[ok] / n - pooled_p[ok]) / np.sqrt(var[ok])
        worst = max(worst, float(z.max()))
    return worst
