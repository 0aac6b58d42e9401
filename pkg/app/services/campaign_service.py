"""Service layer for campaigns: every approach on every seed, then aggregate statistics."""
import itertools
import time
from typing import Optional

import numpy as np

from app.exceptions import EmptyInput, SampleTooSmall
from app.logger import get_logger
from app.schemas.analysis import MetricSummary, PairComparison
from app.schemas.campaign import (
    COMPARED_METRICS,
    Approach,
    CampaignPlan,
    CampaignReport,
    CampaignRow,
    CellTiming,
)
from app.services.analysis_service import (
    effect_size_magnitude,
    failure_metrics,
    vargha_delaney_a12,
    wilcoxon_rank_sum,
)
from app.services.scenario_service import encode_many
from app.services.search_service import run_search
from app.services.surrogate_service import MlpModel, TrainingSet, train
from app.services.testbed_service import TrainingLog, execute_archive, generate_training_log, schema_for

logger = get_logger(__name__)


def summarize(values: list[Optional[float]]) -> MetricSummary:
    """Median and inter-quartile range of the non-empty values."""
    present = [float(v) for v in values if v is not None]
    if not present:
        return MetricSummary(n=0)
    q1, median, q3 = np.percentile(present, [25, 50, 75])
    return MetricSummary(median=float(median), q1=float(q1), q3=float(q3), iqr=float(q3 - q1), n=len(present))


def compare(metric: str, name_a: str, sample_a: list, name_b: str, sample_b: list) -> PairComparison:
    """Rank-sum p-value and A12 of two approaches on one metric; empty values are skipped."""
    a = [float(v) for v in sample_a if v is not None]
    b = [float(v) for v in sample_b if v is not None]
    comparison = PairComparison(metric=metric, approach_a=name_a, approach_b=name_b)
    try:
        comparison.a12 = vargha_delaney_a12(a, b)
        comparison.magnitude = effect_size_magnitude(comparison.a12)
        comparison.p_value = wilcoxon_rank_sum(a, b)
    except (EmptyInput, SampleTooSmall) as exc:
        logger.warning("No %s comparison for %s vs %s: %s", metric, name_a, name_b, exc.detail)
    return comparison


class CampaignService:
    """Runs a campaign plan cell by cell; the surrogate is trained once per seed and shared by approaches."""

    def __init__(self, plan: CampaignPlan):
        self.plan = plan
        self.schema = schema_for(plan.env)
        self._surrogates: dict[int, tuple[TrainingLog, MlpModel]] = {}
        logger.trace("CampaignService initialised for %s", plan.env.kind)

    def surrogate_for(self, seed: int) -> tuple[TrainingLog, MlpModel]:
        if seed not in self._surrogates:
            log = generate_training_log(self.plan.env, self.plan.training_samples, seed)
            data = TrainingSet(
                inputs=encode_many(log.configs, self.schema),
                labels=np.asarray(log.labels, dtype=np.float64),
            )
            model, _ = train(data, self.plan.hyper.model_copy(update={"seed": seed}))
            self._surrogates[seed] = (log, model)
        return self._surrogates[seed]

    def run_cell(self, approach: Approach, seed: int) -> tuple[CampaignRow, CellTiming]:
        log, model = self.surrogate_for(seed)
        config = self.plan.search.model_copy(
            update={
                "algorithm": approach.algorithm,
                "diversity": approach.diversity,
                "selection": approach.selection,
                "seed": seed,
            }
        )
        if self.plan.max_evaluations is not None:
            config = config.model_copy(update={"max_evaluations": self.plan.max_evaluations})
        started = time.perf_counter()
        outcome = run_search(config, model, self.schema, log.failing)
        search_seconds = time.perf_counter() - started
        records = execute_archive(self.plan.env, outcome.archive)
        metrics = failure_metrics(records, self.schema, seed)
        row = CampaignRow(
            approach=approach.name,
            seed=seed,
            archive_size=len(outcome.archive),
            evaluations=outcome.evaluations,
            total_failures=metrics.total_failures,
            unique_failures=metrics.unique_failures,
            output_entropy=metrics.output_entropy,
            unique_input_clusters=metrics.unique_input_clusters,
            input_entropy=metrics.input_entropy,
            ttf_evaluations=metrics.ttf_evaluations,
        )
        timing = CellTiming(
            approach=approach.name, seed=seed, search_seconds=search_seconds, ttf_wall_clock=metrics.ttf_wall_clock
        )
        logger.info(
            "Cell %s seed=%d: failures=%d unique=%d output_entropy=%.2f",
            approach.name, seed, row.total_failures, row.unique_failures, row.output_entropy,
        )
        return row, timing

    def run(self) -> CampaignReport:
        plan = self.plan
        logger.info(
            "Starting campaign on %s: %d approach(es) x %d seed(s)",
            plan.env.kind, len(plan.approaches), len(plan.seeds),
        )
        report = CampaignReport()
        for seed in plan.seeds:
            for approach in plan.approaches:
                row, timing = self.run_cell(approach, seed)
                report.rows.append(row)
                report.timings.append(timing)

        samples = {
            a.name: {m: [getattr(r, m) for r in report.rows if r.approach == a.name] for m in COMPARED_METRICS}
            for a in plan.approaches
        }
        report.summary = {name: {m: summarize(v) for m, v in by_metric.items()} for name, by_metric in samples.items()}
        for first, second in itertools.combinations(plan.approaches, 2):
            for metric in COMPARED_METRICS:
                report.comparisons.append(
                    compare(metric, first.name, samples[first.name][metric], second.name, samples[second.name][metric])
                )
        logger.info("Campaign finished: %d row(s)", len(report.rows))
        return report


def run_campaign(plan: CampaignPlan) -> CampaignReport:
    return CampaignService(plan).run()
