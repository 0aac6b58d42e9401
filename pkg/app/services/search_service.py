"""Service layer for restart-based surrogate-guided search and the single-objective baseline."""
import time
from typing import Optional

import numpy as np

from app.exceptions import DimensionMismatch, EmptySeedSet
from app.logger import get_logger
from app.schemas.scenario import FeatureSchema, ScenarioConfig
from app.schemas.search import (
    Algorithm,
    ArchiveEntry,
    F1_BOUND,
    F2_BOUND,
    SearchConfig,
    SearchLogRow,
    SearchOutcome,
    SelectionStrategy,
)
from app.services import moea_service
from app.services.diversity_service import DIVERSITY_MAX, DiversityScorer
from app.services.moea_service import Individual
from app.services.random_streams import CLUSTERING_STREAM, INIT_STREAM, VARIATION_STREAM, named_stream
from app.services.scenario_service import encode_many, encoded_width
from app.services.surrogate_service import MlpModel, predict_batch, saliency_batch

logger = get_logger(__name__)


# ---------------------------------------------------------------------------
# Objectives and front indicators
# ---------------------------------------------------------------------------
def objective_transform(s_value: float, div_value: float) -> tuple[float, float]:
    """Map (failure probability, diversity) to two minimized objectives in [0,1] x [0,20]."""
    clamped = min(max(div_value, 0.0), DIVERSITY_MAX)
    return F1_BOUND - s_value, F2_BOUND - clamped


def hypervolume_2d(points, reference: tuple[float, float]) -> float:
    """Area dominated by ``points`` inside the reference box, by an f1-sorted sweep."""
    f1_ref, f2_ref = reference
    inside = sorted((float(a), float(b)) for a, b in points if a < f1_ref and b < f2_ref)
    volume = 0.0
    ceiling = f2_ref
    for f1, f2 in inside:
        if f2 < ceiling:
            volume += (f1_ref - f1) * (ceiling - f2)
            ceiling = f2
    return volume


def detect_stagnation(history: list[float], n_last: int, tol: float) -> bool:
    """True once the last value moved less than ``tol`` over the past ``n_last`` generations."""
    if len(history) < n_last + 1:
        return False
    return abs(history[-1] - history[-1 - n_last]) < tol


def _best_f1(front: list[Individual]) -> Individual:
    best = front[0]
    for ind in front[1:]:
        if ind.objectives[0] < best.objectives[0]:
            best = ind
    return best


def knee_point(front: list[Individual]) -> Individual:
    """
    Member farthest from the line through the two normalized extremes.

    Fronts of one or two members, or with a zero span in either objective,
    fall back to the best-f1 member; distance ties go to the best f1, then to
    the earliest member.
    """
    if len(front) <= 2:
        return _best_f1(front)
    objectives = np.array([ind.objectives for ind in front], dtype=np.float64)
    low, high = objectives.min(axis=0), objectives.max(axis=0)
    span = high - low
    if np.any(span <= 0):
        return _best_f1(front)
    normalized = (objectives - low) / span
    a = normalized[int(np.argmin(normalized[:, 0]))]
    b = normalized[int(np.argmin(normalized[:, 1]))]
    direction = b - a
    length = float(np.hypot(*direction))
    if length == 0.0:
        return _best_f1(front)
    offsets = normalized - a
    distances = np.abs(direction[0] * offsets[:, 1] - direction[1] * offsets[:, 0]) / length
    candidates = np.flatnonzero(distances >= distances.max() - 1e-12)
    return _best_f1([front[i] for i in candidates])


def select_representative(front: list[Individual], strategy: SelectionStrategy) -> Individual:
    if strategy == SelectionStrategy.KNEE:
        return knee_point(front)
    best = front[0]
    for ind in front[1:]:
        if ind.objectives[0] < best.objectives[0] or (
            ind.objectives[0] == best.objectives[0] and ind.objectives[1] < best.objectives[1]
        ):
            best = ind
    return best


def _nondominated(individuals: list[Individual]) -> list[Individual]:
    objectives = np.array([ind.objectives for ind in individuals], dtype=np.float64)
    return [individuals[i] for i in moea_service.nondominated_fronts(objectives)[0]]


# ---------------------------------------------------------------------------
# Search service
# ---------------------------------------------------------------------------
class SearchService:
    """
    Runs restart-based test generation against a trained surrogate.

    Randomness comes from three named streams of ``config.seed``: ``init``
    for population seeding, ``variation`` for selection/crossover/mutation
    and ``clustering`` for the diversity model.
    """

    def __init__(self, config: SearchConfig, model: MlpModel, schema: FeatureSchema, seeds: list[ScenarioConfig]):
        if not seeds:
            logger.warning("Search requested without failing seed scenarios")
            raise EmptySeedSet("no failing scenarios to initialize the population from")
        width = encoded_width(schema)
        if width != model.input_width:
            raise DimensionMismatch(f"schema encodes to width {width} but the model expects {model.input_width}")
        self.config = config
        self.model = model
        self.schema = schema
        self.seeds = seeds
        self.width = width
        self.init_rng = named_stream(config.seed, INIT_STREAM)
        self.variation_rng = named_stream(config.seed, VARIATION_STREAM)
        self.clustering_rng = named_stream(config.seed, CLUSTERING_STREAM)
        self.evaluations = 0
        self.archive: list[ArchiveEntry] = []
        self.archive_encoded: list[np.ndarray] = []
        self.log: list[SearchLogRow] = []
        logger.trace("SearchService initialised for schema %s", schema.name)

    # -- shared steps -------------------------------------------------------
    def _initial_configs(self) -> list[ScenarioConfig]:
        picks = self.init_rng.integers(len(self.seeds), size=self.config.population_size)
        return [
            moea_service.mutate(
                self.seeds[int(i)], None, self.schema, self.init_rng,
                breadth=self.config.mutation_breadth, eta=self.config.eta,
            )
            for i in picks
        ]

    def _exhausted(self) -> bool:
        budget = self.config.max_evaluations
        return budget is not None and self.evaluations >= budget

    def _runs(self):
        """Run indices: ``test_runs`` of them, or as many as the evaluation budget allows."""
        if self.config.max_evaluations is None:
            yield from range(self.config.test_runs)
            return
        run = 0
        while not self._exhausted():
            yield run
            run += 1

    def _evaluate(
        self, configs: list[ScenarioConfig], scorer: Optional[DiversityScorer], generation: int
    ) -> list[Individual]:
        if self.config.max_evaluations is not None:
            configs = configs[: self.config.max_evaluations - self.evaluations]
        encoded = encode_many(configs, self.schema)
        probabilities = predict_batch(self.model, encoded)
        weights = saliency_batch(self.model, encoded, self.schema)
        if scorer is not None:
            diversities = scorer.score_batch(encoded)
        else:
            diversities = np.zeros(len(configs))
        self.evaluations += len(configs)
        individuals = []
        for config, row, s, div, w in zip(configs, encoded, probabilities, diversities, weights):
            ind = Individual(
                config=config,
                encoded=row,
                failure_probability=float(s),
                diversity=float(div),
                objectives=objective_transform(float(s), float(div)),
                saliency=w,
                generation=generation,
            )
            logger.trace("Evaluated s=%.4f div=%.4f", ind.failure_probability, ind.diversity)
            individuals.append(ind)
        return individuals

    def _offspring(self, population: list[Individual]) -> list[ScenarioConfig]:
        """Tournament, crossover with rate CR (else copies), then saliency-guided mutation of both children."""
        rng = self.variation_rng
        children: list[ScenarioConfig] = []
        while len(children) < self.config.population_size:
            a = moea_service.tournament_select(population, rng)
            b = moea_service.tournament_select(population, rng)
            if rng.random() < self.config.crossover_rate:
                c1, c2 = moea_service.single_point_crossover(a.config, b.config, self.schema, rng)
                weights = saliency_batch(self.model, encode_many([c1, c2], self.schema), self.schema)
                pairs = [(c1, weights[0]), (c2, weights[1])]
            else:
                pairs = [(a.config, a.saliency), (b.config, b.saliency)]
            for config, w in pairs:
                children.append(
                    moea_service.mutate(
                        config, w, self.schema, rng,
                        breadth=self.config.mutation_breadth, eta=self.config.eta,
                    )
                )
        return children[: self.config.population_size]

    def _archive(self, chosen: Individual, run: int, stopped: int, started: float) -> None:
        entry = ArchiveEntry(
            config=chosen.config,
            failure_probability=chosen.failure_probability,
            diversity=chosen.diversity,
            run=run,
            generation=chosen.generation,
            evaluations=self.evaluations,
            elapsed_seconds=time.perf_counter() - started,
        )
        self.archive.append(entry)
        self.archive_encoded.append(chosen.encoded)
        logger.info(
            "Run %d stopped at generation %d; archived generation %d: s=%.4f diversity=%.4f (evaluations=%d)",
            run, stopped, entry.generation, entry.failure_probability, entry.diversity, self.evaluations,
        )

    def _outcome(self) -> SearchOutcome:
        return SearchOutcome(archive=self.archive, log=self.log, evaluations=self.evaluations)

    # -- multi-objective ----------------------------------------------------
    def run(self) -> SearchOutcome:
        """Multi-objective search: one archived representative per test run."""
        cfg = self.config
        if cfg.algorithm == Algorithm.GA:
            return self.run_baseline()
        logger.info(
            "Starting %s search: TR=%d budget=%s G=%d PS=%d diversity=%s selection=%s seed=%d",
            cfg.algorithm.value, cfg.test_runs, cfg.max_evaluations, cfg.generations, cfg.population_size,
            cfg.diversity.value, cfg.selection.value, cfg.seed,
        )
        started = time.perf_counter()
        for run in self._runs():
            scorer = DiversityScorer(self.archive_encoded, cfg.diversity, self.clustering_rng, width=self.width)
            population = self._evaluate(self._initial_configs(), scorer, 0)
            run_front = _nondominated(population)
            population = moea_service.elitism(population, cfg.population_size, cfg.algorithm)
            history = [hypervolume_2d([i.objectives for i in run_front], cfg.reference_point)]
            self._log_generation(run, 0, history[-1], run_front)

            generation = 0
            while generation < cfg.generations and not self._exhausted():
                generation += 1
                offspring = self._evaluate(self._offspring(population), scorer, generation)
                run_front = _nondominated(run_front + offspring)
                population = moea_service.elitism(population + offspring, cfg.population_size, cfg.algorithm)
                history.append(hypervolume_2d([i.objectives for i in run_front], cfg.reference_point))
                self._log_generation(run, generation, history[-1], run_front)
                if detect_stagnation(history, cfg.n_last, cfg.tolerance):
                    logger.debug("Run %d stagnated at generation %d", run, generation)
                    break

            self._archive(select_representative(run_front, cfg.selection), run, generation, started)
        return self._outcome()

    def _log_generation(self, run: int, generation: int, hypervolume: Optional[float], front: list[Individual]) -> None:
        best = max(ind.failure_probability for ind in front)
        self.log.append(
            SearchLogRow(
                run=run,
                generation=generation,
                hypervolume=hypervolume,
                evaluations=self.evaluations,
                archive_size=len(self.archive),
                best_failure_probability=best,
            )
        )
        logger.debug(
            "Run %d generation %d: hv=%s best_s=%.4f evaluations=%d",
            run, generation, "n/a" if hypervolume is None else f"{hypervolume:.6f}", best, self.evaluations,
        )

    # -- single-objective baseline -------------------------------------------
    def _rank_by_fitness(self, individuals: list[Individual]) -> list[Individual]:
        for ind in individuals:
            ind.rank = 0
            ind.survival_key = ind.failure_probability
        order = sorted(range(len(individuals)), key=lambda i: -individuals[i].failure_probability)
        return [individuals[i] for i in order]

    def run_baseline(self) -> SearchOutcome:
        """Single-objective GA on failure probability; archives the fittest individual per run."""
        cfg = self.config
        logger.info(
            "Starting baseline GA: TR=%d budget=%s G=%d PS=%d seed=%d",
            cfg.test_runs, cfg.max_evaluations, cfg.generations, cfg.population_size, cfg.seed,
        )
        started = time.perf_counter()
        for run in self._runs():
            population = self._rank_by_fitness(self._evaluate(self._initial_configs(), None, 0))
            history = [population[0].failure_probability]
            self._log_generation(run, 0, None, population[:1])

            generation = 0
            while generation < cfg.generations and not self._exhausted():
                generation += 1
                offspring = self._evaluate(self._offspring(population), None, generation)
                population = self._rank_by_fitness(population + offspring)[: cfg.population_size]
                history.append(population[0].failure_probability)
                self._log_generation(run, generation, None, population[:1])
                if detect_stagnation(history, cfg.n_last, cfg.tolerance):
                    logger.debug("Baseline run %d stagnated at generation %d", run, generation)
                    break

            best = population[0]
            scorer = DiversityScorer(self.archive_encoded, cfg.diversity, self.clustering_rng, width=self.width)
            best.diversity = scorer.score(best.encoded)
            self._archive(best, run, generation, started)
        return self._outcome()


def run_search(
    config: SearchConfig, model: MlpModel, schema: FeatureSchema, seeds: list[ScenarioConfig]
) -> SearchOutcome:
    return SearchService(config, model, schema, seeds).run()


def run_baseline_ga(
    config: SearchConfig, model: MlpModel, schema: FeatureSchema, seeds: list[ScenarioConfig]
) -> SearchOutcome:
    return SearchService(config, model, schema, seeds).run_baseline()
