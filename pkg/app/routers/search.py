"""Router layer for the ``search`` command."""
import argparse
from typing import Any

from app.exceptions import FormatError
from app.logger import get_logger
from app.repositories.archive_repository import ArchiveRepository
from app.repositories.model_repository import ModelRepository
from app.repositories.training_log_repository import TrainingLogRepository
from app.routers.common import add_env_argument, load_env, load_schema, new_manifest, read_structured
from app.schemas.search import Algorithm, DiversityMetric, SearchConfig, SelectionStrategy
from app.services.search_service import run_search

logger = get_logger(__name__)

# flag dest -> SearchConfig field
CONFIG_FLAGS = {
    "test_runs": "test_runs",
    "generations": "generations",
    "population_size": "population_size",
    "crossover_rate": "crossover_rate",
    "tolerance": "tolerance",
    "n_last": "n_last",
    "reference_point": "reference_point",
    "algorithm": "algorithm",
    "diversity": "diversity",
    "select": "selection",
    "seed": "seed",
    "mutation_breadth": "mutation_breadth",
    "eta": "eta",
    "max_evaluations": "max_evaluations",
}


def register(subparsers) -> None:
    parser = subparsers.add_parser("search", help="Generate a diverse archive of likely-failing scenarios")
    parser.add_argument("--model", required=True, help="Surrogate model file")
    parser.add_argument("--seeds-file", required=True, help="Training log; its failing scenarios seed the search")
    add_env_argument(parser, required=False)
    parser.add_argument("--schema", help="Feature schema file (JSON/YAML); defaults to the environment's schema")
    parser.add_argument("--config", help="YAML/JSON file of search settings; flags override it")
    parser.add_argument("--out", required=True, help="Archive (JSON-lines); the search log goes next to it")

    # Unset flags keep the file value or the SearchConfig default.
    group = parser.add_argument_group("search settings")
    group.add_argument("--test-runs", type=int, help="Archive budget (default 10)")
    group.add_argument("--generations", type=int, help="Generations per run (default 50)")
    group.add_argument("--population-size", type=int, help="Population size (default 50)")
    group.add_argument("--crossover-rate", type=float, help="Crossover rate (default 0.75)")
    group.add_argument("--tolerance", type=float, help="Hypervolume stagnation tolerance (default 5e-6)")
    group.add_argument("--n-last", type=int, help="Stagnation window (default 10)")
    group.add_argument("--reference-point", type=float, nargs=2, metavar=("F1", "F2"), help="Default 1.2 20.2")
    group.add_argument("--algorithm", choices=[a.value for a in Algorithm])
    group.add_argument("--diversity", choices=[d.value for d in DiversityMetric])
    group.add_argument("--select", choices=[s.value for s in SelectionStrategy])
    group.add_argument("--seed", type=int)
    group.add_argument("--mutation-breadth", type=float)
    group.add_argument("--eta", type=float, help="Polynomial mutation distribution index")
    group.add_argument(
        "--max-evaluations", type=int, help="Spend exactly this many evaluations; replaces --test-runs as the stop rule"
    )
    parser.set_defaults(handler=run)


def resolve_config(args: argparse.Namespace) -> SearchConfig:
    values: dict[str, Any] = {}
    if args.config:
        loaded = read_structured(args.config) or {}
        if not isinstance(loaded, dict):
            raise FormatError(f"{args.config} must hold a mapping of search settings")
        values.update(loaded)
    for dest, field in CONFIG_FLAGS.items():
        flag_value = getattr(args, dest, None)
        if flag_value is not None:
            values[field] = flag_value
    return SearchConfig.model_validate(values)


def run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    env = load_env(args.env) if args.env else None
    schema = load_schema(args.schema, env)
    model = ModelRepository(args.model).load()
    seeds = TrainingLogRepository(args.seeds_file).load(schema).failing
    inputs = [args.model, args.seeds_file] + [p for p in (args.schema, args.config) if p]
    manifest = new_manifest("search", config.model_dump(mode="json"), config.seed, inputs)
    logger.info(
        "Search: %s/%s/%s, %d test run(s), %d seed scenario(s)",
        config.algorithm.value, config.diversity.value, config.selection.value, config.test_runs, len(seeds),
    )

    outcome = run_search(config, model, schema, seeds)
    repo = ArchiveRepository(args.out)
    repo.save(outcome.archive)
    log_file = repo.save_log(outcome.log)
    repo.write_manifest(
        manifest.model_copy(
            update={
                "outputs": [args.out, str(log_file)],
                "selection_seconds": [e.elapsed_seconds for e in outcome.archive],
            }
        )
    )
    logger.info("Archived %d scenario(s) after %d evaluation(s) -> %s", len(outcome.archive), outcome.evaluations, args.out)
    return 0
