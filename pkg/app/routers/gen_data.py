"""Router layer for the ``gen-data`` command."""
import argparse

from app.logger import get_logger
from app.repositories.training_log_repository import TrainingLogRepository
from app.routers.common import add_env_argument, load_env, new_manifest
from app.services.testbed_service import generate_training_log

logger = get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("gen-data", help="Sample and execute scenarios into a labelled training log")
    add_env_argument(parser)
    parser.add_argument("--n", type=int, default=1000, help="Number of scenarios")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="Training log (JSON-lines)")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    env = load_env(args.env)
    manifest = new_manifest(
        "gen-data", {"env": env.model_dump(mode="json"), "n": args.n}, args.seed, []
    )
    log = generate_training_log(env, args.n, args.seed)
    repo = TrainingLogRepository(args.out)
    repo.save(env.kind, log)
    repo.write_manifest(manifest.model_copy(update={"outputs": [args.out]}))
    logger.info("Training log with %d scenario(s) written to %s", len(log.configs), args.out)
    return 0
