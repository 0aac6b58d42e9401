"""Router layer for the ``analyze`` command."""
import argparse

from app.logger import get_logger
from app.repositories.archive_repository import ArchiveRepository
from app.repositories.base_repository import BaseRepository
from app.repositories.report_repository import ReportRepository
from app.routers.common import add_env_argument, load_env, new_manifest
from app.services.analysis_service import failure_metrics
from app.services.testbed_service import execute_archive, schema_for

logger = get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("analyze", help="Execute an archive and report failure metrics")
    parser.add_argument("--archive", required=True, help="Archive written by search")
    add_env_argument(parser)
    parser.add_argument("--seed", type=int, default=0, help="Seed of the clustering")
    parser.add_argument("--out", required=True, help="Report directory")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    env = load_env(args.env)
    schema = schema_for(env)
    entries = ArchiveRepository(args.archive).load(schema)
    manifest = new_manifest("analyze", {"env": env.model_dump(mode="json")}, args.seed, [args.archive])

    records = execute_archive(env, entries)
    metrics = failure_metrics(records, schema, args.seed)
    repo = ReportRepository(args.out)
    outputs = [repo.save_records(records), repo.save_metrics(metrics)]
    BaseRepository(repo.summary_file).write_manifest(
        manifest.model_copy(update={"outputs": [str(p) for p in outputs]})
    )
    logger.info(
        "Analysis of %d scenario(s): %d failure(s), %d unique -> %s",
        metrics.executed, metrics.total_failures, metrics.unique_failures, args.out,
    )
    return 0
