"""Router layer for the ``campaign`` command."""
import argparse

from app.logger import get_logger
from app.repositories.base_repository import BaseRepository
from app.repositories.report_repository import ReportRepository
from app.routers.common import new_manifest, read_structured
from app.schemas.campaign import CampaignPlan
from app.services.campaign_service import run_campaign

logger = get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("campaign", help="Run every approach on every seed and compare them")
    parser.add_argument("--plan", required=True, help="Campaign plan (JSON, or YAML by suffix)")
    parser.add_argument("--out", required=True, help="Report directory")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    plan = CampaignPlan.model_validate(read_structured(args.plan))
    manifest = new_manifest("campaign", plan.model_dump(mode="json"), None, [args.plan])
    report = run_campaign(plan)
    repo = ReportRepository(args.out)
    outputs = repo.save_campaign(report)
    BaseRepository(repo.summary_file).write_manifest(
        manifest.model_copy(update={"outputs": [str(p) for p in outputs]})
    )
    logger.info("Campaign report with %d row(s) written to %s", len(report.rows), args.out)
    return 0
