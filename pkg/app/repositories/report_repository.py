"""Repository layer for analysis and campaign reports."""
from pathlib import Path

from app.logger import get_logger
from app.repositories.base_repository import BaseRepository, PathLike
from app.schemas.analysis import ExecutionRecord, FailureMetrics
from app.schemas.campaign import CampaignReport, CampaignRow, CellTiming
from app.services.scenario_service import config_to_dict

logger = get_logger(__name__)

CAMPAIGN_ROW_COLUMNS = list(CampaignRow.model_fields)
TIMING_COLUMNS = list(CellTiming.model_fields)


class ReportRepository(BaseRepository):
    """
    Report files under one output directory.

    ``records.jsonl`` and ``summary.json`` for analyses; ``rows.csv``,
    ``summary.json`` and ``timings.csv`` for campaigns.
    """

    def __init__(self, path: PathLike):
        super().__init__(path)
        self.records_file = self.path / "records.jsonl"
        self.summary_file = self.path / "summary.json"
        self.rows_file = self.path / "rows.csv"
        self.timings_file = self.path / "timings.csv"

    def save_records(self, records: list[ExecutionRecord]) -> Path:
        rows = []
        for record in records:
            row = record.model_dump(mode="json", exclude={"wall_clock"})
            row["config"] = config_to_dict(record.config)
            rows.append(row)
        BaseRepository(self.records_file).write_jsonl(rows)
        return self.records_file

    def save_metrics(self, metrics: FailureMetrics) -> Path:
        BaseRepository(self.summary_file).write_json(metrics.model_dump(mode="json", exclude={"ttf_wall_clock"}))
        logger.debug("Analysis summary written to %s", self.summary_file)
        return self.summary_file

    def save_campaign(self, report: CampaignReport) -> list[Path]:
        BaseRepository(self.rows_file).write_csv(CAMPAIGN_ROW_COLUMNS, [r.model_dump() for r in report.rows])
        BaseRepository(self.summary_file).write_json(report.model_dump(mode="json", exclude={"rows"}))
        BaseRepository(self.timings_file).write_csv(TIMING_COLUMNS, [t.model_dump() for t in report.timings])
        logger.debug("Campaign report written to %s", self.path)
        return [self.rows_file, self.summary_file, self.timings_file]
