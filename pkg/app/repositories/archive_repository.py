"""Repository layer for search archives (JSON-lines) and search logs (CSV)."""
import json
from pathlib import Path

from pydantic import ValidationError

from app.exceptions import FormatError
from app.logger import get_logger
from app.repositories.base_repository import BaseRepository, PathLike
from app.schemas.scenario import FeatureSchema
from app.schemas.search import ArchiveEntry, SearchLogRow
from app.services.scenario_service import config_to_dict, parse_config

logger = get_logger(__name__)

SEARCH_LOG_COLUMNS = ["run", "generation", "hypervolume", "evaluations", "archive_size", "best_failure_probability"]


def search_log_path(archive_path: PathLike) -> Path:
    """``archive.jsonl`` -> ``archive.log.csv``."""
    archive_path = Path(archive_path)
    return archive_path.with_name(archive_path.stem + ".log.csv")


class ArchiveRepository(BaseRepository):
    """Archive entries in selection order; wall-clock stays out of the file."""

    def save(self, archive: list[ArchiveEntry]) -> None:
        rows = []
        for entry in archive:
            row = entry.model_dump(mode="json")
            row["config"] = config_to_dict(entry.config)
            rows.append(row)
        self.write_jsonl(rows)
        logger.debug("Saved %d archive entr(ies) to %s", len(rows), self.path)

    def load(self, schema: FeatureSchema) -> list[ArchiveEntry]:
        entries = []
        for number, row in enumerate(self.read_jsonl(), start=1):
            if not isinstance(row, dict) or not isinstance(row.get("config"), dict):
                raise FormatError(f"{self.path}:{number}: archive line needs a 'config' object")
            config = parse_config(json.dumps(row["config"]), schema)
            try:
                entries.append(ArchiveEntry.model_validate({**row, "config": config}))
            except ValidationError as exc:
                raise FormatError(f"{self.path}:{number}: {exc.errors()[0]['msg']}") from exc
        logger.debug("Loaded %d archive entr(ies) from %s", len(entries), self.path)
        return entries

    def save_log(self, rows: list[SearchLogRow]) -> Path:
        target = search_log_path(self.path)
        BaseRepository(target).write_csv(SEARCH_LOG_COLUMNS, [r.model_dump() for r in rows])
        return target
