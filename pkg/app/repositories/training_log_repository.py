"""Repository layer for labelled training logs (JSON-lines)."""
import json

from pydantic import ValidationError

from app.exceptions import FormatError
from app.logger import get_logger
from app.repositories.base_repository import BaseRepository
from app.schemas.scenario import FeatureSchema
from app.schemas.testbed import TrainingSample
from app.services.scenario_service import config_to_dict, parse_config
from app.services.testbed_service import TrainingLog

logger = get_logger(__name__)


class TrainingLogRepository(BaseRepository):
    """One ``{"env", "config", "failed"}`` object per line."""

    def save(self, env_name: str, log: TrainingLog) -> None:
        rows = [
            TrainingSample(env=env_name, config=config_to_dict(config), failed=bool(label)).model_dump()
            for config, label in zip(log.configs, log.labels)
        ]
        self.write_jsonl(rows)
        logger.debug("Saved %d training sample(s) to %s", len(rows), self.path)

    def load(self, schema: FeatureSchema) -> TrainingLog:
        """Parse every line against ``schema``; FormatError names the first bad line."""
        configs, labels = [], []
        for number, row in enumerate(self.read_jsonl(), start=1):
            try:
                sample = TrainingSample.model_validate(row)
            except ValidationError as exc:
                raise FormatError(f"{self.path}:{number}: {exc.errors()[0]['msg']}") from exc
            configs.append(parse_config(json.dumps(sample.config), schema))
            labels.append(int(sample.failed))
        logger.debug("Loaded %d training sample(s) from %s", len(configs), self.path)
        return TrainingLog(configs=configs, labels=labels)

    def env_name(self) -> str:
        """Environment recorded on the first line."""
        rows = self.read_jsonl()
        if not rows or not isinstance(rows[0], dict) or "env" not in rows[0]:
            raise FormatError(f"{self.path} holds no training samples")
        return str(rows[0]["env"])
