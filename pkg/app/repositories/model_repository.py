"""Repository layer for surrogate model files."""
from app.logger import get_logger
from app.repositories.base_repository import BaseRepository
from app.services.surrogate_service import MlpModel, load_model, save_model

logger = get_logger(__name__)


class ModelRepository(BaseRepository):

    def save(self, model: MlpModel) -> None:
        self.write_bytes(save_model(model))
        logger.debug("Saved surrogate %s to %s", model.layers, self.path)

    def load(self) -> MlpModel:
        return load_model(self.read_bytes())
