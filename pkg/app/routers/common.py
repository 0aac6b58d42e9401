"""Helpers shared by the command routers: inputs, schema resolution and manifests."""
import argparse
import json
from pathlib import Path
from typing import Any, Optional

import yaml
from pydantic import ValidationError

from app import __version__
from app.exceptions import FormatError
from app.logger import get_logger
from app.repositories.base_repository import BaseRepository
from app.schemas.manifest import RunManifest
from app.schemas.scenario import FeatureSchema
from app.schemas.testbed import EnvironmentDocument
from app.services.testbed_service import ENVIRONMENTS, Environment, make_env, schema_for

logger = get_logger(__name__)


def read_structured(path: str) -> Any:
    """JSON document, or YAML when the suffix is .yaml/.yml."""
    repo = BaseRepository(path)
    if Path(path).suffix.lower() in (".yaml", ".yml"):
        try:
            return yaml.safe_load(repo.read_bytes())
        except yaml.YAMLError as exc:
            raise FormatError(f"{path} is not valid YAML: {exc}") from exc
    try:
        return json.loads(repo.read_bytes())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from exc


def load_env(value: str) -> Environment:
    """A built-in environment name or a JSON/YAML file holding ``{"env": {...}}``."""
    if value in ENVIRONMENTS or not Path(value).exists():
        return make_env(value)
    document = EnvironmentDocument.model_validate(read_structured(value))
    logger.debug("Loaded %s environment from %s", document.env.kind, value)
    return document.env


def load_schema(path: Optional[str], env: Optional[Environment]) -> FeatureSchema:
    """Schema file when given, otherwise the environment's own schema."""
    if path:
        return FeatureSchema.model_validate(read_structured(path))
    if env is None:
        raise FormatError("either --schema or --env is required")
    return schema_for(env)


def add_env_argument(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument(
        "--env",
        required=required,
        help=f"Environment name ({', '.join(ENVIRONMENTS)}) or a JSON/YAML environment file",
    )


def new_manifest(command: str, config: dict[str, Any], seed: Optional[int], inputs: list[str]) -> RunManifest:
    return RunManifest(
        tool_version=__version__,
        command=command,
        config=config,
        seed=seed,
        inputs={path: BaseRepository(path).digest() for path in inputs},
    )


def first_error_field(exc: ValidationError) -> str:
    errors = exc.errors()
    if not errors:
        return "<unknown>"
    return ".".join(str(part) for part in errors[0]["loc"]) or "<root>"
