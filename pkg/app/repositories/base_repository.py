"""Base repository with common file operations."""
import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Optional, Union

from app.exceptions import FormatError, StorageError
from app.logger import get_logger
from app.schemas.manifest import RunManifest, utc_now

logger = get_logger(__name__)

PathLike = Union[str, Path]


def manifest_path(output: PathLike) -> Path:
    """``<output>.manifest.json`` next to the output file."""
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


class BaseRepository:
    """Base repository class for one artifact file; every OSError becomes a StorageError naming the path."""

    def __init__(self, path: PathLike):
        self.path = Path(path)
        logger.trace("%s initialised for %s", self.__class__.__name__, self.path)

    # -- raw bytes -------------------------------------------------------------
    def read_bytes(self) -> bytes:
        try:
            return self.path.read_bytes()
        except OSError as exc:
            raise StorageError(f"cannot read {self.path}: {exc.strerror or exc}", path=str(self.path)) from exc

    def write_bytes(self, data: bytes) -> None:
        """Write through a temporary file in the same directory, then rename over the target."""
        directory = self.path.parent
        try:
            directory.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=f".{self.path.name}.", dir=directory)
            try:
                with os.fdopen(fd, "wb") as handle:
                    handle.write(data)
                os.replace(tmp, self.path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        except OSError as exc:
            raise StorageError(f"cannot write {self.path}: {exc.strerror or exc}", path=str(self.path)) from exc
        logger.trace("Wrote %d byte(s) to %s", len(data), self.path)

    def read_text(self) -> str:
        data = self.read_bytes()
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{self.path} is not UTF-8 text (byte offset {exc.start})") from exc

    def digest(self) -> str:
        return hashlib.sha256(self.read_bytes()).hexdigest()

    # -- structured formats ----------------------------------------------------
    def read_json(self) -> Any:
        try:
            return json.loads(self.read_text())
        except json.JSONDecodeError as exc:
            raise StorageError(f"{self.path} is not valid JSON: {exc}", path=str(self.path)) from exc

    def write_json(self, payload: Any) -> None:
        self.write_bytes((json.dumps(payload, indent=2) + "\n").encode("utf-8"))

    def read_jsonl(self) -> list[Any]:
        rows = []
        for number, line in enumerate(self.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise StorageError(f"{self.path}:{number} is not valid JSON: {exc}", path=str(self.path)) from exc
        return rows

    def write_jsonl(self, rows: Iterable[Any]) -> None:
        self.write_bytes("".join(json.dumps(row) + "\n" for row in rows).encode("utf-8"))

    def write_csv(self, columns: list[str], rows: Iterable[dict[str, Any]]) -> None:
        """Empty cells for None values."""
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: "" if row.get(c) is None else row.get(c) for c in columns})
        self.write_bytes(buffer.getvalue().encode("utf-8"))

    def read_csv(self) -> list[dict[str, str]]:
        return list(csv.DictReader(io.StringIO(self.read_text())))

    # -- manifests -------------------------------------------------------------
    def write_manifest(self, manifest: RunManifest, finished_at: Optional[str] = None) -> Path:
        manifest = manifest.model_copy(update={"finished_at": finished_at or utc_now()})
        target = manifest_path(self.path)
        BaseRepository(target).write_json(manifest.model_dump(mode="json"))
        logger.debug("Manifest written to %s", target)
        return target
