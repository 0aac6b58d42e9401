"""DTO schema for the run manifest written next to every command output."""
from datetime import datetime, timezone
from typing import Any, Optional

from pydantic import BaseModel, Field


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class RunManifest(BaseModel):
    """Everything needed to replay a command; the only place timestamps are recorded."""
    tool_version: str = Field(..., examples=["1.0.0"])
    command: str = Field(..., examples=["search"])
    config: dict[str, Any] = Field(default_factory=dict, description="Fully resolved configuration")
    seed: Optional[int] = Field(None, examples=[0])
    inputs: dict[str, str] = Field(default_factory=dict, description="Input path -> SHA-256 digest")
    outputs: list[str] = Field(default_factory=list)
    started_at: str = Field(default_factory=utc_now)
    finished_at: Optional[str] = None
    selection_seconds: list[float] = Field(
        default_factory=list, description="Wall-clock since search start of each archived scenario"
    )
