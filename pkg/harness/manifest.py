"""RunManifest: what was run, with which config, and what it produced."""
import logging
import os
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from config.run_config import RunConfig
from harness.writers import file_digest, write_json

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
CODE_VERSION = "0.1.0"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class TaskStatus(BaseModel):
    index: int
    E: float
    status: str
    error: Optional[str] = None


class RunManifest(BaseModel):
    command: str
    config_hash: str
    code_version: str = CODE_VERSION
    started_at: str = Field(default_factory=_now)
    finished_at: Optional[str] = None
    status: str = "running"
    exit_code: Optional[int] = None
    config: Dict[str, Any] = Field(default_factory=dict)
    tasks: List[TaskStatus] = Field(default_factory=list)
    bracket_history: List[Dict[str, Any]] = Field(default_factory=list)
    outputs: Dict[str, str] = Field(default_factory=dict)
    error: Optional[Dict[str, Any]] = None

    @classmethod
    def start(cls, command: str, config: RunConfig) -> "RunManifest":
        return cls(command=command, config_hash=config.config_hash(), config=config.to_dict())

    def record_task(self, index: int, E: float, status: str, error: Optional[str] = None) -> None:
        self.tasks.append(TaskStatus(index=index, E=E, status=status, error=error))

    def record_outputs(self, paths: List[str]) -> None:
        for path in paths:
            self.outputs[os.path.basename(path)] = file_digest(path)

    def finish(self, exit_code: int = 0, error: Optional[Dict[str, Any]] = None) -> None:
        self.finished_at = _now()
        self.exit_code = exit_code
        self.status = "ok" if exit_code == 0 else "failed"
        self.error = error

    def write(self, directory: str) -> str:
        path = write_json(self.model_dump(mode="json"), os.path.join(directory, MANIFEST_NAME))
        logger.info(f"Manifest written to {path} ({len(self.outputs)} outputs, status {self.status})")
        return path
