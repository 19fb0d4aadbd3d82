"""Per-invocation state shared by the subcommands."""

import argparse
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np
import pydantic
import scipy
import structlog
from pydantic import BaseModel

from app.core.config import settings
from app.schemas.artifacts import RunRecord
from app.schemas.experiment import ExperimentConfig
from app.services.io_service import io_service

logger = structlog.get_logger()


def versions() -> dict[str, str]:
    return {
        settings.APP_NAME: settings.APP_VERSION,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
        "structlog": structlog.__version__,
    }


@dataclass
class CommandContext:
    """Parsed arguments, validated configuration and the artifacts written so far."""

    command: str
    args: argparse.Namespace
    config: ExperimentConfig
    seed: int
    threads: int
    out: Path
    artifacts: list[Path] = field(default_factory=list)

    @cached_property
    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def path(self, name: str) -> Path:
        return self.out / name

    def record(self, *paths: Path) -> None:
        self.artifacts.extend(paths)

    def write_json(self, name: str, payload: BaseModel | dict[str, Any]) -> Path:
        path = io_service.write_json(self.path(name), payload)
        self.record(path)
        return path

    def write_run_record(self, exit_code: int) -> Path:
        record = RunRecord(
            command=self.command,
            seed=self.seed,
            threads=self.threads,
            config=self.config.model_dump(mode="json"),
            versions=versions(),
            artifacts=[p.name for p in self.artifacts],
            exit_code=exit_code,
        )
        return io_service.write_json(self.path("run.json"), record)
