"""
Write Metrics Skill

Metrics file: a header row, then one comma-separated row per round in
METRICS_COLUMNS order. Next to it sits `<stem>.manifest.yaml`, the full
resolved configuration (seed included); running that manifest again
reproduces the metrics file byte for byte.
"""

from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union
import csv

import structlog

from core.config import ExperimentConfig, serialize_config
from core.errors import MetricsWriteError, RejectedStateError
from core.records import METRICS_COLUMNS, RoundRecord

from .base_skill import BaseSkill, SkillResult

logger = structlog.get_logger(__name__)


def manifest_path_for(metrics_path: Union[str, Path]) -> Path:
    path = Path(metrics_path)
    return path.with_name(f"{path.stem}.manifest.yaml")


def write_manifest(metrics_path: Union[str, Path], cfg: ExperimentConfig) -> Path:
    target = manifest_path_for(metrics_path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(serialize_config(cfg), encoding="utf-8")
    except OSError as e:
        raise MetricsWriteError(f"cannot write manifest: {e}", path=str(target)) from e
    return target


class MetricsWriter:
    """Streams rows to the metrics file as rounds complete."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.last_round = 0
        self.rows_written = 0

    def _write(self, rows: Sequence[Sequence[str]], mode: str) -> None:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, mode, encoding="utf-8", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerows(rows)
        except OSError as e:
            raise MetricsWriteError(f"cannot write metrics: {e}", path=str(self.path)) from e

    def open(self) -> "MetricsWriter":
        """Truncate the file and write the header."""
        self._write([METRICS_COLUMNS], "w")
        self.last_round = 0
        self.rows_written = 0
        return self

    def append(self, record: RoundRecord) -> None:
        if record.round_index <= self.last_round:
            raise RejectedStateError(
                f"round {record.round_index} does not follow round {self.last_round}"
            )
        self._write([record.to_row()], "a")
        self.last_round = record.round_index
        self.rows_written += 1


def write_metrics(
    records: Sequence[RoundRecord],
    path: Union[str, Path],
    cfg: Optional[ExperimentConfig] = None,
) -> Path:
    """Write the whole metrics file (and the manifest when a config is given)."""
    writer = MetricsWriter(path).open()
    for record in records:
        writer.append(record)
    if cfg is not None:
        write_manifest(path, cfg)
    return writer.path


class WriteMetrics(BaseSkill):
    """Skill wrapper around write_metrics."""

    name = "write_metrics"
    description = "Write per-round metrics and the run manifest"
    required_args = ["records", "path"]

    async def execute(self, args: Dict[str, Any], context: Optional[Any] = None) -> SkillResult:
        errors = self.validate_args(args)
        if errors:
            return SkillResult(success=False, error="; ".join(errors))
        cfg = args.get("config")
        try:
            path = write_metrics(args["records"], args["path"], cfg)
        except MetricsWriteError as e:
            logger.error("metrics_write_failed", path=e.path, error=str(e))
            return SkillResult(success=False, error=str(e), data={"path": e.path}, cause=e)
        artifacts = [str(path)]
        if cfg is not None:
            artifacts.append(str(manifest_path_for(path)))
        result = SkillResult(
            success=True,
            data={"rows": len(args["records"]), "path": str(path)},
            artifacts=artifacts,
        )
        await self.post_execute(result)
        return result
