"""
Run Event Log

Append-only JSON-lines record of one experiment run: start, every
round, stop decisions, errors and the final summary. Wall-clock times
live here and never in the metrics file.
"""

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union
import json


class RunEventType(Enum):
    RUN_START = "run_start"
    ROUND_COMPLETE = "round_complete"
    STOP_DECISION = "stop_decision"
    ARTIFACT_WRITTEN = "artifact_written"
    ERROR = "error"
    RUN_END = "run_end"


@dataclass
class RunEvent:
    """A single event."""
    event_id: str
    event_type: RunEventType
    timestamp: datetime
    run_id: str
    action: str
    details: Dict[str, Any]
    success: bool = True
    error: Optional[str] = None
    wall_seconds: Optional[float] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "event_id": self.event_id,
            "event_type": self.event_type.value,
            "timestamp": self.timestamp.isoformat(),
            "run_id": self.run_id,
            "action": self.action,
            "details": self.details,
            "success": self.success,
            "error": self.error,
            "wall_seconds": self.wall_seconds,
            "metadata": self.metadata,
        }

    def to_log_line(self) -> str:
        return json.dumps(self.to_dict(), default=str)


class RunEventLog:
    """
    Append-only event log for one run.

    Events are written as they happen; the file is never rewritten.
    """

    def __init__(self, log_path: Union[str, Path], run_id: str):
        self.log_path = Path(log_path)
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        self.run_id = run_id
        self._event_counter = 0

    def _generate_event_id(self) -> str:
        self._event_counter += 1
        return f"evt_{self.run_id}_{self._event_counter:06d}"

    def log(
        self,
        event_type: RunEventType,
        action: str,
        details: Dict[str, Any],
        success: bool = True,
        error: Optional[str] = None,
        wall_seconds: Optional[float] = None,
        metadata: Optional[Dict[str, Any]] = None,
    ) -> RunEvent:
        event = RunEvent(
            event_id=self._generate_event_id(),
            event_type=event_type,
            timestamp=datetime.now(),
            run_id=self.run_id,
            action=action,
            details=details,
            success=success,
            error=error,
            wall_seconds=wall_seconds,
            metadata=metadata or {},
        )
        with open(self.log_path, "a", encoding="utf-8") as f:
            f.write(event.to_log_line() + "\n")
        return event

    def log_run_start(self, config: Dict[str, Any]) -> RunEvent:
        return self.log(RunEventType.RUN_START, "run_started", {"config": config})

    def log_round(self, record: Dict[str, Any], wall_seconds: float) -> RunEvent:
        return self.log(
            RunEventType.ROUND_COMPLETE,
            "round_complete",
            record,
            success=record.get("status") == "ok",
            wall_seconds=wall_seconds,
        )

    def log_stop(self, round_index: int, action: str, reason: str) -> RunEvent:
        return self.log(
            RunEventType.STOP_DECISION,
            "stop_decision",
            {"round": round_index, "decision": action, "reason": reason},
        )

    def log_artifact(self, kind: str, path: str) -> RunEvent:
        return self.log(RunEventType.ARTIFACT_WRITTEN, kind, {"path": path})

    def log_error(self, action: str, error: str, details: Optional[Dict[str, Any]] = None) -> RunEvent:
        return self.log(RunEventType.ERROR, action, details or {}, success=False, error=error)

    def log_run_end(self, summary: Dict[str, Any], wall_seconds: float) -> RunEvent:
        return self.log(
            RunEventType.RUN_END,
            "run_finished",
            summary,
            success=summary.get("status") != "diverged",
            wall_seconds=wall_seconds,
        )

    def read_events(self, event_type: Optional[RunEventType] = None) -> List[Dict[str, Any]]:
        if not self.log_path.exists():
            return []
        events = []
        for line in self.log_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            event = json.loads(line)
            if event_type is None or event["event_type"] == event_type.value:
                events.append(event)
        return events
