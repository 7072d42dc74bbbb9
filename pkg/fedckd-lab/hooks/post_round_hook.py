"""
Post-Round Hook

Runs AFTER each round, before the stop hook:
- appends the round's metrics row
- writes the round event (with wall time) to the run event log
- logs a one-line progress event
"""

from typing import Optional

import structlog

from skills.write_metrics import MetricsWriter
from state.event_log import RunEventLog

from .base_hook import BaseHook, HookAction, HookContext, HookResult

logger = structlog.get_logger(__name__)


class PostRoundHook(BaseHook):
    """Persists every round as it completes."""

    name = "PostRoundHook"
    description = "Writes the metrics row and event for each finished round"

    def __init__(self, metrics: MetricsWriter, event_log: Optional[RunEventLog] = None):
        super().__init__()
        self.metrics = metrics
        self.event_log = event_log

    async def execute(self, context: HookContext) -> HookResult:
        record = context.record
        if record is None:
            result = HookResult(action=HookAction.CONTINUE, reason="no_record")
            self.record_result(result)
            return result

        self.metrics.append(record)
        if self.event_log is not None:
            self.event_log.log_round(record.to_dict(), wall_seconds=record.wall_seconds)
        logger.info(
            "round_complete",
            round=record.round_index,
            status=record.status,
            acc_mean=record.acc_mean,
            global_acc=record.global_accuracy,
            distill_loss=record.distill_loss,
        )
        result = HookResult(
            action=HookAction.CONTINUE,
            reason="round_persisted",
            data={"rows_written": self.metrics.rows_written},
        )
        self.record_result(result)
        return result
