"""
Stop Hook

Decides after every round whether the run continues.

ABSOLUTE RULE: Agents NEVER decide termination. ONLY the stop hook decides.

Decision order:
1) round status diverged        -> TERMINATE (diverged)
2) round budget exhausted       -> TERMINATE (round_budget_exhausted)
3) otherwise                    -> CONTINUE  (rounds_remaining)
"""

import structlog

from core.records import STATUS_DIVERGED

from .base_hook import BaseHook, HookAction, HookContext, HookResult

logger = structlog.get_logger(__name__)

REASON_DIVERGED = "diverged"
REASON_BUDGET = "round_budget_exhausted"
REASON_CONTINUE = "rounds_remaining"


class StopHook(BaseHook):
    """Gatekeeper of run termination."""

    name = "StopHook"
    description = "Terminates on divergence or when the round budget is spent"

    async def execute(self, context: HookContext) -> HookResult:
        if context.record is not None and context.record.status == STATUS_DIVERGED:
            result = HookResult(
                action=HookAction.TERMINATE,
                reason=REASON_DIVERGED,
                data={"round": context.round_index},
            )
            logger.warning("run_diverged", round=context.round_index)
        elif context.round_index >= context.total_rounds:
            result = HookResult(
                action=HookAction.TERMINATE,
                reason=REASON_BUDGET,
                data={"round": context.round_index, "total_rounds": context.total_rounds},
            )
        else:
            result = HookResult(
                action=HookAction.CONTINUE,
                reason=REASON_CONTINUE,
                data={"remaining": context.total_rounds - context.round_index},
            )
        self.record_result(result)
        return result
