"""
Base Hook class for all hooks.

Hooks run OUTSIDE agent logic and control the round loop.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, TYPE_CHECKING

if TYPE_CHECKING:
    from core.records import RoundRecord


class HookAction(Enum):
    """Actions a hook can return."""
    CONTINUE = "continue"    # Keep going
    TERMINATE = "terminate"  # Stop the run


@dataclass
class HookResult:
    """Result from a hook execution."""
    action: HookAction
    reason: str
    data: Dict[str, Any] = field(default_factory=dict)


@dataclass
class HookContext:
    """Context provided to hooks after a round."""
    run_id: str
    round_index: int
    total_rounds: int
    record: Optional["RoundRecord"] = None
    elapsed_time_seconds: float = 0.0


class BaseHook(ABC):
    """
    Base class for all hooks.

    Hooks:
    - Run outside agent logic
    - Cannot be bypassed by agents
    - Control the flow of execution
    """

    name: str = "BaseHook"
    description: str = "Base hook class"

    def __init__(self):
        self.decisions: List[HookResult] = []

    @abstractmethod
    async def execute(self, context: HookContext) -> HookResult:
        pass

    def record_result(self, result: HookResult):
        self.decisions.append(result)
