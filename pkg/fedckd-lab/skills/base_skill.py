"""
Base Skill class for all skills.

Skills are ATOMIC - they write one artifact and return.
Skills do NOT:
- Train
- Loop over rounds
- Make decisions about continuation
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import structlog

from core.errors import LabError

logger = structlog.get_logger(__name__)


@dataclass
class SkillResult:
    """Result from a skill execution."""
    success: bool
    data: Optional[Dict[str, Any]] = None
    error: Optional[str] = None
    artifacts: List[str] = field(default_factory=list)
    cause: Optional[Exception] = None

    def raise_for_failure(self) -> "SkillResult":
        """Re-raise the error behind a failed result; return self otherwise."""
        if self.success:
            return self
        if self.cause is not None:
            raise self.cause
        raise LabError(self.error or "skill failed")


class BaseSkill(ABC):
    """
    Base class for all skills.

    Skills accept specific arguments, perform a single operation and
    return a structured result.
    """

    name: str = "BaseSkill"
    description: str = "Base skill class"
    required_args: List[str] = []

    @abstractmethod
    async def execute(self, args: Dict[str, Any], context: Optional[Any] = None) -> SkillResult:
        pass

    def validate_args(self, args: Dict[str, Any]) -> List[str]:
        """Names of missing required arguments."""
        return [f"missing argument: {name}" for name in self.required_args if name not in args]

    async def post_execute(self, result: SkillResult):
        logger.debug("skill_executed", skill=self.name, success=result.success, artifacts=result.artifacts)
