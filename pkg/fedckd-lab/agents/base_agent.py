"""
Base Agent class for the federation actors.

Clients and the server inherit from this class and implement perform_step.
Agents NEVER decide termination - that is the stop hook's responsibility.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, TYPE_CHECKING

import structlog

if TYPE_CHECKING:
    from core.config import ExperimentConfig
    from core.generator import PseudoBatch
    from core.models import SplitModel


class AgentState(Enum):
    """Possible states for an agent."""
    IDLE = "idle"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class AgentResult:
    """Result from one agent step."""
    success: bool
    data: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None


@dataclass
class AgentContext:
    """What an agent sees during one round."""
    round_index: int
    config: "ExperimentConfig"
    participants: Sequence[int] = ()
    global_model: Optional["SplitModel"] = None
    pseudo_batch: Optional["PseudoBatch"] = None
    previous_results: List[AgentResult] = field(default_factory=list)


class BaseAgent(ABC):
    """
    Base class for all agents in the lab.

    Each agent:
    - Has ONE responsibility
    - Implements perform_step()
    - Returns structured results
    - NEVER decides termination
    """

    def __init__(self, agent_id: str, name: str = "BaseAgent"):
        self.agent_id = agent_id
        self.name = name
        self.state = AgentState.IDLE
        self.iteration_count = 0
        self.logger = structlog.get_logger(__name__).bind(agent=name, agent_id=agent_id)

    @abstractmethod
    async def perform_step(self, context: AgentContext) -> AgentResult:
        """
        Perform this agent's work for one round and return the outcome.
        It does NOT decide whether the run continues.
        """
        pass
