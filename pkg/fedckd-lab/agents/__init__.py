"""
Federation agents.

- ClientAgent: local update with cross-entropy, distillation and contrastive terms
- ServerAgent: client weighting, generator training, global distillation
- AgentManager: spawns client agents and runs a round's updates concurrently
"""

from .base_agent import AgentContext, AgentResult, AgentState, BaseAgent
from .client_agent import (
    ClientAgent,
    LocalObjective,
    LocalTrainConfig,
    LocalUpdateResult,
    client_rng,
    local_objective,
    local_update,
    train_local_ce,
)
from .server_agent import ServerAgent, ServerRoundOutcome
from .agent_manager import AgentManager

__all__ = [
    "AgentContext",
    "AgentResult",
    "AgentState",
    "BaseAgent",
    "ClientAgent",
    "LocalObjective",
    "LocalTrainConfig",
    "LocalUpdateResult",
    "client_rng",
    "local_objective",
    "local_update",
    "train_local_ce",
    "ServerAgent",
    "ServerRoundOutcome",
    "AgentManager",
]
