"""
Agent Manager

RESPONSIBILITY: Spawn the client agents and run a round's local updates.

Local updates for the participants of one round are independent, so they
run on up to `max_concurrent_agents` worker threads. Each client draws
from its own seeded stream and results are returned in participant order,
which keeps the outcome independent of scheduling.
"""

from typing import Dict, List, Sequence
import asyncio

import structlog

from core.datasets import Dataset
from state.federation_store import ClientStore

from .base_agent import AgentContext, AgentResult
from .client_agent import ClientAgent, LocalTrainConfig

logger = structlog.get_logger(__name__)


class AgentManager:
    """
    Agent Manager - registry of client agents plus the bounded worker pool.
    """

    def __init__(
        self,
        clients: ClientStore,
        train: Dataset,
        test: Dataset,
        tc: LocalTrainConfig,
        max_concurrent_agents: int = 1,
    ):
        if max_concurrent_agents < 1:
            raise ValueError("max_concurrent_agents must be at least 1")
        self.max_concurrent_agents = max_concurrent_agents
        self.agents: Dict[int, ClientAgent] = {
            client.client_id: ClientAgent(client, train, test, tc) for client in clients
        }

    async def run_clients(self, participants: Sequence[int], context: AgentContext) -> List[AgentResult]:
        """Run every participant's update; results come back in participant order."""
        if self.max_concurrent_agents == 1:
            return [self.agents[i].run_update(context) for i in participants]

        semaphore = asyncio.Semaphore(self.max_concurrent_agents)

        async def run_one(client_id: int) -> AgentResult:
            async with semaphore:
                return await asyncio.to_thread(self.agents[client_id].run_update, context)

        logger.debug(
            "clients_dispatched",
            round=context.round_index,
            participants=len(participants),
            workers=self.max_concurrent_agents,
        )
        return list(await asyncio.gather(*(run_one(i) for i in participants)))
