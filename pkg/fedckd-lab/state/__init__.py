"""
Lab State Module

- Federation store: client models, snapshots and the server state
- Run event log: append-only JSON lines per run
"""

from .federation_store import ClientState, ClientStore, ServerState
from .event_log import RunEvent, RunEventLog, RunEventType

__all__ = [
    "ClientState",
    "ClientStore",
    "ServerState",
    "RunEvent",
    "RunEventLog",
    "RunEventType",
]
