"""
Federation Store

In-memory state for one experiment: every client's live model and
historical snapshot, and the server's global model, generator and
participation ledger.
"""

from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence

import numpy as np

from core.errors import RejectedStateError
from core.generator import GeneratorNet
from core.ipwd import ParticipationLedger
from core.models import SplitModel


@dataclass
class ClientState:
    """One client: live model, previous-round snapshot and local data view."""
    client_id: int
    model: SplitModel
    train_indices: np.ndarray
    histogram: np.ndarray
    lr: float
    snapshot: Optional[SplitModel] = None
    rounds_participated: int = 0
    last_round: int = 0

    @property
    def sample_count(self) -> int:
        return int(self.train_indices.shape[0])

    def refresh_snapshot(self, round_index: int) -> None:
        """Copy the live model into the snapshot; once per participated round."""
        if self.last_round == round_index and self.snapshot is not None:
            raise RejectedStateError(
                f"client {self.client_id} snapshot already refreshed in round {round_index}"
            )
        self.snapshot = self.model.copy()
        self.last_round = round_index
        self.rounds_participated += 1


@dataclass
class ServerState:
    """Global model, generator, ledger and round counter."""
    global_model: SplitModel
    generator: GeneratorNet
    ledger: ParticipationLedger
    round_counter: int = 0

    def begin_round(self, participants: Sequence[int]) -> int:
        self.round_counter += 1
        self.ledger.record(participants)
        self.check_ledger()
        return self.round_counter

    def check_ledger(self) -> None:
        if len(self.ledger) != self.round_counter:
            raise RejectedStateError(
                f"ledger holds {len(self.ledger)} rounds at round {self.round_counter}"
            )


class ClientStore:
    """Indexed collection of ClientState objects."""

    def __init__(self, clients: Sequence[ClientState]):
        ids = [c.client_id for c in clients]
        if ids != list(range(len(clients))):
            raise RejectedStateError("client ids must be 0..N-1 in order")
        self._clients: List[ClientState] = list(clients)

    def __len__(self) -> int:
        return len(self._clients)

    def __iter__(self) -> Iterator[ClientState]:
        return iter(self._clients)

    def __getitem__(self, client_id: int) -> ClientState:
        return self._clients[client_id]

    def models(self) -> List[SplitModel]:
        return [c.model for c in self._clients]

    def sizes(self) -> List[int]:
        return [c.sample_count for c in self._clients]

    def histograms(self) -> Mapping[int, np.ndarray]:
        return {c.client_id: c.histogram for c in self._clients}

    def get_stats(self) -> Dict[str, Any]:
        counts = [c.rounds_participated for c in self._clients]
        return {
            "clients": len(self._clients),
            "never_selected": sum(1 for n in counts if n == 0),
            "max_participations": max(counts) if counts else 0,
        }
