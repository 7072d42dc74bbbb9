"""
Round Scheduler

Picks the participating clients C_t for every communication round.
Selection is uniform without replacement and depends only on
(master seed, round index), so any round can be replayed on its own.
"""

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .errors import ConfigurationError

SAMPLING_STREAM = 0x5C4ED


def sample_clients(client_count: int, participants: int, seed: int, round_index: int) -> Tuple[int, ...]:
    """Sorted tuple of `participants` distinct client ids for `round_index`."""
    if participants > client_count:
        raise ConfigurationError(
            f"participants ({participants}) exceeds clients ({client_count})",
            keys=["participants", "clients"],
        )
    rng = np.random.default_rng([seed, SAMPLING_STREAM, round_index])
    chosen = rng.choice(client_count, size=participants, replace=False)
    return tuple(sorted(int(i) for i in chosen))


@dataclass
class RoundScheduler:
    """Iterates rounds 1..total_rounds and hands out C_t."""
    client_count: int
    participants: int
    seed: int
    total_rounds: int
    current_round: int = 0
    history: List[Tuple[int, ...]] = field(default_factory=list)

    def has_next(self) -> bool:
        return self.current_round < self.total_rounds

    def next_round(self) -> Tuple[int, Tuple[int, ...]]:
        self.current_round += 1
        selected = sample_clients(self.client_count, self.participants, self.seed, self.current_round)
        self.history.append(selected)
        return self.current_round, selected


def derive_seed(*parts: int) -> int:
    """Integer seed for one named random stream, e.g. (master, stream, round, step)."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])
