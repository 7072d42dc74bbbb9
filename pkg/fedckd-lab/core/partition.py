"""
Non-IID partitioning.

Class-wise Dirichlet dealing: for every label, draw client proportions
from Dir(alpha * 1_N) and deal that label's shuffled indices accordingly.
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
import structlog

from .datasets import Dataset
from .errors import ConfigurationError, RejectedInputError

logger = structlog.get_logger(__name__)


@dataclass
class PartitionMap:
    """Per-client index lists over the train split."""
    client_indices: List[np.ndarray]
    dirichlet_alpha: float

    @property
    def client_count(self) -> int:
        return len(self.client_indices)

    def sizes(self) -> np.ndarray:
        return np.array([len(indices) for indices in self.client_indices], dtype=np.int64)


def dirichlet_partition(dataset: Dataset, client_count: int, dirichlet_alpha: float, seed: int) -> PartitionMap:
    """Split the train indices into `client_count` disjoint, nonempty shards."""
    if client_count < 1:
        raise ConfigurationError("need at least one client", keys=["clients"])
    if len(dataset) == 0:
        raise RejectedInputError("cannot partition an empty dataset")
    if client_count > len(dataset):
        raise ConfigurationError(
            f"{client_count} clients but only {len(dataset)} train samples",
            keys=["clients"],
        )
    if dirichlet_alpha <= 0:
        raise ConfigurationError("dirichlet_alpha must be positive", keys=["dirichlet_alpha"])

    rng = np.random.default_rng(seed)
    shards: List[List[int]] = [[] for _ in range(client_count)]
    for label in range(dataset.class_count):
        class_indices = np.flatnonzero(dataset.labels == label)
        if class_indices.size == 0:
            continue
        rng.shuffle(class_indices)
        proportions = rng.dirichlet(np.full(client_count, dirichlet_alpha))
        cuts = (np.cumsum(proportions) * class_indices.size).astype(np.int64)[:-1]
        for client_id, part in enumerate(np.split(class_indices, cuts)):
            shards[client_id].extend(int(i) for i in part)

    repaired = 0
    while True:
        sizes = [len(shard) for shard in shards]
        if min(sizes) > 0:
            break
        empty = sizes.index(0)
        largest = int(np.argmax(sizes))
        shards[empty].append(shards[largest].pop())
        repaired += 1
    if repaired:
        logger.info("partition_repaired", moved=repaired)

    return PartitionMap(
        client_indices=[np.array(sorted(shard), dtype=np.int64) for shard in shards],
        dirichlet_alpha=float(dirichlet_alpha),
    )


def label_histogram(dataset: Dataset, indices: Sequence[int]) -> np.ndarray:
    """Normalized class counts over `indices`; uniform for an empty list."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        logger.warning("empty_histogram", class_count=dataset.class_count)
        return np.full(dataset.class_count, 1.0 / dataset.class_count)
    counts = np.bincount(dataset.labels[indices], minlength=dataset.class_count).astype(np.float64)
    return counts / counts.sum()


def label_entropy(histogram: np.ndarray) -> float:
    """Shannon entropy (nats) of a label histogram."""
    p = histogram[histogram > 0]
    return float(-(p * np.log(p)).sum())
