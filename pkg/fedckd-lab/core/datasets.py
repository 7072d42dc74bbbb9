"""
Datasets

Loaders for IDX image corpora (Fashion-MNIST layout) and the UCI-HAR
text corpus, plus a seeded Gaussian mixture for desk-scale runs.
Datasets are immutable after construction.
"""

import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import structlog

from .errors import (
    BadMagicError,
    CountMismatchError,
    DatasetParseError,
    RejectedInputError,
    RowWidthError,
    TruncatedFileError,
    UnknownLabelError,
)

logger = structlog.get_logger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
UCIHAR_WIDTH = 561
UCIHAR_LABELS = 6


class Split(Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, integer labels, class count and split tag."""
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    split: Split = Split.TRAIN

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise RejectedInputError(f"features must be 2-D, got {features.shape}")
        if labels.shape != (features.shape[0],):
            raise RejectedInputError(
                f"{features.shape[0]} feature rows but {labels.shape[0]} labels"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise RejectedInputError(f"labels must lie in [0, {self.class_count})")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "split", Split(self.split))

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def input_extent(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        indices = np.asarray(indices, dtype=np.int64)
        return self.features[indices], self.labels[indices]


def _read_idx(path: Path, expected_magic: int, rank: int, field_prefix: str) -> np.ndarray:
    data = Path(path).read_bytes()
    header_size = 4 + 4 * rank
    if len(data) < header_size:
        raise TruncatedFileError("file shorter than its header", field=f"{field_prefix}.header", path=str(path))
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic != expected_magic:
        raise BadMagicError(
            f"expected 0x{expected_magic:08x}, found 0x{magic:08x}",
            field=f"{field_prefix}.magic",
            path=str(path),
        )
    extents = struct.unpack_from(f">{rank}I", data, 4)
    expected = int(np.prod(extents))
    payload = data[header_size:]
    if len(payload) < expected:
        raise TruncatedFileError(
            f"declared {expected} bytes of payload, found {len(payload)}",
            field=f"{field_prefix}.payload",
            path=str(path),
        )
    return np.frombuffer(payload[:expected], dtype=np.uint8).reshape(extents)


def load_idx(
    images_path: Union[str, Path],
    labels_path: Union[str, Path],
    class_count: int = 10,
    split: Split = Split.TRAIN,
) -> Dataset:
    """Load an IDX image/label pair; pixels are scaled to [0, 1] and flattened."""
    images = _read_idx(Path(images_path), IDX_IMAGES_MAGIC, 3, "images")
    labels = _read_idx(Path(labels_path), IDX_LABELS_MAGIC, 1, "labels")
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{images.shape[0]} images but {labels.shape[0]} labels",
            field="count",
            path=str(labels_path),
        )
    if labels.size and labels.max() >= class_count:
        row = int(np.argmax(labels >= class_count))
        raise UnknownLabelError(
            f"label {int(labels[row])} outside [0, {class_count})",
            field="labels.value",
            row=row,
            path=str(labels_path),
        )
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    logger.info("idx_loaded", images=str(images_path), count=int(labels.shape[0]))
    return Dataset(features, labels.astype(np.int64), class_count, split)


def _read_text_matrix(path: Path, width: int) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for row_number, line in enumerate(f, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != width:
                raise RowWidthError(
                    f"expected {width} columns, found {len(tokens)}",
                    field="X.width",
                    row=row_number,
                    path=str(path),
                )
            try:
                rows.append([float(token) for token in tokens])
            except ValueError as e:
                raise DatasetParseError(str(e), field="X.value", row=row_number, path=str(path)) from e
    return np.asarray(rows, dtype=np.float64).reshape(len(rows), width)


def _read_text_labels(path: Path) -> np.ndarray:
    known = {str(k) for k in range(1, UCIHAR_LABELS + 1)}
    labels = []
    with open(path, "r", encoding="utf-8") as f:
        for row_number, line in enumerate(f, start=1):
            token = line.strip()
            if not token:
                continue
            if token not in known:
                raise UnknownLabelError(
                    f"label token {token!r} not in 1..{UCIHAR_LABELS}",
                    field="y.value",
                    row=row_number,
                    path=str(path),
                )
            labels.append(int(token) - 1)
    return np.asarray(labels, dtype=np.int64)


def _load_ucihar_split(directory: Path, split: Split, width: int) -> Dataset:
    name = split.value
    features = _read_text_matrix(directory / name / f"X_{name}.txt", width)
    labels = _read_text_labels(directory / name / f"y_{name}.txt")
    if features.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{features.shape[0]} feature rows but {labels.shape[0]} labels",
            field="count",
            path=str(directory / name),
        )
    return Dataset(features, labels, UCIHAR_LABELS, split)


def load_ucihar(directory: Union[str, Path], width: int = UCIHAR_WIDTH) -> Tuple[Dataset, Dataset]:
    """
    Load the UCI-HAR corpus from its standard layout:
    <dir>/train/X_train.txt, y_train.txt and <dir>/test/X_test.txt, y_test.txt.
    Labels 1..6 are remapped to 0..5.
    """
    directory = Path(directory)
    train = _load_ucihar_split(directory, Split.TRAIN, width)
    test = _load_ucihar_split(directory, Split.TEST, width)
    logger.info("ucihar_loaded", train=len(train), test=len(test))
    return train, test


def class_means(class_count: int, input_extent: int, separation: float, rng: np.random.Generator) -> np.ndarray:
    if input_extent >= class_count:
        means = np.zeros((class_count, input_extent))
        means[np.arange(class_count), np.arange(class_count)] = separation
        return means
    directions = rng.standard_normal((class_count, input_extent))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return separation * directions


def synthetic_mixture(
    class_count: int,
    input_extent: int,
    samples: int,
    seed: int,
    separation: float = 4.0,
    split: Split = Split.TRAIN,
    means_seed: int = 0,
) -> Dataset:
    """
    Gaussian blobs with unit within-class variance, one mean per class.

    Labels are balanced (samples spread round-robin over classes, then
    shuffled). Class means depend only on `means_seed` so train and test
    draws share the same mixture.
    """
    if min(class_count, input_extent, samples) < 1:
        raise RejectedInputError("class_count, input_extent and samples must be positive")
    means = class_means(class_count, input_extent, separation, np.random.default_rng(means_seed))
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(samples) % class_count)
    features = means[labels] + rng.standard_normal((samples, input_extent))
    return Dataset(features, labels, class_count, split)
