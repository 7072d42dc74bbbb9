"""
Checkpoint format.

Binary file: little-endian uint32 tensor count, then per tensor a uint32
rank followed by its uint32 extents, then every tensor's data as
little-endian float64 in table order. A sidecar YAML manifest
(`<file>.manifest.yaml`) records what the tensors are and the seed.
"""

import struct
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import yaml

from .errors import MetricsWriteError, RejectedInputError, TruncatedFileError
from .models import ModelSpec, SplitModel, build_model
from .numcore import parameters


def manifest_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.yaml")


def write_arrays(path: Path, arrays: Sequence[np.ndarray], manifest: Dict[str, Any]) -> Path:
    """Write tensors and their sidecar manifest."""
    path = Path(path)
    header = [struct.pack("<I", len(arrays))]
    for array in arrays:
        header.append(struct.pack("<I", array.ndim))
        header.append(struct.pack(f"<{array.ndim}I", *array.shape))
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(b"".join(header) + payload)
        manifest_path(path).write_text(yaml.safe_dump(manifest, sort_keys=True), encoding="utf-8")
    except OSError as e:
        raise MetricsWriteError(str(e), str(path)) from e
    return path


def read_arrays(path: Path) -> Tuple[List[np.ndarray], Dict[str, Any]]:
    """Read tensors and manifest written by write_arrays."""
    path = Path(path)
    data = path.read_bytes()
    offset = 0

    def take(fmt: str, field_name: str) -> Tuple[int, ...]:
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(data):
            raise TruncatedFileError("file ends inside the shape table", field=field_name, path=str(path))
        values = struct.unpack_from(fmt, data, offset)
        offset += size
        return values

    (count,) = take("<I", "tensor_count")
    shapes = []
    for _ in range(count):
        (rank,) = take("<I", "rank")
        shapes.append(take(f"<{rank}I", "extents"))

    arrays = []
    for shape in shapes:
        n = int(np.prod(shape)) if shape else 1
        end = offset + 8 * n
        if end > len(data):
            raise TruncatedFileError("file ends inside tensor data", field="data", path=str(path))
        arrays.append(np.frombuffer(data[offset:end], dtype="<f8").astype(np.float64).reshape(shape))
        offset = end

    manifest = yaml.safe_load(manifest_path(path).read_text(encoding="utf-8")) or {}
    return arrays, manifest


def save_model(model: SplitModel, path: Path, tag: str = "model") -> Path:
    manifest = {"kind": "split_model", "tag": tag, "seed": model.seed, "spec": model.spec.to_dict()}
    return write_arrays(path, parameters(model.layers), manifest)


def load_model(path: Path) -> SplitModel:
    """Rebuild the architecture from the manifest, then overwrite parameters."""
    arrays, manifest = read_arrays(path)
    if manifest.get("kind") != "split_model":
        raise RejectedInputError(f"{path} does not hold a split model")
    model = build_model(ModelSpec.from_dict(manifest["spec"]), int(manifest["seed"]))
    targets = parameters(model.layers)
    if len(targets) != len(arrays) or any(t.shape != a.shape for t, a in zip(targets, arrays)):
        raise RejectedInputError(f"{path} tensors do not match the manifest")
    for target, array in zip(targets, arrays):
        target[...] = array
    return model
