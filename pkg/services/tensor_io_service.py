"""Binary tensor / label formats and CSV exports"""

import logging
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from models.tensor import LabeledDataset, Tensor
from src.errors import (
    BadMagic,
    CountMismatch,
    FormatError,
    NonFiniteData,
    ShapeMismatch,
    TruncatedPayload,
)
from utils.number_format import NumberFormatter

logger = logging.getLogger(__name__)

TENSOR_MAGIC = b"AGTD"
LABEL_MAGIC = b"AGLB"

_U32 = np.dtype("<u4")
_F32 = np.dtype("<f4")


class _Reader:
    """Cursor over a byte payload that fails loudly on short reads"""

    def __init__(self, payload: bytes, source: str):
        self.payload = payload
        self.source = source
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise TruncatedPayload(
                f"{self.source}: truncated {what} (need {size} bytes at offset {self.offset})"
            )
        chunk = self.payload[self.offset : end]
        self.offset = end
        return chunk

    def u32(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(4 * count, what), dtype=_U32, count=count)

    @property
    def remaining(self) -> int:
        return len(self.payload) - self.offset


def _check_magic(reader: _Reader, magic: bytes):
    found = reader.payload[:4]
    if found != magic:
        raise BadMagic(magic, found)
    reader.offset = 4


def encode_tensor(tensor: Tensor) -> bytes:
    if not np.all(np.isfinite(tensor.data)):
        raise NonFiniteData("refusing to write NaN/Inf")
    dims = np.asarray(tensor.shape, dtype=_U32)
    return b"".join(
        [
            TENSOR_MAGIC,
            np.asarray([len(tensor.shape)], dtype=_U32).tobytes(),
            dims.tobytes(),
            tensor.data.astype(_F32).tobytes(),
        ]
    )


def decode_tensor(payload: bytes, source: str = "<bytes>") -> Tensor:
    reader = _Reader(payload, source)
    _check_magic(reader, TENSOR_MAGIC)
    rank = int(reader.u32(1, "rank")[0])
    dims = tuple(int(d) for d in reader.u32(rank, "dims"))
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    expected = 4 * count
    if reader.remaining < expected:
        raise TruncatedPayload(
            f"{source}: shape {list(dims)} needs {expected} data bytes, {reader.remaining} present"
        )
    if reader.remaining > expected:
        raise ShapeMismatch(
            f"{source}: shape {list(dims)} needs {expected} data bytes, {reader.remaining} present"
        )
    data = np.frombuffer(reader.take(expected, "data"), dtype=_F32).astype(np.float32)
    return Tensor(shape=dims, data=data)


def read_tensor(path) -> Tensor:
    path = Path(path)
    return decode_tensor(path.read_bytes(), str(path))


def write_tensor(tensor: Tensor, path):
    payload = encode_tensor(tensor)
    Path(path).write_bytes(payload)
    logger.debug("wrote tensor %s to %s", list(tensor.shape), path)


def encode_labels(labels: Sequence[int], flags: Optional[Sequence[int]] = None) -> bytes:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() > 0xFFFFFFFF):
        raise CountMismatch("labels must fit in u32")
    parts = [
        LABEL_MAGIC,
        np.asarray([labels.size], dtype=_U32).tobytes(),
        labels.astype(_U32).tobytes(),
    ]
    if flags is None:
        parts.append(b"\x00")
    else:
        flags = np.asarray(flags, dtype=np.int64).reshape(-1)
        if flags.size != labels.size:
            raise CountMismatch(f"{labels.size} labels but {flags.size} flags")
        if np.any((flags != 0) & (flags != 1)):
            raise CountMismatch("flags must be 0 or 1")
        parts.append(b"\x01")
        parts.append(flags.astype(np.uint8).tobytes())
    return b"".join(parts)


def decode_labels(payload: bytes, source: str = "<bytes>") -> Tuple[np.ndarray, Optional[np.ndarray]]:
    reader = _Reader(payload, source)
    _check_magic(reader, LABEL_MAGIC)
    count = int(reader.u32(1, "count")[0])
    if reader.remaining < 4 * count + 1:
        raise CountMismatch(f"{source}: header announces {count} labels, payload is shorter")
    labels = reader.u32(count, "labels").astype(np.uint32)
    presence = reader.take(1, "flag presence byte")[0]
    flags = None
    if presence == 1:
        if reader.remaining != count:
            raise CountMismatch(f"{source}: expected {count} flags, found {reader.remaining}")
        flags = np.frombuffer(reader.take(count, "flags"), dtype=np.uint8).copy()
        if np.any(flags > 1):
            raise CountMismatch(f"{source}: flags must be 0 or 1")
    elif presence != 0:
        raise CountMismatch(f"{source}: bad flag presence byte {presence}")
    if reader.remaining:
        raise CountMismatch(f"{source}: {reader.remaining} trailing bytes after {count} labels")
    return labels, flags


def read_labels(path) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    path = Path(path)
    return decode_labels(path.read_bytes(), str(path))


def write_labels(path, labels: Sequence[int], flags: Optional[Sequence[int]] = None):
    Path(path).write_bytes(encode_labels(labels, flags))


def read_dataset(inputs_path, labels_path) -> LabeledDataset:
    inputs = read_tensor(inputs_path)
    labels, flags = read_labels(labels_path)
    return LabeledDataset(inputs=inputs, labels=labels, flags=flags)


def write_dataset(dataset: LabeledDataset, inputs_path, labels_path):
    write_tensor(dataset.inputs, inputs_path)
    write_labels(labels_path, dataset.labels, dataset.flags)


# ------------------- CSV exports -------------------
def scores_frame(scores, order=None) -> pd.DataFrame:
    """`index,score` rows, in priority order when an order is given"""
    scores = np.asarray(scores)
    indices = np.arange(scores.size) if order is None else np.asarray(order)
    return pd.DataFrame(
        {
            "index": indices.astype(np.int64),
            "score": NumberFormatter.format_row(scores[indices]),
        }
    )


def write_scores_csv(path, scores, order=None):
    scores_frame(scores, order).to_csv(path, index=False, lineterminator="\n")


def _read_csv(path, **kwargs) -> pd.DataFrame:
    try:
        return pd.read_csv(path, **kwargs)
    except (ValueError, pd.errors.ParserError) as e:
        raise FormatError(f"{path}: unreadable CSV: {e}") from e


def read_scores_csv(path) -> np.ndarray:
    """Scores aligned to original indices, whatever row order the file uses"""
    frame = _read_csv(path, dtype=str)
    if list(frame.columns) != ["index", "score"]:
        raise CountMismatch(f"{path}: expected header 'index,score'")
    try:
        indices = frame["index"].astype(np.int64).to_numpy()
        values = frame["score"].astype(np.float64).to_numpy()
    except (ValueError, TypeError) as e:
        raise FormatError(f"{path}: non-numeric index or score: {e}") from e
    n = indices.size
    if n and not np.array_equal(np.sort(indices), np.arange(n)):
        raise CountMismatch(f"{path}: indices must cover 0..{n - 1} exactly once")
    scores = np.empty(n, dtype=np.float64)
    scores[indices] = values
    return scores


def features_frame(features) -> pd.DataFrame:
    features = np.asarray(features)
    columns = {"index": np.arange(features.shape[0], dtype=np.int64)}
    for j in range(features.shape[1]):
        columns[f"f{j}"] = NumberFormatter.format_row(features[:, j])
    return pd.DataFrame(columns)


def write_features_csv(path, features):
    features_frame(features).to_csv(path, index=False, lineterminator="\n")


def read_features_csv(path) -> np.ndarray:
    frame = _read_csv(path)
    if not len(frame.columns) or frame.columns[0] != "index":
        raise CountMismatch(f"{path}: expected a leading 'index' column")
    try:
        return frame.drop(columns=["index"]).to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as e:
        raise FormatError(f"{path}: non-numeric feature value: {e}") from e
