"""Dense tensors and labeled datasets"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from src.errors import CountMismatch, NonFiniteData, ShapeMismatch


@dataclass
class Tensor:
    """Row-major float-32 payload with an explicit shape"""

    shape: Tuple[int, ...]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.shape = tuple(int(d) for d in self.shape)
        self.data = np.ascontiguousarray(self.data, dtype=np.float32).reshape(-1)
        self.validate()

    def validate(self):
        expected = int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1
        if expected != self.data.size:
            raise ShapeMismatch(
                f"shape {list(self.shape)} needs {expected} values, got {self.data.size}"
            )
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteData("tensor contains NaN or Inf")

    @classmethod
    def from_array(cls, array) -> "Tensor":
        array = np.asarray(array)
        return cls(shape=array.shape, data=array.reshape(-1))

    def to_array(self) -> np.ndarray:
        return self.data.reshape(self.shape)

    @property
    def rank(self) -> int:
        return len(self.shape)

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(
            self.data.view(np.uint32), other.data.view(np.uint32)
        )


@dataclass
class LabeledDataset:
    inputs: Tensor
    labels: np.ndarray
    flags: Optional[np.ndarray] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint32).reshape(-1)
        if self.flags is not None:
            self.flags = np.asarray(self.flags, dtype=np.uint8).reshape(-1)
        n = self.inputs.shape[0] if self.inputs.rank else 0
        if self.labels.size != n:
            raise CountMismatch(f"{n} inputs but {self.labels.size} labels")
        if self.flags is not None:
            if self.flags.size != n:
                raise CountMismatch(f"{n} inputs but {self.flags.size} flags")
            if np.any(self.flags > 1):
                raise CountMismatch("flags must be 0 or 1")

    def __len__(self):
        return int(self.labels.size)

    @property
    def case_shape(self) -> Tuple[int, ...]:
        return self.inputs.shape[1:]

    def array(self) -> np.ndarray:
        return self.inputs.to_array()

    def validate_classes(self, num_classes: int):
        if self.labels.size and int(self.labels.max()) >= num_classes:
            raise CountMismatch(
                f"label {int(self.labels.max())} out of range for {num_classes} classes"
            )

    def subset(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.int64)
        inputs = self.array()[indices]
        return LabeledDataset(
            inputs=Tensor.from_array(inputs),
            labels=self.labels[indices],
            flags=None if self.flags is None else self.flags[indices],
        )
