"""Training-set embeddings used by distance-based surprise"""

from dataclasses import dataclass, field

import numpy as np

from src.errors import DimensionMismatch, EmptyClassError


@dataclass(frozen=True)
class EmbeddingStore:
    train_embeddings: np.ndarray
    train_labels: np.ndarray
    # distance from each training point to its nearest other-class point
    reference_distance: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return int(self.train_embeddings.shape[1])

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.train_labels)

    def of_class(self, label: int) -> np.ndarray:
        return np.nonzero(self.train_labels == label)[0]


def build_embedding_store(embeddings, labels, chunk_size: int = 256) -> EmbeddingStore:
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if embeddings.ndim != 2 or embeddings.shape[0] != labels.size:
        raise DimensionMismatch(
            f"embeddings {embeddings.shape} do not align with {labels.size} labels"
        )
    if np.unique(labels).size < 2:
        raise EmptyClassError("embedding store needs at least two classes")

    reference = np.empty(labels.size, dtype=np.float64)
    for start in range(0, labels.size, chunk_size):
        block = embeddings[start : start + chunk_size]
        diffs = block[:, None, :] - embeddings[None, :, :]
        dists = np.sqrt(np.sum(diffs * diffs, axis=2))
        same = labels[start : start + chunk_size, None] == labels[None, :]
        dists[same] = np.inf
        reference[start : start + chunk_size] = dists.min(axis=1)
    return EmbeddingStore(embeddings, labels, reference)
