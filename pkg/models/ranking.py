"""Boosted-tree ranking model and priority lists"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np


@dataclass
class RegressionTree:
    """Flat node arrays; a node is a leaf when feature == -1.

    Rows with x[feature] < threshold go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def num_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def leaf_values(self) -> np.ndarray:
        return self.value[self.feature < 0]

    def predict(self, features: np.ndarray) -> np.ndarray:
        node = np.zeros(features.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            rows = np.nonzero(active)[0]
            current = node[rows]
            go_left = features[rows, self.feature[current]] < self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[node] >= 0
        return self.value[node]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RegressionTree":
        return cls(
            feature=np.asarray(payload["feature"], dtype=np.int64),
            threshold=np.asarray(payload["threshold"], dtype=np.float64),
            left=np.asarray(payload["left"], dtype=np.int64),
            right=np.asarray(payload["right"], dtype=np.int64),
            value=np.asarray(payload["value"], dtype=np.float64),
        )


@dataclass
class GBDTModel:
    trees: List[RegressionTree]
    learning_rate: float
    base_score: float
    n_features: int
    params: dict = field(default_factory=dict)
    loss_history: List[float] = field(default_factory=list)


@dataclass
class RankTrainSet:
    features: np.ndarray
    labels: np.ndarray

    @property
    def class_counts(self):
        return int(np.sum(self.labels == 0)), int(np.sum(self.labels == 1))


@dataclass
class RankedList:
    """Descending-priority permutation plus what RAUC needs"""

    order: np.ndarray
    scores: np.ndarray
    flags: Optional[np.ndarray] = None

    def __len__(self):
        return int(self.order.size)

    def head(self, n: int) -> np.ndarray:
        return self.order[:n]
