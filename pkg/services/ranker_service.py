"""Second-order boosted regression trees for fault-likelihood ranking"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from models.experiment import RankerParams
from models.ranking import GBDTModel, RankedList, RankTrainSet, RegressionTree
from src.errors import (
    DimensionMismatch,
    EmptyClassError,
    ModelFormatError,
    NonFiniteData,
    SingleClassError,
    UnsupportedVersion,
)
from utils.rng import SplitMix64

logger = logging.getLogger(__name__)

RANKER_VERSION = 1


def sigmoid(margin: np.ndarray) -> np.ndarray:
    margin = np.asarray(margin, dtype=np.float64)
    out = np.empty_like(margin)
    pos = margin >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-margin[pos]))
    exp = np.exp(margin[~pos])
    out[~pos] = exp / (1.0 + exp)
    return out


def logistic_loss(labels: np.ndarray, margin: np.ndarray) -> float:
    """Mean binary log-loss computed from raw margins"""
    return float(np.mean(np.logaddexp(0.0, margin) - labels * margin))


def balance_trainset(features, labels, target_per_class: int, seed: int) -> RankTrainSet:
    """Resample both classes with replacement to exactly target_per_class rows"""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if target_per_class < 1:
        raise ValueError("target_per_class must be >= 1")
    if features.shape[0] != labels.size:
        raise DimensionMismatch(f"{features.shape[0]} feature rows but {labels.size} labels")
    rng = SplitMix64(seed)
    picked = []
    for cls in (0, 1):
        members = np.nonzero(labels == cls)[0]
        if members.size == 0:
            raise EmptyClassError(f"class {cls} has no rows to resample")
        picked.append(members[rng.integers(members.size, target_per_class)])
    rows = np.concatenate(picked)
    rows = rows[rng.permutation(rows.size)]
    logger.info(
        "balanced %d/%d rows to %d per class",
        int(np.sum(labels == 0)),
        int(np.sum(labels == 1)),
        target_per_class,
    )
    return RankTrainSet(features=features[rows], labels=labels[rows])


# ------------------- tree growing -------------------
@dataclass
class _Split:
    gain: float
    feature: int
    threshold: float


class _TreeBuilder:
    """Exact greedy growth over presorted feature columns"""

    def __init__(self, features, grad, hess, columns, params: RankerParams, presorted):
        self.x = features
        self.g = grad
        self.h = hess
        self.columns = columns
        self.params = params
        self.presorted = presorted
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.value: List[float] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def _score(self, g: float, h: float) -> float:
        return g * g / (h + self.params.reg_lambda)

    def _best_split(self, in_node: np.ndarray, g_total: float, h_total: float) -> Optional[_Split]:
        lam, gamma = self.params.reg_lambda, self.params.gamma
        parent = self._score(g_total, h_total)
        best: Optional[_Split] = None
        for f in self.columns:
            order = self.presorted[f]
            order = order[in_node[order]]
            values = self.x[order, f]
            g_left = np.cumsum(self.g[order])[:-1]
            h_left = np.cumsum(self.h[order])[:-1]
            distinct = values[1:] > values[:-1]
            if not np.any(distinct):
                continue
            g_right = g_total - g_left
            h_right = h_total - h_left
            gains = 0.5 * (
                g_left**2 / (h_left + lam) + g_right**2 / (h_right + lam) - parent
            ) - gamma
            gains = np.where(distinct, gains, -np.inf)
            pos = int(np.argmax(gains))
            if gains[pos] > 0 and (best is None or gains[pos] > best.gain):
                threshold = 0.5 * (values[pos] + values[pos + 1])
                best = _Split(float(gains[pos]), int(f), float(threshold))
        return best

    def grow(self, in_node: np.ndarray, depth: int) -> int:
        node = self._new_node()
        g_total = float(np.sum(self.g[in_node]))
        h_total = float(np.sum(self.h[in_node]))
        split = None
        if depth < self.params.max_depth and np.count_nonzero(in_node) > 1:
            split = self._best_split(in_node, g_total, h_total)
        if split is None:
            self.value[node] = -g_total / (h_total + self.params.reg_lambda)
            return node
        goes_left = self.x[:, split.feature] < split.threshold
        self.feature[node] = split.feature
        self.threshold[node] = split.threshold
        self.left[node] = self.grow(in_node & goes_left, depth + 1)
        self.right[node] = self.grow(in_node & ~goes_left, depth + 1)
        return node

    def tree(self) -> RegressionTree:
        return RegressionTree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=np.float64),
        )


def fit(trainset: RankTrainSet, params: Optional[RankerParams] = None) -> GBDTModel:
    params = params or RankerParams()
    x = np.asarray(trainset.features, dtype=np.float64)
    y = np.asarray(trainset.labels, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise DimensionMismatch(f"features {x.shape} do not align with {y.size} labels")
    if not np.all(np.isfinite(x)):
        raise NonFiniteData("ranker features contain NaN or Inf")
    if y.size < 2 or np.unique(y).size < 2:
        raise SingleClassError("ranker trainset needs both labels 0 and 1")

    n, d = x.shape
    positive_rate = float(np.mean(y))
    base_score = math.log(positive_rate / (1.0 - positive_rate))
    presorted = [np.argsort(x[:, f], kind="stable") for f in range(d)]
    n_columns = min(d, max(1, math.ceil(params.colsample_bytree * d)))
    rng = SplitMix64(params.seed)
    everyone = np.ones(n, dtype=bool)

    margin = np.full(n, base_score)
    losses = [logistic_loss(y, margin)]
    trees = []
    for round_index in range(params.n_estimators):
        p = sigmoid(margin)
        grad = p - y
        hess = p * (1.0 - p)
        columns = np.sort(rng.permutation(d)[:n_columns])
        builder = _TreeBuilder(x, grad, hess, columns, params, presorted)
        builder.grow(everyone, 0)
        tree = builder.tree()
        trees.append(tree)
        margin = margin + params.learning_rate * tree.predict(x)
        losses.append(logistic_loss(y, margin))
        logger.debug("round %d: %d leaves, loss %.6f", round_index, tree.num_leaves, losses[-1])

    logger.info("fitted %d trees on %d rows x %d features", len(trees), n, d)
    return GBDTModel(
        trees=trees,
        learning_rate=params.learning_rate,
        base_score=base_score,
        n_features=d,
        params=params.model_dump(),
        loss_history=losses,
    )


def margins(model: GBDTModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise DimensionMismatch(
            f"features {x.shape} do not match the model's {model.n_features} columns"
        )
    margin = np.full(x.shape[0], model.base_score)
    for tree in model.trees:
        margin = margin + model.learning_rate * tree.predict(x)
    return margin


def score(model: GBDTModel, features) -> np.ndarray:
    """Probability that each row is fault-revealing"""
    return sigmoid(margins(model, features))


def prioritize(scores, flags=None) -> RankedList:
    """Descending score; equal scores keep ascending original index"""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if np.any(np.isnan(scores)):
        raise NonFiniteData("cannot prioritize NaN scores")
    order = np.argsort(-scores, kind="stable")
    return RankedList(
        order=order,
        scores=scores,
        flags=None if flags is None else np.asarray(flags, dtype=np.int64),
    )


# ------------------- persistence -------------------
def ranker_to_dict(model: GBDTModel) -> dict:
    return {
        "version": RANKER_VERSION,
        "params": model.params,
        "learning_rate": model.learning_rate,
        "base_score": model.base_score,
        "n_features": model.n_features,
        "trees": [tree.to_dict() for tree in model.trees],
        "loss_history": model.loss_history,
    }


def ranker_from_dict(payload: dict) -> GBDTModel:
    if payload.get("version") != RANKER_VERSION:
        raise UnsupportedVersion(payload.get("version"))
    try:
        return GBDTModel(
            trees=[RegressionTree.from_dict(t) for t in payload["trees"]],
            learning_rate=float(payload["learning_rate"]),
            base_score=float(payload["base_score"]),
            n_features=int(payload["n_features"]),
            params=dict(payload.get("params", {})),
            loss_history=list(payload.get("loss_history", [])),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"malformed ranker: {e}") from e


def save_ranker(model: GBDTModel, path):
    Path(path).write_text(json.dumps(ranker_to_dict(model), sort_keys=True, indent=1) + "\n")


def load_ranker(path) -> GBDTModel:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}: corrupted ranker JSON: {e}") from e
    return ranker_from_dict(payload)
