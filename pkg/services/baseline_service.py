"""
Reference prioritization scorers: DeepGini, MCP, DSA and Act features
"""

import logging
from collections import defaultdict
from typing import Dict, List, Tuple

import numpy as np

from models.embedding import EmbeddingStore
from models.network import ActivationCapture
from models.ranking import RankedList
from src.errors import DimensionMismatch, MalformedProbabilities, UnknownClassError

logger = logging.getLogger(__name__)

PROBABILITY_TOLERANCE = 1e-5


def check_probabilities(probs, min_classes: int = 1) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise MalformedProbabilities(f"expected an [n, C] matrix, got shape {probs.shape}")
    if probs.shape[1] < min_classes:
        raise MalformedProbabilities(f"need at least {min_classes} classes, got {probs.shape[1]}")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise MalformedProbabilities("probabilities must be finite and non-negative")
    bad = np.nonzero(np.abs(probs.sum(axis=1) - 1.0) > PROBABILITY_TOLERANCE)[0]
    if bad.size:
        raise MalformedProbabilities(f"row {int(bad[0])} does not sum to 1")
    return probs


# ------------------- DeepGini -------------------
def deepgini_scores(probs) -> np.ndarray:
    """Gini impurity 1 - sum(p^2); higher means less confident"""
    probs = check_probabilities(probs)
    return 1.0 - np.sum(probs * probs, axis=1)


# ------------------- MCP -------------------
def _top_two(probs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    ranked = np.argsort(-probs, axis=1, kind="stable")
    return ranked[:, 0], ranked[:, 1]


def boundary_clusters(probs) -> Dict[Tuple[int, int], List[int]]:
    """(top1, top2) cluster -> case indices, highest top2/top1 ratio first"""
    probs = check_probabilities(probs, min_classes=2)
    top1, top2 = _top_two(probs)
    rows = np.arange(probs.shape[0])
    ratio = probs[rows, top2] / probs[rows, top1]
    clusters = defaultdict(list)
    for i in rows:
        clusters[(int(top1[i]), int(top2[i]))].append(int(i))
    for key, members in clusters.items():
        members.sort(key=lambda i: (-ratio[i], i))
    return dict(sorted(clusters.items()))


def mcp_prioritize(probs) -> RankedList:
    """Round-robin over boundary clusters until every case is placed"""
    clusters = list(boundary_clusters(probs).values())
    order: List[int] = []
    depth = 0
    while clusters:
        clusters = [members for members in clusters if depth < len(members)]
        order.extend(members[depth] for members in clusters)
        depth += 1
    order = np.asarray(order, dtype=np.int64)
    n = order.size
    scores = np.empty(n, dtype=np.float64)
    # positions folded back into scores so a descending sort reproduces the order
    scores[order] = 1.0 - np.arange(n) / max(n, 1)
    return RankedList(order=order, scores=scores)


def mcp_select(probs, budget: int) -> np.ndarray:
    """The first `budget` cases MCP would hand to a tester"""
    if budget < 0:
        raise ValueError("budget must be >= 0")
    return mcp_prioritize(probs).head(budget)


# ------------------- DSA -------------------
def dsa_scores(test_embeddings, predicted_classes, store: EmbeddingStore, chunk_size: int = 256) -> np.ndarray:
    """Distance-based surprise: dist(e, x_a) / dist(x_a, nearest other class)"""
    e = np.asarray(test_embeddings, dtype=np.float64)
    predicted = np.asarray(predicted_classes, dtype=np.int64).reshape(-1)
    if e.ndim != 2 or e.shape[1] != store.dim:
        raise DimensionMismatch(f"test embeddings {e.shape} vs store dimension {store.dim}")
    if e.shape[0] != predicted.size:
        raise DimensionMismatch(f"{e.shape[0]} embeddings but {predicted.size} predictions")
    missing = np.setdiff1d(np.unique(predicted), store.classes)
    if missing.size:
        raise UnknownClassError(f"predicted class {int(missing[0])} has no training embeddings")

    scores = np.empty(predicted.size, dtype=np.float64)
    for label in np.unique(predicted):
        members = store.of_class(int(label))
        train = store.train_embeddings[members]
        cases = np.nonzero(predicted == label)[0]
        for start in range(0, cases.size, chunk_size):
            rows = cases[start : start + chunk_size]
            diffs = e[rows, None, :] - train[None, :, :]
            dists = np.sqrt(np.sum(diffs * diffs, axis=2))
            nearest = np.argmin(dists, axis=1)
            dist_a = dists[np.arange(rows.size), nearest]
            dist_b = store.reference_distance[members[nearest]]
            with np.errstate(divide="ignore", invalid="ignore"):
                scores[rows] = np.where(dist_b > 0, dist_a / np.where(dist_b > 0, dist_b, 1.0), np.inf)
    if np.any(np.isinf(scores)):
        logger.warning("%d DSA scores hit a zero reference distance", int(np.sum(np.isinf(scores))))
    return scores


# ------------------- Act -------------------
def last_hidden(capture: ActivationCapture) -> np.ndarray:
    """Activations of the trainable layer just before the classifier, flattened"""
    if len(capture) < 2:
        raise DimensionMismatch("model has no hidden trainable layer")
    layer = capture.layers[-2]
    return layer.reshape(layer.shape[0], -1).astype(np.float64)


def act_features(probs, hidden) -> np.ndarray:
    """Confidence vector followed by the last hidden activations"""
    probs = np.asarray(probs, dtype=np.float64)
    hidden = np.asarray(hidden, dtype=np.float64)
    if probs.ndim != hidden.ndim or probs.shape[:-1] != hidden.shape[:-1]:
        raise DimensionMismatch(f"probs {probs.shape} and hidden {hidden.shape} do not align")
    return np.concatenate([probs, hidden], axis=-1)


def act_features_from_capture(probs, capture: ActivationCapture) -> np.ndarray:
    return act_features(probs, last_hidden(capture))
