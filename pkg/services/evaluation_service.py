"""Fault labeling, RAUC and feature distance analysis"""

import logging
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
import pandas as pd

from models.network import LayerWeights, ModelSpec
from models.tensor import LabeledDataset
from services.nn_engine_service import InferenceEngine
from src.config import Config
from src.errors import CountMismatch, DimensionMismatch, EmptyClassError, UndefinedRAUC
from utils.number_format import NumberFormatter
from utils.rng import SplitMix64

logger = logging.getLogger(__name__)

Cutoff = Optional[int]


# ------------------- fault labels -------------------
def label_faults_from_probs(probs, labels) -> np.ndarray:
    """1 where argmax (lowest class on ties) differs from ground truth"""
    probs = np.asarray(probs)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if probs.ndim != 2 or probs.shape[0] != labels.size:
        raise CountMismatch(f"{probs.shape[0]} predictions but {labels.size} labels")
    return (np.argmax(probs, axis=1) != labels).astype(np.uint8)


def label_faults(
    spec: ModelSpec,
    weights: LayerWeights,
    dataset: LabeledDataset,
    engine: Optional[InferenceEngine] = None,
) -> np.ndarray:
    engine = engine or InferenceEngine(spec, weights)
    probs, _ = engine.run(dataset.array(), stage="label")
    flags = label_faults_from_probs(probs, dataset.labels)
    logger.info("%d of %d cases are fault-revealing", int(flags.sum()), flags.size)
    return flags


# ------------------- RAUC -------------------
def parse_cutoffs(text: str) -> Tuple[Cutoff, ...]:
    """'100,500,all' -> (100, 500, None)"""
    cutoffs = []
    for part in text.split(","):
        part = part.strip().lower()
        if not part:
            continue
        if part == "all":
            cutoffs.append(None)
        elif part.isdigit() and int(part) >= 1:
            cutoffs.append(int(part))
        else:
            raise ValueError(f"cutoff must be a positive integer or 'all', got {part!r}")
    if not cutoffs:
        raise ValueError("at least one cutoff is required")
    return tuple(cutoffs)


def cutoff_label(cutoff: Cutoff) -> str:
    return "rauc_all" if cutoff is None else f"rauc_{cutoff}"


def _check_order(order, flags) -> Tuple[np.ndarray, np.ndarray]:
    order = np.asarray(order, dtype=np.int64).reshape(-1)
    flags = np.asarray(flags, dtype=np.int64).reshape(-1)
    if order.size != flags.size or not np.array_equal(np.sort(order), np.arange(flags.size)):
        raise CountMismatch(f"order is not a permutation of {flags.size} cases")
    if np.any((flags != 0) & (flags != 1)):
        raise CountMismatch("flags must be 0 or 1")
    return order, flags


def rauc(order, flags, n: Cutoff = None) -> float:
    """Area under the faults-found curve over the first n cases, relative to the ideal order.

    The area is a step sum: cum(k) counts flagged cases among the first k.
    """
    order, flags = _check_order(order, flags)
    total = int(flags.sum())
    if total == 0:
        raise UndefinedRAUC("no fault-revealing case, RAUC is undefined")
    if n is not None and n < 1:
        raise ValueError("cutoff must be >= 1")
    m = flags.size if n is None else min(n, flags.size)
    found = np.cumsum(flags[order][:m])
    ideal = np.minimum(np.arange(1, m + 1), total)
    return int(found.sum()) / int(ideal.sum())


def rauc_table(order, flags, cutoffs: Iterable[Cutoff] = Config.RAUC_CUTOFFS) -> Dict[str, float]:
    return {cutoff_label(c): rauc(order, flags, c) for c in cutoffs}


def random_rauc_mean(flags, n: Cutoff = None, shuffles: int = 1000, seed: int = Config.DEFAULT_SEED) -> float:
    """Mean RAUC over seeded uniformly random orderings"""
    flags = np.asarray(flags, dtype=np.int64).reshape(-1)
    rng = SplitMix64(seed)
    values = [rauc(rng.permutation(flags.size), flags, n) for _ in range(shuffles)]
    return float(np.mean(values))


def rauc_by_type(order, flags, types, n: Cutoff = None) -> Dict[int, float]:
    """RAUC of the sub-ranking of clean cases plus each manipulation type"""
    order, flags = _check_order(order, flags)
    types = np.asarray(types, dtype=np.int64).reshape(-1)
    table = {}
    for t in np.unique(types):
        if t == 0:
            continue
        keep = (types == 0) | (types == t)
        sub_order = order[keep[order]]
        if not np.any(flags[sub_order]):
            logger.warning("type %d has no fault-revealing case, skipped", int(t))
            continue
        remap = np.full(flags.size, -1, dtype=np.int64)
        remap[np.nonzero(keep)[0]] = np.arange(int(keep.sum()))
        table[int(t)] = rauc(remap[sub_order], flags[keep], n)
    return table


# ------------------- distances -------------------
def _pairwise(a: np.ndarray, b: np.ndarray, chunk_size: int = 256) -> np.ndarray:
    rows = []
    for start in range(0, a.shape[0], chunk_size):
        diffs = a[start : start + chunk_size, None, :] - b[None, :, :]
        rows.append(np.sqrt(np.sum(diffs * diffs, axis=2)))
    return np.concatenate(rows) if rows else np.zeros((0, b.shape[0]))


def distance_matrix(features, type_labels) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(types, mean distance matrix, singleton mask); the diagonal is intra-type"""
    features = np.asarray(features, dtype=np.float64)
    type_labels = np.asarray(type_labels).reshape(-1)
    if features.ndim != 2 or features.shape[0] != type_labels.size:
        raise DimensionMismatch(f"features {features.shape} vs {type_labels.size} type labels")
    types = np.unique(type_labels)
    if types.size < 2:
        raise EmptyClassError("distance report needs at least two types")
    groups = [features[type_labels == t] for t in types]
    matrix = np.zeros((types.size, types.size))
    singleton = np.array([g.shape[0] < 2 for g in groups])
    for a, ga in enumerate(groups):
        for b in range(a, types.size):
            dists = _pairwise(ga, groups[b])
            if a == b:
                pairs = ga.shape[0] * (ga.shape[0] - 1)
                matrix[a, a] = dists.sum() / pairs if pairs else 0.0
            else:
                matrix[a, b] = matrix[b, a] = dists.mean()
    return types, matrix, singleton


def distance_report(features, type_labels) -> pd.DataFrame:
    """Mean pairwise Euclidean distance within (diagonal) and between types"""
    types, matrix, singleton = distance_matrix(features, type_labels)
    if np.any(singleton):
        logger.warning("singleton types %s: intra distance reported as 0", types[singleton].tolist())
    frame = pd.DataFrame({"type": [str(t) for t in types]})
    for j, t in enumerate(types):
        frame[str(t)] = NumberFormatter.format_row(matrix[:, j])
    frame["singleton"] = singleton.astype(np.int64)
    return frame


def write_distance_report(path, features, type_labels):
    distance_report(features, type_labels).to_csv(path, index=False, lineterminator="\n")
