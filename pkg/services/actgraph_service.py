"""Activation graph construction and center node features"""

import logging
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from models.graph import ActivationGraph, ActivationTrace, GraphSkeleton
from models.network import ActivationCapture, LayerWeights, ModelSpec
from src.config import Config
from src.errors import DimensionMismatch, ModelSpecError
from utils.number_format import NumberFormatter
from workers.chunk_worker import ChunkWorker

logger = logging.getLogger(__name__)


def min_max(values: np.ndarray, axis=None) -> np.ndarray:
    """Scale to [0, 1]; a constant slice maps to all zeros"""
    values = np.asarray(values, dtype=np.float64)
    low = values.min(axis=axis, keepdims=True)
    high = values.max(axis=axis, keepdims=True)
    span = high - low
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (values - low) / safe, 0.0)


def _check_depth(available: int, k: int):
    if k < 2:
        raise ModelSpecError(f"K must be at least 2, got {k}")
    if k > available:
        raise ModelSpecError(f"K={k} exceeds the {available} trainable layers")


def _averaged_block(source, target, kernel: np.ndarray) -> np.ndarray:
    """Mean inter-neuron weight between every source and target neuron"""
    kernel = np.asarray(kernel, dtype=np.float64)
    if target.kind == "dense":
        if source.kind == "dense":
            return kernel
        # conv -> dense: average each filter's block of flattened positions
        channels = source.neurons
        if kernel.shape[0] % channels:
            raise ModelSpecError("dense input width is not a multiple of the source filters")
        return kernel.reshape(-1, channels, kernel.shape[1]).mean(axis=0)
    if target.kind == "conv2d" and source.kind == "conv2d":
        return kernel.mean(axis=(0, 1))
    raise ModelSpecError(f"no graph edge rule for {source.kind} -> {target.kind}")


def build_skeleton(spec: ModelSpec, weights: LayerWeights, k: int = Config.DEFAULT_K) -> GraphSkeleton:
    layers = spec.trainable_layers
    _check_depth(len(layers), k)
    weights.check(spec)
    suffix = layers[-k:]
    params = weights.params[-k:]
    blocks = []
    for source, target, p in zip(suffix[:-1], suffix[1:], params[1:]):
        averaged = _averaged_block(source, target, p.kernel)
        blocks.append(min_max(averaged))
    return GraphSkeleton(layer_sizes=[layer.neurons for layer in suffix], w_blocks=blocks)


def trace_activations(capture: ActivationCapture, k: int = Config.DEFAULT_K) -> ActivationTrace:
    if len(capture) == 0:
        raise ModelSpecError("activation capture is empty")
    _check_depth(len(capture), k)
    phi = []
    for layer in capture.layers[-k:]:
        layer = np.asarray(layer, dtype=np.float64)
        if layer.ndim == 4:
            layer = layer.mean(axis=(1, 2))
        elif layer.ndim != 2:
            raise DimensionMismatch(f"unsupported capture rank {layer.ndim}")
        phi.append(min_max(layer, axis=1))
    return ActivationTrace(phi)


def _aggregate(a_block: np.ndarray, nf_prev: np.ndarray, aggregation: str) -> np.ndarray:
    messages = a_block * nf_prev[:, :, None]
    if aggregation == "sum":
        return messages.sum(axis=1)
    if aggregation == "max":
        return messages.max(axis=1)
    if aggregation == "mean":
        return messages.mean(axis=1)
    raise ValueError(f"unknown aggregation {aggregation!r}")


def build_graph(
    skeleton: GraphSkeleton,
    trace: ActivationTrace,
    aggregation: str = Config.DEFAULT_AGGREGATION,
) -> ActivationGraph:
    sizes = [int(p.shape[1]) for p in trace.phi]
    if sizes != list(skeleton.layer_sizes):
        raise DimensionMismatch(f"trace sizes {sizes} != skeleton sizes {skeleton.layer_sizes}")
    n = trace.num_cases
    a_blocks = []
    nf = [np.zeros((n, skeleton.layer_sizes[0]))]
    cnf = [np.zeros((n, skeleton.layer_sizes[0]))]
    for l, w in enumerate(skeleton.w_blocks):
        a = w[None, :, :] * trace.phi[l + 1][:, None, :]
        a_blocks.append(a)
        nf.append(a.sum(axis=1))
        cnf.append(_aggregate(a, nf[l], aggregation))
    return ActivationGraph(skeleton=skeleton, a_blocks=a_blocks, nf=nf, cnf=cnf)


def _check_cnf_layers(k: int, cnf_layers: int):
    if not 1 <= cnf_layers <= k:
        raise ModelSpecError(f"cnf_layers must be within 1..{k}, got {cnf_layers}")


def graph_features(graph: ActivationGraph, cnf_layers: int = Config.DEFAULT_CNF_LAYERS) -> np.ndarray:
    _check_cnf_layers(len(graph.cnf), cnf_layers)
    return np.concatenate(graph.cnf[-cnf_layers:], axis=1)


class FeatureExtractor:
    """Holds the per-model skeleton and turns captures into cnf features"""

    def __init__(
        self,
        spec: ModelSpec,
        weights: LayerWeights,
        k: int = Config.DEFAULT_K,
        cnf_layers: int = Config.DEFAULT_CNF_LAYERS,
        aggregation: str = Config.DEFAULT_AGGREGATION,
        worker: Optional[ChunkWorker] = None,
    ):
        if aggregation not in Config.AGGREGATIONS:
            raise ValueError(f"unknown aggregation {aggregation!r}")
        _check_cnf_layers(k, cnf_layers)
        self.k = k
        self.cnf_layers = cnf_layers
        self.aggregation = aggregation
        self.skeleton = build_skeleton(spec, weights, k)
        self.worker = worker or ChunkWorker()

    @property
    def feature_dim(self) -> int:
        return int(sum(self.skeleton.layer_sizes[-self.cnf_layers :]))

    def graph(self, capture: ActivationCapture) -> ActivationGraph:
        return build_graph(self.skeleton, trace_activations(capture, self.k), self.aggregation)

    def transform(self, capture: ActivationCapture) -> np.ndarray:
        def chunk(start: int, stop: int) -> np.ndarray:
            return graph_features(self.graph(capture.slice(start, stop)), self.cnf_layers)

        parts = self.worker.map(chunk, capture.num_cases)
        if not parts:
            return np.zeros((0, self.feature_dim))
        features = np.concatenate(parts, axis=0)
        logger.info("extracted %s cnf features", features.shape)
        return features


def extract_features(
    spec: ModelSpec,
    weights: LayerWeights,
    capture: ActivationCapture,
    k: int = Config.DEFAULT_K,
    cnf_layers: int = Config.DEFAULT_CNF_LAYERS,
    aggregation: str = Config.DEFAULT_AGGREGATION,
) -> np.ndarray:
    """cnf of the last `cnf_layers` graph layers, one row per captured case"""
    return FeatureExtractor(spec, weights, k, cnf_layers, aggregation).transform(capture)


# ------------------- diagnostics -------------------
def _node_id(layer: int, index: int) -> str:
    return f"L{layer}_N{index}"


def graph_edges(graph: ActivationGraph, threshold: float = Config.EXPORT_THRESHOLD, case: int = 0) -> pd.DataFrame:
    rows = []
    for l, a in enumerate(graph.a_blocks):
        block = a[case]
        sources, targets = np.nonzero((block >= threshold) & (block > 0))
        for j, i in zip(sources, targets):
            rows.append((_node_id(l, int(j)), _node_id(l + 1, int(i)), block[j, i]))
    frame = pd.DataFrame(rows, columns=["source", "target", "weight"])
    frame["weight"] = [NumberFormatter.format_float(v) for v in frame["weight"]]
    return frame


def export_graph(
    graph: ActivationGraph,
    threshold: float = Config.EXPORT_THRESHOLD,
    case: int = 0,
) -> Tuple[str, str]:
    """DOT rendering and CSV edge list of one case's thresholded graph"""
    edges = graph_edges(graph, threshold, case)
    lines = ["digraph activation_graph {", "  rankdir=LR;"]
    for l, values in enumerate(graph.nf):
        for i, value in enumerate(values[case]):
            nf = NumberFormatter.format_float(value)
            lines.append(f'  {_node_id(l, i)} [label="{_node_id(l, i)}\\nnf={nf}", nf={nf}];')
    for source, target, weight in edges.itertuples(index=False):
        lines.append(f'  {source} -> {target} [weight={weight}, label="{weight}"];')
    lines.append("}")
    dot = "\n".join(lines) + "\n"
    csv = edges.to_csv(index=False, lineterminator="\n")
    return dot, csv

