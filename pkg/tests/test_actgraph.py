import time

import numpy as np
import pytest

from data.architectures import lenet5_spec
from models.graph import ActivationTrace, GraphSkeleton
from models.network import (
    ActivationCapture,
    Conv2D,
    Dense,
    Flatten,
    LayerParams,
    LayerWeights,
    ModelSpec,
    ReLU,
    Softmax,
)
from services.actgraph_service import (
    FeatureExtractor,
    build_graph,
    build_skeleton,
    export_graph,
    extract_features,
    graph_edges,
    min_max,
    trace_activations,
)
from services.nn_engine_service import forward_batch, init_weights
from src.errors import DimensionMismatch, ModelSpecError
from tests.conftest import dense_spec, random_weights
from utils.rng import SplitMix64
from workers.chunk_worker import ChunkWorker


def _chain_graph(aggregation="sum"):
    skeleton = GraphSkeleton(
        layer_sizes=[2, 2, 2],
        w_blocks=[np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[1.0, 1.0], [0.0, 0.0]])],
    )
    trace = ActivationTrace([np.array([[0.0, 1.0]]), np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])])
    return build_graph(skeleton, trace, aggregation)


def _chain_model():
    """Dense 2-2-2 network whose normalized graph is the hand-built chain"""
    spec = dense_spec([2, 2, 2, 2])
    weights = LayerWeights(
        [
            LayerParams(np.eye(2), np.zeros(2)),
            LayerParams(np.eye(2), np.array([2.0, 0.0])),
            LayerParams(np.array([[1.0, 1.0], [0.0, 0.0]]), np.array([0.0, 1.0])),
        ]
    )
    return spec, weights


def _oracle_min_max(v):
    lo, hi = v.min(), v.max()
    return np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)


def _oracle_cnf(weights: LayerWeights, capture: ActivationCapture, k: int):
    """Direct evaluation: A = W * phi(target), nf = column sums, cnf = nf-weighted column sums"""
    phi = [_oracle_min_max(layer[0].astype(np.float64)) for layer in capture.layers[-k:]]
    w = [_oracle_min_max(p.kernel.astype(np.float64)) for p in weights.params[-k + 1 :]]
    nf = [np.zeros_like(phi[0])]
    cnf = [np.zeros_like(phi[0])]
    adjacency = []
    for l, block in enumerate(w):
        a = block * phi[l + 1][None, :]
        adjacency.append(a)
        cnf.append(a.T @ nf[l])
        nf.append(a.sum(axis=0))
    return phi, w, adjacency, nf, cnf


class TestMinMax:
    def test_layer_vector(self):
        assert min_max(np.array([2.0, 4.0, 6.0])).tolist() == [0.0, 0.5, 1.0]

    def test_constant_maps_to_zeros(self):
        assert min_max(np.array([5.0, 5.0])).tolist() == [0.0, 0.0]

    def test_rowwise(self):
        out = min_max(np.array([[1.0, 3.0], [7.0, 7.0]]), axis=1)
        assert out.tolist() == [[0.0, 1.0], [0.0, 0.0]]


class TestSkeleton:
    def test_dense_block_is_normalized(self):
        spec = dense_spec([2, 2, 2])
        weights = LayerWeights(
            [
                LayerParams(np.ones((2, 2)), np.zeros(2)),
                LayerParams(np.array([[2.0, 0.0], [0.0, 2.0]]), np.zeros(2)),
            ]
        )
        skeleton = build_skeleton(spec, weights, k=2)
        assert skeleton.layer_sizes == [2, 2]
        assert skeleton.w_blocks[0].tolist() == [[1.0, 0.0], [0.0, 1.0]]

    def test_constant_block_is_all_zeros(self):
        spec = dense_spec([2, 2, 2])
        weights = LayerWeights(
            [LayerParams(np.ones((2, 2)), np.zeros(2)), LayerParams(np.full((2, 2), 3.0), np.zeros(2))]
        )
        assert build_skeleton(spec, weights, k=2).w_blocks[0].tolist() == [[0.0, 0.0], [0.0, 0.0]]

    def test_conv_kernel_slices_are_averaged(self):
        spec = ModelSpec(
            input_shape=(4, 4, 1),
            layers=[
                Conv2D(1, 2, 2, 2),
                ReLU(),
                Conv2D(2, 2, 2, 2),
                ReLU(),
                Flatten(),
                Dense(8, 2),
                Softmax(),
            ],
            num_classes=2,
        )
        kernel = np.zeros((2, 2, 2, 2))
        kernel[:, :, 0, 0] = 1.0
        kernel[:, :, 1, 1] = [[0.0, 1.0], [1.0, 0.0]]
        weights = LayerWeights(
            [
                LayerParams(np.ones((2, 2, 1, 2)), np.zeros(2)),
                LayerParams(kernel, np.zeros(2)),
                LayerParams(np.ones((8, 2)), np.zeros(2)),
            ]
        )
        skeleton = build_skeleton(spec, weights, k=3)
        assert skeleton.w_blocks[0].tolist() == [[1.0, 0.0], [0.0, 0.5]]
        assert skeleton.layer_sizes == [2, 2, 2]

    def test_conv_to_dense_averages_each_filter_block(self):
        spec = ModelSpec(
            input_shape=(2, 2, 1),
            layers=[Conv2D(1, 2, 1, 1), ReLU(), Flatten(), Dense(8, 2), Softmax()],
            num_classes=2,
        )
        # flattened rows interleave filters: positions (0,0,f0), (0,0,f1), ...
        dense = np.zeros((8, 2))
        dense[0::2, 0] = 4.0
        dense[1::2, 1] = [0.0, 2.0, 2.0, 0.0]
        weights = LayerWeights([LayerParams(np.ones((1, 1, 1, 2)), np.zeros(2)), LayerParams(dense, np.zeros(2))])
        skeleton = build_skeleton(spec, weights, k=2)
        assert skeleton.w_blocks[0].tolist() == [[1.0, 0.0], [0.0, 0.25]]

    def test_k_bounds(self, small_mlp):
        spec, weights = small_mlp
        with pytest.raises(ModelSpecError):
            build_skeleton(spec, weights, k=5)
        with pytest.raises(ModelSpecError):
            build_skeleton(spec, weights, k=1)


class TestTrace:
    def test_conv_maps_are_averaged_then_normalized(self):
        conv = np.zeros((1, 2, 2, 3))
        conv[0, :, :, 0] = [[1.0, 2.0], [3.0, 4.0]]
        conv[0, :, :, 2] = 5.0
        dense = np.array([[2.0, 4.0, 6.0]])
        trace = trace_activations(ActivationCapture([conv, dense]), k=2)
        assert trace.phi[0].tolist() == [[0.5, 0.0, 1.0]]
        assert trace.phi[1].tolist() == [[0.0, 0.5, 1.0]]

    def test_constant_layer(self):
        trace = trace_activations(ActivationCapture([np.array([[5.0, 5.0]]), np.array([[1.0, 2.0]])]), k=2)
        assert trace.phi[0].tolist() == [[0.0, 0.0]]

    def test_empty_capture(self):
        with pytest.raises(ModelSpecError):
            trace_activations(ActivationCapture([]), k=2)

    def test_scale_invariance(self, small_mlp):
        spec, weights = small_mlp
        _, capture = forward_batch(spec, weights, SplitMix64(1).normal(20).reshape(5, 4))
        scaled = ActivationCapture([layer * 3.7 for layer in capture.layers])
        base = trace_activations(capture, k=4)
        other = trace_activations(scaled, k=4)
        for a, b in zip(base.phi, other.phi):
            assert np.max(np.abs(a - b)) <= 1e-12


class TestGraph:
    def test_adjacency_is_weight_times_target_activation(self):
        skeleton = GraphSkeleton(layer_sizes=[1, 1], w_blocks=[np.array([[0.3]])])
        graph = build_graph(skeleton, ActivationTrace([np.array([[0.9]]), np.array([[0.5]])]))
        assert graph.a_blocks[0][0, 0, 0] == 0.3 * 0.5

    def test_node_feature_is_weighted_in_degree(self):
        skeleton = GraphSkeleton(layer_sizes=[3, 1], w_blocks=[np.array([[0.1], [0.2], [0.3]])])
        graph = build_graph(skeleton, ActivationTrace([np.array([[1.0, 1.0, 1.0]]), np.array([[1.0]])]))
        assert graph.nf[1][0, 0] == pytest.approx(0.6, abs=1e-12)
        assert graph.nf[0].tolist() == [[0.0, 0.0, 0.0]]

    def test_chain_oracle(self):
        graph = _chain_graph()
        assert graph.nf[1].tolist() == [[1.0, 0.0]]
        assert graph.nf[2].tolist() == [[0.0, 1.0]]
        assert graph.cnf[0].tolist() == [[0.0, 0.0]]
        assert graph.cnf[1].tolist() == [[0.0, 0.0]]
        assert graph.cnf[2].tolist() == [[0.0, 1.0]]

    def test_aggregation_variants(self):
        assert _chain_graph("max").cnf[2].tolist() == [[0.0, 1.0]]
        assert _chain_graph("mean").cnf[2].tolist() == [[0.0, 0.5]]

    def test_size_mismatch(self):
        skeleton = GraphSkeleton(layer_sizes=[2, 1], w_blocks=[np.ones((2, 1))])
        with pytest.raises(DimensionMismatch):
            build_graph(skeleton, ActivationTrace([np.zeros((1, 3)), np.zeros((1, 1))]))


class TestFeatures:
    def test_chain_model_features(self):
        spec, weights = _chain_model()
        _, capture = forward_batch(spec, weights, np.array([[0.0, 1.0]]))
        features = extract_features(spec, weights, capture, k=3, cnf_layers=2)
        assert features.shape == (1, 4)
        assert np.allclose(features, [[0.0, 0.0, 0.0, 1.0]], atol=1e-12)

    def test_lenet5_feature_length(self):
        spec = lenet5_spec(10)
        weights = init_weights(spec, SplitMix64(3))
        x = SplitMix64(4).uniform(0.0, 1.0, 3 * 28 * 28).reshape(3, 28, 28, 1)
        _, capture = forward_batch(spec, weights, x)
        features = extract_features(spec, weights, capture, k=4)
        assert features.shape == (3, 94)

    def test_zero_weight_network(self):
        spec = dense_spec([3, 4, 4, 4, 2])
        zeros = LayerWeights(
            [LayerParams(np.zeros(layer.kernel_shape()), np.zeros(layer.neurons)) for layer in spec.trainable_layers]
        )
        _, capture = forward_batch(spec, zeros, SplitMix64(5).normal(12).reshape(4, 3))
        assert not extract_features(spec, zeros, capture, k=4).any()

    def test_is_pure(self, small_mlp):
        spec, weights = small_mlp
        _, capture = forward_batch(spec, weights, SplitMix64(6).normal(40).reshape(10, 4))
        a = extract_features(spec, weights, capture, k=4)
        b = extract_features(spec, weights, capture, k=4)
        assert a.tobytes() == b.tobytes()

    def test_chunking_does_not_change_features(self, small_mlp):
        spec, weights = small_mlp
        _, capture = forward_batch(spec, weights, SplitMix64(7).normal(40).reshape(10, 4))
        whole = FeatureExtractor(spec, weights, k=4).transform(capture)
        chunked = FeatureExtractor(spec, weights, k=4, worker=ChunkWorker(3, 3)).transform(capture)
        assert whole.tobytes() == chunked.tobytes()

    def test_bad_settings(self, small_mlp):
        spec, weights = small_mlp
        with pytest.raises(ValueError):
            FeatureExtractor(spec, weights, aggregation="median")
        with pytest.raises(ModelSpecError):
            FeatureExtractor(spec, weights, k=3, cnf_layers=4)

    def test_matches_closed_form_on_random_networks(self):
        elapsed = 0.0
        for seed in range(100):
            rng = SplitMix64(seed)
            depth = 3 + int(rng.integers(2, 1)[0])
            widths = [int(w) for w in 2 + rng.integers(7, depth + 1)]
            spec = dense_spec(widths)
            weights = random_weights(spec, seed=seed + 1000)
            started = time.perf_counter()
            _, capture = forward_batch(spec, weights, rng.normal(widths[0]).reshape(1, -1))
            extractor = FeatureExtractor(spec, weights, k=depth, cnf_layers=depth)
            graph = extractor.graph(capture)
            elapsed += time.perf_counter() - started

            phi, w, adjacency, nf, cnf = _oracle_cnf(weights, capture, depth)
            for l in range(depth):
                assert np.max(np.abs(graph.cnf[l][0] - cnf[l]), initial=0.0) <= 1e-9
                assert np.max(np.abs(graph.nf[l][0] - nf[l]), initial=0.0) <= 1e-9
            for l, a in enumerate(adjacency):
                assert np.all((w[l] >= 0) & (w[l] <= 1))
                assert np.all((a >= 0) & (a <= 1))
                assert np.all(graph.nf[l + 1] <= widths[l + 1] + 1e-12)
            assert all(np.all((p >= 0) & (p <= 1)) for p in phi)
        assert elapsed < 5.0

    def test_two_layer_graph_has_no_center_features(self):
        for seed in range(20):
            spec = dense_spec([3, 5, 4])
            weights = random_weights(spec, seed=seed)
            _, capture = forward_batch(spec, weights, SplitMix64(seed).normal(12).reshape(4, 3))
            assert not extract_features(spec, weights, capture, k=2, cnf_layers=1).any()

    def test_three_layers_are_enough_for_center_features(self):
        for seed in range(100):
            rng = SplitMix64(seed)
            widths = [int(w) for w in 3 + rng.integers(6, 4)]
            spec = dense_spec(widths)
            weights = random_weights(spec, seed=seed + 500, low=0.1, high=1.0)
            x = rng.uniform(0.1, 1.0, widths[0]).reshape(1, -1)
            _, capture = forward_batch(spec, weights, x)
            features = extract_features(spec, weights, capture, k=3, cnf_layers=1)
            assert features.any()


class TestExport:
    @pytest.fixture
    def graph(self, small_mlp):
        spec, weights = small_mlp
        _, capture = forward_batch(spec, weights, SplitMix64(8).normal(4).reshape(1, 4))
        return FeatureExtractor(spec, weights, k=4).graph(capture)

    def test_threshold_above_one_exports_nothing(self, graph):
        assert graph_edges(graph, threshold=1.1).empty

    def test_threshold_zero_exports_nonzero_edges(self, graph):
        expected = sum(int(np.count_nonzero(a[0])) for a in graph.a_blocks)
        assert len(graph_edges(graph, threshold=0.0)) == expected

    def test_default_threshold_count(self, graph):
        expected = sum(int(np.count_nonzero(a[0] >= 0.4)) for a in graph.a_blocks)
        dot, csv = export_graph(graph, threshold=0.4)
        assert len(csv.splitlines()) - 1 == expected
        assert dot.count("->") == expected
        assert dot.startswith("digraph")

    def test_export_leaves_features_alone(self, graph):
        before = [c.copy() for c in graph.cnf]
        export_graph(graph, threshold=0.9)
        assert all(np.array_equal(a, b) for a, b in zip(before, graph.cnf))
