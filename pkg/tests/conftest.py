from pathlib import Path
from typing import Sequence

import numpy as np
import pytest

from models.network import Dense, LayerParams, LayerWeights, ModelSpec, ReLU, Softmax
from scripts.build_fixtures import build_fixtures
from utils.rng import SplitMix64

FIXTURES = Path(__file__).parent / "fixtures"


def dense_spec(widths: Sequence[int]) -> ModelSpec:
    """Dense/ReLU chain over widths[0] inputs; the last width is the class count"""
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        layers.append(Dense(fan_in, fan_out))
        layers.append(Softmax() if i == len(widths) - 2 else ReLU())
    return ModelSpec(input_shape=(widths[0],), layers=layers, num_classes=widths[-1])


def random_weights(spec: ModelSpec, seed: int, low: float = -1.0, high: float = 1.0) -> LayerWeights:
    rng = SplitMix64(seed)
    params = []
    for layer in spec.trainable_layers:
        shape = layer.kernel_shape()
        kernel = rng.uniform(low, high, int(np.prod(shape))).reshape(shape)
        params.append(LayerParams(kernel, rng.uniform(low, high, shape[-1])))
    return LayerWeights(params)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def identity_model():
    """Dense(2->2) with an identity kernel followed by Softmax"""
    spec = ModelSpec(input_shape=(2,), layers=[Dense(2, 2), Softmax()], num_classes=2)
    weights = LayerWeights([LayerParams(np.eye(2), np.zeros(2))])
    return spec, weights


@pytest.fixture
def small_mlp():
    spec = dense_spec([4, 6, 5, 4, 3])
    return spec, random_weights(spec, seed=7)


@pytest.fixture(scope="session")
def glyph_experiment(tmp_path_factory) -> Path:
    """Config path of a small trained-glyph experiment shared by slow tests"""
    out = tmp_path_factory.mktemp("glyph_experiment")
    return build_fixtures(out, seed=3, n_train=240, n_validation=240, n_test=300, epochs=20)
