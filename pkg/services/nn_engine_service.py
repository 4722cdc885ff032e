"""Minimal feed-forward engine: forward pass with capture, SGD trainer, AGMF files"""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from models.network import (
    ACTIVATION_KINDS,
    ActivationCapture,
    LayerParams,
    LayerWeights,
    ModelSpec,
)
from models.tensor import LabeledDataset
from src.config import Config
from src.errors import (
    BadMagic,
    DimensionMismatch,
    ModelFormatError,
    ModelSpecError,
    TrainingDiverged,
    UnsupportedVersion,
)
from utils.rng import SplitMix64
from workers.chunk_worker import ChunkWorker

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"AGMF"
MODEL_VERSION = 1
_U32 = np.dtype("<u4")
_F32 = np.dtype("<f4")


# ------------------- layer kernels -------------------
def _conv_patches(x: np.ndarray, layer) -> np.ndarray:
    """[N, H, W, C] -> [N, H', W', C, kh, kw]"""
    if layer.padding:
        p = layer.padding
        x = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    windows = sliding_window_view(x, (layer.kh, layer.kw), axis=(1, 2))
    return windows[:, :: layer.stride, :: layer.stride]


def _conv_forward(x, layer, params: LayerParams):
    patches = _conv_patches(x, layer)
    out = np.tensordot(patches, params.kernel, axes=([3, 4, 5], [2, 0, 1]))
    return out + params.bias, patches


def _conv_backward(grad, x_shape, patches, layer, params: LayerParams):
    d_kernel = np.einsum("nhwcij,nhwo->ijco", patches, grad, optimize=True)
    d_bias = grad.sum(axis=(0, 1, 2))
    d_patches = np.einsum("nhwo,ijco->nhwcij", grad, params.kernel, optimize=True)
    n, h, w, c = x_shape
    p, s = layer.padding, layer.stride
    d_padded = np.zeros((n, h + 2 * p, w + 2 * p, c))
    out_h, out_w = grad.shape[1], grad.shape[2]
    for i in range(layer.kh):
        for j in range(layer.kw):
            d_padded[:, i : i + s * (out_h - 1) + 1 : s, j : j + s * (out_w - 1) + 1 : s, :] += (
                d_patches[..., i, j]
            )
    d_x = d_padded[:, p : p + h, p : p + w, :]
    return d_x, LayerParams(d_kernel, d_bias)


def _pool_forward(x, layer):
    windows = sliding_window_view(x, (layer.k, layer.k), axis=(1, 2))
    windows = windows[:, :: layer.stride, :: layer.stride]
    flat = windows.reshape(windows.shape[:4] + (-1,))
    return flat.max(axis=-1), flat.argmax(axis=-1)


def _pool_backward(grad, x_shape, argmax, layer):
    d_x = np.zeros(x_shape)
    s, k = layer.stride, layer.k
    out_h, out_w = grad.shape[1], grad.shape[2]
    for i in range(k):
        for j in range(k):
            picked = grad * (argmax == i * k + j)
            d_x[:, i : i + s * (out_h - 1) + 1 : s, j : j + s * (out_w - 1) + 1 : s, :] += picked
    return d_x


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


# ------------------- forward -------------------
@dataclass
class _Pass:
    probs: np.ndarray
    logits: np.ndarray
    capture: List[np.ndarray]
    caches: list = field(default_factory=list)


def _run(spec: ModelSpec, weights: LayerWeights, x: np.ndarray, keep_cache: bool = False) -> _Pass:
    capture: List[np.ndarray] = []
    caches = []
    pending: Optional[int] = None  # capture slot still absorbing activations
    param_index = 0
    logits = None
    for layer in spec.layers:
        cache = None
        if layer.kind == "dense":
            params = weights.params[param_index]
            cache = x
            x = x @ params.kernel + params.bias
        elif layer.kind == "conv2d":
            params = weights.params[param_index]
            shape = x.shape
            x, patches = _conv_forward(x, layer, params)
            cache = (shape, patches)
        elif layer.kind == "maxpool":
            shape = x.shape
            x, argmax = _pool_forward(x, layer)
            cache = (shape, argmax)
        elif layer.kind == "flatten":
            cache = x.shape
            x = x.reshape(x.shape[0], -1)
        elif layer.kind == "relu":
            cache = x > 0
            x = np.maximum(x, 0.0)
        elif layer.kind == "softmax":
            logits = x
            x = _softmax(x)

        if layer.trainable:
            capture.append(x)
            pending = len(capture) - 1
            param_index += 1
        elif layer.kind in ACTIVATION_KINDS and pending is not None:
            capture[pending] = x
        else:
            pending = None
        if keep_cache:
            caches.append(cache)
    return _Pass(probs=x, logits=logits, capture=capture, caches=caches)


def _check_input(spec: ModelSpec, x: np.ndarray):
    if tuple(x.shape[1:]) != spec.input_shape:
        raise DimensionMismatch(
            f"input case shape {tuple(x.shape[1:])} does not match model input {spec.input_shape}"
        )


def forward_batch(spec: ModelSpec, weights: LayerWeights, inputs) -> Tuple[np.ndarray, ActivationCapture]:
    """Probabilities [N, C] and capture for a batch of cases"""
    x = np.asarray(inputs, dtype=np.float64)
    _check_input(spec, x)
    result = _run(spec, weights.astype(np.float64), x)
    return result.probs, ActivationCapture(result.capture)


def forward(spec: ModelSpec, weights: LayerWeights, case) -> Tuple[np.ndarray, ActivationCapture]:
    """Single-case forward pass; the capture keeps a case axis of length 1"""
    x = np.asarray(case, dtype=np.float64)[None, ...]
    probs, capture = forward_batch(spec, weights, x)
    return probs[0], capture


class InferenceEngine:
    """Forward passes for one model, counting cases per stage"""

    def __init__(self, spec: ModelSpec, weights: LayerWeights, worker: Optional[ChunkWorker] = None):
        weights.check(spec)
        self.spec = spec
        self.weights = weights
        self._params = weights.astype(np.float64)
        self.worker = worker or ChunkWorker()
        self.invocations: Counter = Counter()

    def run(self, inputs, stage: str = "default") -> Tuple[np.ndarray, ActivationCapture]:
        x = np.asarray(inputs, dtype=np.float64)
        _check_input(self.spec, x)

        def chunk(start: int, stop: int) -> _Pass:
            return _run(self.spec, self._params, x[start:stop])

        passes = self.worker.map(chunk, x.shape[0])
        self.invocations[stage] += int(x.shape[0])
        logger.info("forwarded %d cases (%s)", x.shape[0], stage)
        if not passes:
            empty = _run(self.spec, self._params, np.zeros((0,) + self.spec.input_shape))
            return empty.probs, ActivationCapture(empty.capture)
        probs = np.concatenate([p.probs for p in passes])
        layers = [
            np.concatenate([p.capture[i] for p in passes]) for i in range(len(passes[0].capture))
        ]
        return probs, ActivationCapture(layers)


# ------------------- training -------------------
def _cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_norm - shifted[np.arange(labels.size), labels]))


def loss_and_gradients(spec: ModelSpec, weights: LayerWeights, inputs, labels) -> Tuple[float, LayerWeights]:
    """Mean cross-entropy and its analytic gradient for every parameter"""
    x = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    params = weights.astype(np.float64)
    result = _run(spec, params, x, keep_cache=True)
    loss = _cross_entropy(result.logits, labels)

    grad = result.probs.copy()
    grad[np.arange(labels.size), labels] -= 1.0
    grad /= labels.size

    grads: List[LayerParams] = []
    param_index = len(params.params)
    # the softmax is last, its gradient is already folded into `grad`
    for layer, cache in zip(reversed(spec.layers[:-1]), reversed(result.caches[:-1])):
        if layer.kind == "dense":
            param_index -= 1
            p = params.params[param_index]
            grads.append(LayerParams(cache.T @ grad, grad.sum(axis=0)))
            grad = grad @ p.kernel.T
        elif layer.kind == "conv2d":
            param_index -= 1
            shape, patches = cache
            grad, g = _conv_backward(grad, shape, patches, layer, params.params[param_index])
            grads.append(g)
        elif layer.kind == "maxpool":
            shape, argmax = cache
            grad = _pool_backward(grad, shape, argmax, layer)
        elif layer.kind == "flatten":
            grad = grad.reshape(cache)
        elif layer.kind == "relu":
            grad = grad * cache
        elif layer.kind == "softmax":
            raise ModelSpecError("softmax is only supported as the final layer")
    grads.reverse()
    return loss, LayerWeights(grads)


def init_weights(spec: ModelSpec, rng: SplitMix64) -> LayerWeights:
    """Uniform init with standard deviation 1/sqrt(fan_in), zero biases"""
    params = []
    for layer in spec.trainable_layers:
        shape = layer.kernel_shape()
        fan_in = int(np.prod(shape[:-1]))
        limit = np.sqrt(3.0 / fan_in)
        kernel = rng.uniform(-limit, limit, int(np.prod(shape))).reshape(shape)
        params.append(LayerParams(kernel, np.zeros(shape[-1])))
    return LayerWeights(params)


@dataclass
class TrainResult:
    weights: LayerWeights
    losses: List[float]  # losses[0] is before the first epoch

    @property
    def final_loss(self) -> float:
        return self.losses[-1]


def train_sgd(
    spec: ModelSpec,
    dataset: LabeledDataset,
    epochs: int = Config.TRAIN_EPOCHS,
    lr: float = Config.TRAIN_LR,
    seed: int = Config.DEFAULT_SEED,
    batch_size: int = Config.TRAIN_BATCH_SIZE,
) -> TrainResult:
    if len(dataset) == 0:
        raise ModelSpecError("cannot train on an empty dataset")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if epochs < 0 or batch_size < 1:
        raise ValueError("epochs must be >= 0 and batch_size >= 1")
    dataset.validate_classes(spec.num_classes)

    rng = SplitMix64(seed)
    weights = init_weights(spec, rng)
    x = dataset.array().astype(np.float64)
    _check_input(spec, x)
    y = dataset.labels.astype(np.int64)
    n = y.size

    losses = [_cross_entropy(_run(spec, weights, x).logits, y)]
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            _, grads = loss_and_gradients(spec, weights, x[batch], y[batch])
            for p, g in zip(weights.params, grads.params):
                p.kernel -= lr * g.kernel
                p.bias -= lr * g.bias
        loss = _cross_entropy(_run(spec, weights, x).logits, y)
        if not np.isfinite(loss):
            raise TrainingDiverged(epoch, loss)
        losses.append(loss)
        logger.debug("epoch %d loss %.6f", epoch, loss)
    logger.info("trained %d epochs, loss %.4f -> %.4f", epochs, losses[0], losses[-1])
    return TrainResult(weights.astype(np.float32), losses)


def accuracy(spec: ModelSpec, weights: LayerWeights, dataset: LabeledDataset) -> float:
    probs, _ = forward_batch(spec, weights, dataset.array())
    return float(np.mean(np.argmax(probs, axis=1) == dataset.labels))


# ------------------- AGMF model files -------------------
def encode_model(spec: ModelSpec, weights: LayerWeights) -> bytes:
    weights.check(spec)
    header = json.dumps(spec.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [
        MODEL_MAGIC,
        np.asarray([MODEL_VERSION, len(header)], dtype=_U32).tobytes(),
        header,
    ]
    for p in weights.params:
        for blob in (p.kernel, p.bias):
            raw = np.ascontiguousarray(blob, dtype=_F32).tobytes()
            parts.append(np.asarray([len(raw)], dtype=_U32).tobytes())
            parts.append(raw)
    return b"".join(parts)


def decode_model(payload: bytes, source: str = "<bytes>") -> Tuple[ModelSpec, LayerWeights]:
    if payload[:4] != MODEL_MAGIC:
        raise BadMagic(MODEL_MAGIC, payload[:4])
    if len(payload) < 12:
        raise ModelFormatError(f"{source}: truncated header")
    version, header_len = np.frombuffer(payload[4:12], dtype=_U32)
    if int(version) != MODEL_VERSION:
        raise UnsupportedVersion(int(version))
    offset = 12 + int(header_len)
    try:
        header = json.loads(payload[12:offset].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"{source}: corrupted JSON header: {e}") from e
    spec = ModelSpec.from_dict(header)

    params = []
    for layer in spec.trainable_layers:
        blobs = []
        for shape in (layer.kernel_shape(), (layer.neurons,)):
            if offset + 4 > len(payload):
                raise ModelFormatError(f"{source}: missing weight blob for {layer.kind}")
            size = int(np.frombuffer(payload[offset : offset + 4], dtype=_U32)[0])
            expected = 4 * int(np.prod(shape))
            if size != expected or offset + 4 + size > len(payload):
                raise ModelFormatError(
                    f"{source}: {layer.kind} blob holds {size} bytes, layer needs {expected}"
                )
            raw = payload[offset + 4 : offset + 4 + size]
            blobs.append(np.frombuffer(raw, dtype=_F32).astype(np.float32).reshape(shape))
            offset += 4 + size
        params.append(LayerParams(blobs[0], blobs[1]))
    if offset != len(payload):
        raise ModelFormatError(f"{source}: {len(payload) - offset} trailing bytes")
    return spec, LayerWeights(params)


def save_model(path, spec: ModelSpec, weights: LayerWeights):
    Path(path).write_bytes(encode_model(spec, weights))


def load_model(path) -> Tuple[ModelSpec, LayerWeights]:
    path = Path(path)
    return decode_model(path.read_bytes(), str(path))
