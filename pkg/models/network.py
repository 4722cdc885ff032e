"""Feed-forward architecture, parameters and activation capture"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from src.errors import ModelSpecError


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int
    kind: str = field(default="dense", init=False)

    trainable = True

    def output_shape(self, shape: Tuple[int, ...]) -> Tuple[int, ...]:
        if shape != (self.in_features,):
            raise ModelSpecError(f"Dense expects ({self.in_features},), got {shape}")
        return (self.out_features,)

    @property
    def neurons(self) -> int:
        return self.out_features

    def kernel_shape(self) -> Tuple[int, ...]:
        return (self.in_features, self.out_features)


@dataclass(frozen=True)
class Conv2D:
    in_channels: int
    out_channels: int
    kh: int
    kw: int
    stride: int = 1
    padding: int = 0
    kind: str = field(default="conv2d", init=False)

    trainable = True

    def output_shape(self, shape: Tuple[int, ...]) -> Tuple[int, ...]:
        if len(shape) != 3 or shape[2] != self.in_channels:
            raise ModelSpecError(
                f"Conv2D expects (H, W, {self.in_channels}), got {shape}"
            )
        h = (shape[0] + 2 * self.padding - self.kh) // self.stride + 1
        w = (shape[1] + 2 * self.padding - self.kw) // self.stride + 1
        if h <= 0 or w <= 0:
            raise ModelSpecError(f"Conv2D kernel larger than padded input {shape}")
        return (h, w, self.out_channels)

    @property
    def neurons(self) -> int:
        return self.out_channels

    def kernel_shape(self) -> Tuple[int, ...]:
        return (self.kh, self.kw, self.in_channels, self.out_channels)


@dataclass(frozen=True)
class MaxPool:
    k: int
    stride: int
    kind: str = field(default="maxpool", init=False)

    trainable = False

    def output_shape(self, shape: Tuple[int, ...]) -> Tuple[int, ...]:
        if len(shape) != 3:
            raise ModelSpecError(f"MaxPool expects (H, W, C), got {shape}")
        h = (shape[0] - self.k) // self.stride + 1
        w = (shape[1] - self.k) // self.stride + 1
        if h <= 0 or w <= 0:
            raise ModelSpecError(f"MaxPool window larger than input {shape}")
        return (h, w, shape[2])


@dataclass(frozen=True)
class Flatten:
    kind: str = field(default="flatten", init=False)

    trainable = False

    def output_shape(self, shape: Tuple[int, ...]) -> Tuple[int, ...]:
        return (int(np.prod(shape)),)


@dataclass(frozen=True)
class ReLU:
    kind: str = field(default="relu", init=False)

    trainable = False

    def output_shape(self, shape: Tuple[int, ...]) -> Tuple[int, ...]:
        return shape


@dataclass(frozen=True)
class Softmax:
    kind: str = field(default="softmax", init=False)

    trainable = False

    def output_shape(self, shape: Tuple[int, ...]) -> Tuple[int, ...]:
        if len(shape) != 1:
            raise ModelSpecError(f"Softmax expects a vector, got {shape}")
        return shape


LayerSpec = Union[Dense, Conv2D, MaxPool, Flatten, ReLU, Softmax]

LAYER_TYPES = {
    "dense": Dense,
    "conv2d": Conv2D,
    "maxpool": MaxPool,
    "flatten": Flatten,
    "relu": ReLU,
    "softmax": Softmax,
}

ACTIVATION_KINDS = ("relu", "softmax")


def layer_from_dict(payload: Dict[str, Any]) -> LayerSpec:
    payload = dict(payload)
    kind = payload.pop("kind", None)
    if kind not in LAYER_TYPES:
        raise ModelSpecError(f"unknown layer kind {kind!r}")
    try:
        return LAYER_TYPES[kind](**payload)
    except TypeError as e:
        raise ModelSpecError(f"bad {kind} layer: {e}") from e


@dataclass
class ModelSpec:
    input_shape: Tuple[int, ...]
    layers: List[LayerSpec]
    num_classes: int

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        self.validate()

    def validate(self):
        if not self.layers:
            raise ModelSpecError("model has no layers")
        softmax_at = [i for i, layer in enumerate(self.layers) if layer.kind == "softmax"]
        if softmax_at != [len(self.layers) - 1]:
            raise ModelSpecError("model needs exactly one Softmax, as its last layer")
        if not self.trainable_indices:
            raise ModelSpecError("model needs at least one trainable layer")
        shapes = self.layer_shapes()
        if shapes[-1] != (self.num_classes,):
            raise ModelSpecError(
                f"output shape {shapes[-1]} does not match {self.num_classes} classes"
            )

    def layer_shapes(self) -> List[Tuple[int, ...]]:
        """Output shape of every layer, in order"""
        shapes = []
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
            shapes.append(shape)
        return shapes

    @property
    def trainable_indices(self) -> List[int]:
        return [i for i, layer in enumerate(self.layers) if layer.trainable]

    @property
    def trainable_layers(self) -> List[LayerSpec]:
        return [self.layers[i] for i in self.trainable_indices]

    def neuron_counts(self) -> List[int]:
        return [layer.neurons for layer in self.trainable_layers]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "input_shape": list(self.input_shape),
            "layers": [asdict(layer) for layer in self.layers],
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "ModelSpec":
        try:
            return cls(
                input_shape=tuple(payload["input_shape"]),
                layers=[layer_from_dict(layer) for layer in payload["layers"]],
                num_classes=int(payload["num_classes"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ModelSpecError(f"malformed model spec: {e}") from e


@dataclass
class LayerParams:
    kernel: np.ndarray
    bias: np.ndarray


@dataclass
class LayerWeights:
    """Kernel and bias for every trainable layer, in layer order"""

    params: List[LayerParams]

    def check(self, spec: ModelSpec):
        layers = spec.trainable_layers
        if len(layers) != len(self.params):
            raise ModelSpecError(
                f"{len(layers)} trainable layers but {len(self.params)} weight sets"
            )
        for layer, p in zip(layers, self.params):
            if tuple(p.kernel.shape) != layer.kernel_shape():
                raise ModelSpecError(
                    f"{layer.kind} kernel shape {p.kernel.shape} != {layer.kernel_shape()}"
                )
            if tuple(p.bias.shape) != (layer.neurons,):
                raise ModelSpecError(f"{layer.kind} bias shape {p.bias.shape}")

    def astype(self, dtype) -> "LayerWeights":
        return LayerWeights(
            [LayerParams(p.kernel.astype(dtype), p.bias.astype(dtype)) for p in self.params]
        )


@dataclass
class ActivationCapture:
    """Post-nonlinearity output of every trainable layer.

    Each entry keeps a leading case axis: [N, units] for dense layers and
    [N, H, W, filters] for convolutions.
    """

    layers: List[np.ndarray]

    def __len__(self):
        return len(self.layers)

    @property
    def num_cases(self) -> int:
        return int(self.layers[0].shape[0]) if self.layers else 0

    def slice(self, start: int, stop: int) -> "ActivationCapture":
        return ActivationCapture([layer[start:stop] for layer in self.layers])

    def channel_counts(self) -> List[int]:
        return [int(layer.shape[-1]) for layer in self.layers]
