"""
Built-in architecture presets
"""

from typing import Sequence, Tuple

from models.network import Conv2D, Dense, Flatten, MaxPool, ModelSpec, ReLU, Softmax

MLP_WIDTHS = (32, 16, 16)

LENET5_SHAPES = {
    "input": (28, 28, 1),
    "conv_filters": (6, 16),
    "dense_units": (120, 84),
}


def mlp_spec(
    input_shape: Tuple[int, ...],
    num_classes: int,
    widths: Sequence[int] = MLP_WIDTHS,
) -> ModelSpec:
    """Dense/ReLU stack ending in Dense(num_classes) + Softmax"""
    layers = []
    if len(input_shape) > 1:
        layers.append(Flatten())
    fan_in = 1
    for d in input_shape:
        fan_in *= d
    for width in widths:
        layers += [Dense(fan_in, width), ReLU()]
        fan_in = width
    layers += [Dense(fan_in, num_classes), Softmax()]
    return ModelSpec(input_shape=tuple(input_shape), layers=layers, num_classes=num_classes)


def lenet5_spec(num_classes: int = 10) -> ModelSpec:
    c1, c2 = LENET5_SHAPES["conv_filters"]
    d1, d2 = LENET5_SHAPES["dense_units"]
    layers = [
        Conv2D(1, c1, 5, 5, stride=1, padding=2),
        ReLU(),
        MaxPool(2, 2),
        Conv2D(c1, c2, 5, 5),
        ReLU(),
        MaxPool(2, 2),
        Flatten(),
        Dense(5 * 5 * c2, d1),
        ReLU(),
        Dense(d1, d2),
        ReLU(),
        Dense(d2, num_classes),
        Softmax(),
    ]
    return ModelSpec(input_shape=LENET5_SHAPES["input"], layers=layers, num_classes=num_classes)
