"""
Domain models for activation-graph test prioritization
"""

from .tensor import Tensor, LabeledDataset
from .network import (
    ActivationCapture,
    Conv2D,
    Dense,
    Flatten,
    LayerParams,
    LayerWeights,
    MaxPool,
    ModelSpec,
    ReLU,
    Softmax,
)
from .graph import ActivationGraph, ActivationTrace, GraphSkeleton
from .ranking import GBDTModel, RankedList, RankTrainSet, RegressionTree
from .embedding import EmbeddingStore, build_embedding_store
