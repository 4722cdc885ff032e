"""Activation graph data types"""

from dataclasses import dataclass
from typing import List

import numpy as np


@dataclass(frozen=True)
class GraphSkeleton:
    """Normalized averaged weights between consecutive graph layers.

    Computed once per model and shared read-only across cases.
    """

    layer_sizes: List[int]
    w_blocks: List[np.ndarray]  # block l has shape [size(l), size(l+1)]


@dataclass
class ActivationTrace:
    """Normalized per-neuron activations; phi[l] has shape [N, size(l)]"""

    phi: List[np.ndarray]

    @property
    def num_cases(self) -> int:
        return int(self.phi[0].shape[0]) if self.phi else 0


@dataclass
class ActivationGraph:
    """Layer-partitioned adjacency with node and center node features.

    All arrays carry a leading case axis: a_blocks[l] is [N, size(l), size(l+1)],
    nf[l] and cnf[l] are [N, size(l)].
    """

    skeleton: GraphSkeleton
    a_blocks: List[np.ndarray]
    nf: List[np.ndarray]
    cnf: List[np.ndarray]

    @property
    def num_cases(self) -> int:
        return int(self.nf[0].shape[0]) if self.nf else 0
