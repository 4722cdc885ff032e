"""
Natural corruptions (rotate / translate / flip) and test scenario composition
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from models.experiment import CorruptionOp, CorruptionSpec
from models.tensor import LabeledDataset, Tensor
from src.errors import CountMismatch, DimensionMismatch, NonImageInput
from utils.rng import SplitMix64

logger = logging.getLogger(__name__)

OpsLike = Union[CorruptionSpec, Sequence[CorruptionOp], str]


def _as_ops(ops: OpsLike) -> List[CorruptionOp]:
    if isinstance(ops, CorruptionSpec):
        return list(ops.ops)
    if isinstance(ops, str):
        return list(CorruptionSpec(ops=ops).ops)
    ops = [CorruptionOp.parse(op) if isinstance(op, str) else op for op in ops]
    if not ops:
        raise ValueError("corruption needs at least one op")
    return ops


def _check_images(images: np.ndarray):
    if images.ndim != 4:
        raise NonImageInput(f"expected [n, H, W, C] images, got shape {images.shape}")


def rotate(images: np.ndarray, degrees: float) -> np.ndarray:
    """Counterclockwise rotation about the image center, vacated pixels zero"""
    _check_images(images)
    degrees = float(degrees) % 360.0
    height, width = images.shape[1:3]
    if degrees % 90.0 == 0.0:
        quarter_turns = int(degrees // 90.0)
        if quarter_turns % 2 and height != width:
            raise DimensionMismatch("quarter-turn rotation needs square images")
        return np.rot90(images, quarter_turns, axes=(1, 2)).copy()

    # nearest-neighbour inverse mapping
    theta = np.deg2rad(degrees)
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    r, c = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    x, y = c - cx, cy - r
    src_c = np.rint(np.cos(theta) * x + np.sin(theta) * y + cx).astype(np.int64)
    src_r = np.rint(cy - (-np.sin(theta) * x + np.cos(theta) * y)).astype(np.int64)
    inside = (src_r >= 0) & (src_r < height) & (src_c >= 0) & (src_c < width)
    out = np.zeros_like(images)
    out[:, inside] = images[:, src_r[inside], src_c[inside]]
    return out


def translate(images: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Shift columns right by dx and rows down by dy with zero fill"""
    _check_images(images)
    height, width = images.shape[1:3]
    out = np.zeros_like(images)
    if abs(dx) >= width or abs(dy) >= height:
        return out
    dst_r = slice(max(dy, 0), height + min(dy, 0))
    src_r = slice(max(-dy, 0), height + min(-dy, 0))
    dst_c = slice(max(dx, 0), width + min(dx, 0))
    src_c = slice(max(-dx, 0), width + min(-dx, 0))
    out[:, dst_r, dst_c] = images[:, src_r, src_c]
    return out


def flip(images: np.ndarray, axis: str) -> np.ndarray:
    _check_images(images)
    if axis == "h":
        return images[:, :, ::-1].copy()
    if axis == "v":
        return images[:, ::-1].copy()
    raise ValueError(f"unknown flip axis {axis!r}")


def apply_op(images: np.ndarray, op: CorruptionOp) -> np.ndarray:
    if op.kind == "rotate":
        return rotate(images, op.degrees)
    if op.kind == "translate":
        return translate(images, op.dx, op.dy)
    return flip(images, op.axis)


def corrupt_with_ops(dataset: LabeledDataset, ops: OpsLike, seed: int) -> Tuple[LabeledDataset, np.ndarray]:
    """Corrupted copy plus the index of the op each case received"""
    ops = _as_ops(ops)
    images = dataset.array()
    _check_images(images)
    choice = SplitMix64(seed).integers(len(ops), len(dataset))
    out = np.empty_like(images)
    for index, op in enumerate(ops):
        rows = np.nonzero(choice == index)[0]
        if rows.size:
            out[rows] = apply_op(images[rows], op)
    logger.info(
        "corrupted %d cases with %s", len(dataset), ", ".join(op.label() for op in ops)
    )
    return LabeledDataset(inputs=Tensor.from_array(out), labels=dataset.labels.copy()), choice


def corrupt(dataset: LabeledDataset, ops: OpsLike, seed: int) -> LabeledDataset:
    """Each case gets one op drawn uniformly from `ops`; labels are kept"""
    corrupted, _ = corrupt_with_ops(dataset, ops, seed)
    return corrupted


def concat_datasets(datasets: Sequence[LabeledDataset]) -> LabeledDataset:
    """Stack datasets case-wise; flags are dropped"""
    shapes = {ds.case_shape for ds in datasets}
    if len(shapes) > 1:
        raise DimensionMismatch(f"datasets disagree on case shape: {sorted(shapes)}")
    return LabeledDataset(
        inputs=Tensor.from_array(np.concatenate([ds.array() for ds in datasets])),
        labels=np.concatenate([ds.labels for ds in datasets]),
    )


# ------------------- scenario composition -------------------
@dataclass
class Scenario:
    dataset: LabeledDataset  # flags set
    types: np.ndarray  # 0 = clean, t = t-th fault pool
    source: np.ndarray  # row in the concatenation [normal_pool, *fault_pool]


def _draw(candidates: np.ndarray, wanted: int, rng: SplitMix64, what: str) -> np.ndarray:
    if wanted > candidates.size:
        logger.warning("only %d %s cases available, %d requested", candidates.size, what, wanted)
        wanted = candidates.size
    return candidates[rng.choice(candidates.size, wanted, replace=False)]


def compose_scenario(
    normal_pool: LabeledDataset,
    fault_pool: Sequence[LabeledDataset],
    n_normal: int,
    n_fault: int,
    seed: int,
) -> Scenario:
    """Mix clean cases with manipulated ones, preferring misclassified manipulations"""
    pools = [normal_pool, *fault_pool]
    for pool in pools:
        if pool.flags is None:
            raise CountMismatch("scenario pools must carry fault flags")
    shapes = {pool.case_shape for pool in pools}
    if len(shapes) > 1:
        raise DimensionMismatch(f"pools disagree on case shape: {sorted(shapes)}")

    offsets = np.cumsum([0] + [len(pool) for pool in pools])
    types = np.concatenate([np.full(len(pool), t, dtype=np.int64) for t, pool in enumerate(pools)])
    flags = np.concatenate([pool.flags for pool in pools]).astype(np.int64)
    rng = SplitMix64(seed)

    normal = _draw(np.arange(offsets[1]), n_normal, rng, "clean")
    faulty = np.arange(offsets[1], offsets[-1])
    misclassified = faulty[flags[faulty] == 1]
    if misclassified.size:
        faulty = misclassified
    else:
        logger.warning("no manipulated case is misclassified; drawing from the whole fault pool")
    chosen = np.concatenate([normal, _draw(faulty, n_fault, rng, "fault")])
    chosen = chosen[rng.permutation(chosen.size)]

    inputs = np.concatenate([pool.array() for pool in pools])[chosen]
    labels = np.concatenate([pool.labels for pool in pools])[chosen]
    dataset = LabeledDataset(inputs=Tensor.from_array(inputs), labels=labels, flags=flags[chosen])
    logger.info(
        "scenario: %d clean + %d manipulated, %d fault-revealing",
        int(np.sum(types[chosen] == 0)),
        int(np.sum(types[chosen] > 0)),
        int(np.sum(flags[chosen])),
    )
    return Scenario(dataset=dataset, types=types[chosen], source=chosen)
