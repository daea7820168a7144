"""Depth-only segmentation pipeline around a pluggable dense predictor.

backproject -> predictor -> Hough voting -> per-instance mask processing
(open, close, closest component) -> compacted instance map. The refinement
network is not part of this package; :func:`refine_seam` prepares its
inputs and :func:`paste_refined` merges its outputs back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .augment import RefinePair, make_refine_pair, paste_back
from .core import (
    BACKGROUND,
    BinaryMask,
    FIRST_INSTANCE,
    NUM_CLASSES,
    TABLE,
    DirectionField,
    ImageGrid,
    InstanceLabelMap,
    InvariantError,
    OrganizedPointCloud,
    SemanticLabels,
    SemanticProbs,
    instance_masks,
)
from .geometry import gt_direction_field
from .morphology import StructuringElement, imp_process
from .rng import substream
from .voting import VotingParams, hough_vote_with_centers


class DensePredictor(Protocol):
    def __call__(self, cloud: OrganizedPointCloud) -> tuple[SemanticProbs, DirectionField]: ...


class PredictorContractError(InvariantError):
    """A dense predictor returned outputs that break their type invariants."""


@dataclass
class OraclePredictor:
    """Ground-truth stand-in for a trained depth network, with optional corruption.

    ``label_flip_prob`` relabels each pixel to a uniformly chosen different
    class; ``direction_noise_deg`` rotates every direction by a Gaussian
    angle with that standard deviation. The noise comes from substream
    ``(seed, stream)``.
    """

    gt: InstanceLabelMap
    direction_noise_deg: float = 0.0
    label_flip_prob: float = 0.0
    seed: int = 0
    stream: int = 0

    def __call__(self, cloud: OrganizedPointCloud) -> tuple[SemanticProbs, DirectionField]:
        rng = substream(self.seed, self.stream)
        labels = SemanticLabels.from_instances(self.gt).labels.copy()
        if self.label_flip_prob > 0:
            flip = rng.random(labels.shape) < self.label_flip_prob
            shift = rng.integers(1, NUM_CLASSES, size=labels.shape)
            labels[flip] = (labels[flip] + shift[flip]) % NUM_CLASSES
        dirs = gt_direction_field(self.gt).dirs
        if self.direction_noise_deg > 0:
            ang = np.radians(rng.normal(0.0, self.direction_noise_deg, size=labels.shape))
            ca, sa = np.cos(ang), np.sin(ang)
            dirs = np.stack([ca * dirs[..., 0] - sa * dirs[..., 1], sa * dirs[..., 0] + ca * dirs[..., 1]], axis=-1)
            dirs /= np.hypot(dirs[..., 0], dirs[..., 1])[..., None]
        return SemanticProbs(np.eye(NUM_CLASSES)[labels]), DirectionField(dirs)


@dataclass(frozen=True)
class SegmentParams:
    voting: VotingParams = field(default_factory=VotingParams)
    method: str = "fast"
    use_imp: bool = True
    se_open: StructuringElement | None = None  # None: sized from the image
    se_close: StructuringElement | None = None
    connectivity: int = 8
    se_fraction: float = 0.003
    se_shape: str = "disk"

    def elements(self, grid: ImageGrid) -> tuple[StructuringElement, StructuringElement]:
        default = StructuringElement.default_for(grid, self.se_fraction, self.se_shape)
        return self.se_open or default, self.se_close or default


def check_prediction(cloud: OrganizedPointCloud, probs, dirs) -> tuple[SemanticProbs, DirectionField]:
    """Validate predictor outputs, naming the broken invariant."""
    try:
        probs = probs if isinstance(probs, SemanticProbs) else SemanticProbs(probs)
        dirs = dirs if isinstance(dirs, DirectionField) else DirectionField(dirs)
    except InvariantError as exc:
        raise PredictorContractError(f"predictor output invalid: {exc}") from exc
    if probs.grid != cloud.grid:
        raise PredictorContractError("predictor output invalid: semantic grid does not match the input grid")
    if dirs.grid != cloud.grid:
        raise PredictorContractError("predictor output invalid: direction grid does not match the input grid")
    if probs.num_classes != NUM_CLASSES:
        raise PredictorContractError(f"predictor output invalid: expected {NUM_CLASSES} classes")
    return probs, dirs


def apply_imp(instances: InstanceLabelMap, centers, params: SegmentParams) -> InstanceLabelMap:
    """Clean each instance mask separately, then resolve overlaps by nearest center.

    Instances whose cleaned mask is empty are dropped.
    """
    se_open, se_close = params.elements(instances.grid)
    lab = instances.labels
    kept = []
    for (iid, mask), center in zip(instance_masks(instances), centers):
        cleaned = imp_process(mask, center, se_open, se_close, params.connectivity)
        if cleaned:
            kept.append((cleaned.pixels, center))
    out = np.where(lab == TABLE, TABLE, BACKGROUND).astype(np.int64)
    if not kept:
        return InstanceLabelMap(out)
    stack = np.stack([m for m, _ in kept])
    claims = stack.sum(axis=0)
    for k, (m, _) in enumerate(kept):
        out[m & (claims == 1)] = FIRST_INSTANCE + k
    rows, cols = np.nonzero(claims > 1)
    if rows.size:
        cen = np.array([c for _, c in kept], dtype=np.float64)
        d2 = (rows[:, None] - cen[None, :, 0]) ** 2 + (cols[:, None] - cen[None, :, 1]) ** 2
        d2 = np.where(stack[:, rows, cols].T, d2, np.inf)
        out[rows, cols] = FIRST_INSTANCE + np.argmin(d2, axis=1)
    return InstanceLabelMap.compact(out)


def segment_cloud(cloud: OrganizedPointCloud, predictor: DensePredictor, params: SegmentParams = SegmentParams()):
    """Run the pipeline on one point cloud; returns (instances, centers)."""
    probs, dirs = check_prediction(cloud, *predictor(cloud))
    labels = probs.argmax().labels.copy()
    labels[~cloud.valid] = BACKGROUND
    sem = SemanticLabels(labels)
    voting = params.voting.scaled_to(cloud.grid)
    inst, centers = hough_vote_with_centers(sem, dirs, voting, method=params.method)
    if params.use_imp and inst.num_instances:
        inst = apply_imp(inst, centers, params)
    return inst, centers


def refine_seam(masks: InstanceLabelMap, rgb: np.ndarray, pad_frac: float = 0.25,
                gt: InstanceLabelMap | None = None) -> list[tuple[int, RefinePair]]:
    """One refiner input per instance; ``gt`` adds training targets (best-overlap gt object)."""
    pairs = []
    for iid, mask in instance_masks(masks):
        target = None
        if gt is not None:
            overlap = gt.labels[mask.pixels]
            overlap = overlap[overlap >= FIRST_INSTANCE]
            best = np.bincount(overlap).argmax() if overlap.size else -1
            target = BinaryMask(gt.labels == best)
        pairs.append((iid, make_refine_pair(rgb, target, mask, pad_frac)))
    return pairs


def paste_refined(entries, grid: ImageGrid, table: np.ndarray | None = None) -> InstanceLabelMap:
    """Merge refined crops back into one instance map.

    ``entries`` are (crop_mask, crop_box) pairs. A pixel claimed by several
    crops goes to the crop whose box center is nearest.
    """
    h, w = grid.shape
    out = np.zeros((h, w), dtype=np.int64)
    if table is not None:
        out[np.asarray(table, bool)] = TABLE
    if not entries:
        return InstanceLabelMap(out)
    full = np.stack([paste_back(crop, box, (h, w)) for crop, box in entries])
    centers = np.array([((b[0] + b[2]) / 2, (b[1] + b[3]) / 2) for _, b in entries])
    rows, cols = np.indices((h, w), dtype=np.float64)
    best = np.full((h, w), -1, dtype=np.int64)
    best_d = np.full((h, w), math.inf)
    for k in range(len(entries)):
        d = (rows + 0.5 - centers[k, 0]) ** 2 + (cols + 0.5 - centers[k, 1]) ** 2
        take = full[k] & (d < best_d)
        best[take] = k
        best_d[take] = d[take]
    hit = best >= 0
    out[hit] = FIRST_INSTANCE + best[hit]
    return InstanceLabelMap.compact(out)
