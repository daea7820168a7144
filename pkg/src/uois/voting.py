"""Hough voting layer: direction-field votes to initial instance masks.

Pipeline: :func:`center_scores` -> :func:`select_centers` ->
:func:`assign_pixels`, composed by :func:`hough_vote`.

Directions are binned into ``num_bins`` equal angular sectors of
``atan2(drow, dcol)``. An object pixel ``q`` votes for pixel ``p`` when the
offset ``p - q`` lands in the same sector as ``q``'s predicted direction.
Two scorers compute the same integer vote counts:

* ``exact``: the pairwise definition, O(N^2) in the number of object pixels.
* ``fast``: each source rasterizes only the cone of its sector into an
  accumulator (compiled kernel when available).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import _kernels
from .core import (
    FIRST_INSTANCE,
    OBJECT,
    TABLE,
    DirectionField,
    ImageGrid,
    InstanceLabelMap,
    InvariantError,
    SemanticLabels,
)

# Snaps angles that sit on a sector boundary (axis-aligned offsets) to the
# upper sector regardless of last-ulp differences in atan2.
_BOUNDARY_EPS = 1e-9

REFERENCE_DIAGONAL = 800.0  # 640x480


@dataclass(frozen=True)
class VotingParams:
    num_bins: int = 60
    score_threshold: float = 0.015
    nms_radius: float = 55.0
    assign_angle_tol: float = 30.0

    def __post_init__(self):
        if self.num_bins < 4:
            raise InvariantError("num_bins must be >= 4")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise InvariantError("score_threshold must lie in [0, 1]")
        if self.nms_radius < 1:
            raise InvariantError("nms_radius must be >= 1")
        if not 0.0 < self.assign_angle_tol < 180.0:
            raise InvariantError("assign_angle_tol must lie in (0, 180)")

    def scaled_to(self, grid: ImageGrid) -> "VotingParams":
        """Copy with ``nms_radius`` scaled from the 640x480 reference by image diagonal."""
        return replace(self, nms_radius=max(1.0, self.nms_radius * grid.diagonal / REFERENCE_DIAGONAL))


@dataclass(frozen=True, eq=False)
class CenterScores:
    score: np.ndarray

    def __post_init__(self):
        score = np.asarray(self.score, dtype=np.float64)
        if score.size and (score.min() < 0 or score.max() > 1):
            raise InvariantError("center scores must lie in [0, 1]")
        score = score.copy()
        score.flags.writeable = False
        object.__setattr__(self, "score", score)

    @property
    def grid(self) -> ImageGrid:
        return ImageGrid.of(self.score)


def direction_bins(drow, dcol, num_bins: int) -> np.ndarray:
    """Sector index in [0, num_bins) of the vector(s) (drow, dcol)."""
    theta = np.arctan2(np.asarray(drow, dtype=np.float64), np.asarray(dcol, dtype=np.float64))
    t = theta * (num_bins / (2.0 * math.pi))
    return np.mod(np.floor(t + _BOUNDARY_EPS), num_bins).astype(np.int64)


@lru_cache(maxsize=8)
def _offset_tables(height: int, width: int, num_bins: int):
    """Sector of every integer offset on the grid, plus per-row column spans.

    The last value says whether every (bin, row) run of the table is
    contiguous, in which case the spans alone describe the cones.
    """
    dr = np.arange(-(height - 1), height, dtype=np.float64)
    dc = np.arange(-(width - 1), width, dtype=np.float64)
    lut = direction_bins(dr[:, None], dc[None, :], num_bins).astype(np.int16)
    lut[height - 1, width - 1] = -1
    lut.flags.writeable = False
    lo, hi = _kernels.bin_intervals(lut, num_bins)
    nrows = lut.shape[0]
    row_ids = np.broadcast_to(np.arange(nrows)[:, None], lut.shape)
    hit = lut >= 0
    counts = np.bincount(lut[hit].astype(np.int64) * nrows + row_ids[hit], minlength=num_bins * nrows)
    counts = counts.reshape(num_bins, nrows)
    contiguous = bool(np.array_equal(counts, np.where(hi >= lo, hi - lo + 1, 0)))
    return lut, np.ascontiguousarray(lo), np.ascontiguousarray(hi), contiguous


def _check_inputs(labels: SemanticLabels, dirs: DirectionField) -> None:
    labels.grid.check(dirs.grid, "direction field")


def _voters(labels: SemanticLabels, dirs: DirectionField, num_bins: int):
    obj = labels.labels == OBJECT
    rows, cols = np.nonzero(obj)
    voting = dirs.valid[rows, cols]
    bins = direction_bins(dirs.dirs[rows, cols, 0], dirs.dirs[rows, cols, 1], num_bins)
    return obj, rows, cols, voting, bins


def center_scores(
    labels: SemanticLabels,
    dirs: DirectionField,
    params: VotingParams = VotingParams(),
    method: str = "fast",
    kernels=None,
) -> CenterScores:
    """Fraction of the other object pixels whose direction sector covers each object pixel.

    Object pixels with an invalid direction count toward the denominator but
    cast no votes.
    """
    _check_inputs(labels, dirs)
    if method == "exact":
        counts = _votes_exact(labels, dirs, params.num_bins)
    elif method == "fast":
        counts = _votes_fast(labels, dirs, params.num_bins, kernels or _kernels)
    else:
        raise ValueError(f"unknown voting method {method!r}")
    n = int((labels.labels == OBJECT).sum())
    score = np.zeros(labels.grid.shape)
    if n > 1:
        score = counts / float(n - 1)
    return CenterScores(score)


def _votes_exact(labels, dirs, num_bins, chunk: int = 256) -> np.ndarray:
    obj, rows, cols, voting, bins = _voters(labels, dirs, num_bins)
    counts = np.zeros(labels.grid.shape, dtype=np.int64)
    if rows.size < 2:
        return counts
    src = np.flatnonzero(voting)
    tally = np.zeros(rows.size, dtype=np.int64)
    for start in range(0, src.size, chunk):
        s = src[start:start + chunk]
        drow = rows[None, :] - rows[s, None]
        dcol = cols[None, :] - cols[s, None]
        hit = direction_bins(drow, dcol, num_bins) == bins[s, None]
        hit &= (drow != 0) | (dcol != 0)
        tally += hit.sum(axis=0)
    counts[rows, cols] = tally
    return counts


def _votes_fast(labels, dirs, num_bins, kernels) -> np.ndarray:
    obj, rows, cols, voting, bins = _voters(labels, dirs, num_bins)
    h, w = labels.grid.shape
    counts = np.zeros((h, w), dtype=np.int64)
    if rows.size < 2:
        return counts
    lut, lo, hi, contiguous = _offset_tables(h, w, num_bins)
    r0, r1 = int(rows.min()), int(rows.max()) + 1
    c0, c1 = int(cols.min()), int(cols.max()) + 1
    src = (
        np.ascontiguousarray(rows[voting], dtype=np.int32),
        np.ascontiguousarray(cols[voting], dtype=np.int32),
        np.ascontiguousarray(bins[voting], dtype=np.int32),
    )
    if contiguous:
        acc = kernels.span_votes(*src, lo, hi, h - 1, w - 1, r0, c0, r1, c1)
    else:
        acc = kernels.cone_votes(*src, lut, lo, hi, r0, c0, r1, c1)
    counts[r0:r1, c0:c1] = acc
    counts[~obj] = 0
    return counts


def select_centers(scores: CenterScores, params: VotingParams = VotingParams()) -> list[tuple[int, int]]:
    """Greedy non-maximum suppression over pixels scoring at least the threshold.

    Candidates are visited by descending score, ties by (row, col); a
    candidate within ``nms_radius`` of a kept center is dropped. Zero-score
    pixels are never centers.
    """
    s = scores.score
    cand = (s >= params.score_threshold) & (s > 0)
    rows, cols = np.nonzero(cand)
    if rows.size == 0:
        return []
    order = np.lexsort((cols, rows, -s[rows, cols]))
    h, w = s.shape
    rad = params.nms_radius
    ir = int(math.floor(rad))
    dy, dx = np.mgrid[-ir:ir + 1, -ir:ir + 1]
    disk = dy * dy + dx * dx <= rad * rad
    dy, dx = dy[disk], dx[disk]
    suppressed = np.zeros((h, w), bool)
    centers = []
    for k in order:
        r, c = int(rows[k]), int(cols[k])
        if suppressed[r, c]:
            continue
        centers.append((r, c))
        rr, cc = r + dy, c + dx
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        suppressed[rr[ok], cc[ok]] = True
    return centers


def assign_pixels(
    labels: SemanticLabels,
    dirs: DirectionField,
    centers: list[tuple[int, int]],
    params: VotingParams = VotingParams(),
) -> InstanceLabelMap:
    """Assign each object pixel to the nearest center its direction points to.

    A center is pointed to when the angle between the pixel's direction and
    the pixel-to-center offset is at most ``assign_angle_tol``; a pixel lying
    on a center belongs to it. Pixels pointing at no center go to the center
    of least angular deviation; pixels with an invalid direction go to the
    nearest center. Ties resolve to the earlier center in ``centers``.
    Instances left empty are dropped and ids compacted in center order.
    """
    _check_inputs(labels, dirs)
    owner = _owners(labels, dirs, centers, params)
    return _to_instances(labels, owner)


def _owners(labels, dirs, centers, params) -> np.ndarray:
    """Per-pixel index into ``centers``; -1 off object pixels."""
    lab = labels.labels
    owner = np.full(lab.shape, -1, dtype=np.int64)
    rows, cols = np.nonzero(lab == OBJECT)
    if centers and rows.size:
        owner[rows, cols] = nearest_pointed_center(
            rows, cols, dirs.dirs[rows, cols], dirs.valid[rows, cols],
            np.asarray(centers, dtype=np.float64), params.assign_angle_tol,
        )
    return owner


def _to_instances(labels, owner) -> InstanceLabelMap:
    out = np.zeros(owner.shape, dtype=np.int64)
    out[labels.labels == TABLE] = TABLE
    hit = owner >= 0
    out[hit] = owner[hit] + FIRST_INSTANCE
    return InstanceLabelMap.compact(out)


def nearest_pointed_center(rows, cols, d, valid, centers, tol_deg, chunk: int = 65536) -> np.ndarray:
    """Index into ``centers`` chosen for each pixel by the assignment rule."""
    cos_tol = math.cos(math.radians(tol_deg))
    owner = np.empty(rows.size, dtype=np.int64)
    for start in range(0, rows.size, chunk):
        sl = slice(start, start + chunk)
        vr = centers[None, :, 0] - rows[sl, None]
        vc = centers[None, :, 1] - cols[sl, None]
        dist = np.hypot(vr, vc)
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = (d[sl, 0, None] * vr + d[sl, 1, None] * vc) / dist
        on_center = dist == 0
        cos = np.where(on_center, 1.0, cos)
        pointed = (cos >= cos_tol) | on_center
        near = np.argmin(np.where(pointed, dist, np.inf), axis=1)
        best_angle = np.argmax(cos, axis=1)
        choice = np.where(pointed.any(axis=1), near, best_angle)
        choice = np.where(valid[sl], choice, np.argmin(dist, axis=1))
        owner[sl] = choice
    return owner


def hough_vote(
    labels: SemanticLabels,
    dirs: DirectionField,
    params: VotingParams = VotingParams(),
    method: str = "fast",
    kernels=None,
) -> InstanceLabelMap:
    scores = center_scores(labels, dirs, params, method=method, kernels=kernels)
    centers = select_centers(scores, params)
    return assign_pixels(labels, dirs, centers, params)


def hough_vote_with_centers(labels, dirs, params=VotingParams(), method="fast", kernels=None):
    """Like :func:`hough_vote`, also returning the center of each output instance."""
    scores = center_scores(labels, dirs, params, method=method, kernels=kernels)
    centers = select_centers(scores, params)
    owner = _owners(labels, dirs, centers, params)
    used = np.unique(owner[owner >= 0])
    return _to_instances(labels, owner), [centers[i] for i in used]
