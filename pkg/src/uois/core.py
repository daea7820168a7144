"""Shared raster types.

Conventions used across the package:

* Rasters are row-major numpy arrays; pixel ``(0, 0)`` is the top-left corner.
* 2D vectors are stored as ``(drow, dcol)``. Rows grow downward, so the
  fixed "background" direction used by the direction loss and by ground-truth
  direction fields is image-up, ``(-1, 0)``.
* Instance label maps use 0 for background, 1 for the table and
  ``2 .. 1+K`` for the K object instances.

All types are frozen dataclasses whose arrays are made read-only on
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BACKGROUND = 0
TABLE = 1
OBJECT = 2
NUM_CLASSES = 3
FIRST_INSTANCE = 2

#: Fixed direction for background/table pixels, in (drow, dcol): image-up.
FIXED_DIRECTION = np.array([-1.0, 0.0])


class InvariantError(ValueError):
    """A raster violates one of its type invariants."""


def present_values(labels: np.ndarray) -> np.ndarray:
    """Sorted distinct values of a nonnegative integer array (a counting sort)."""
    flat = np.asarray(labels).ravel()
    if flat.size == 0:
        return np.zeros(0, dtype=np.int64)
    if flat.max() > 4 * flat.size + 65536:
        return np.unique(flat).astype(np.int64)
    return np.flatnonzero(np.bincount(flat))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True, order="C")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ImageGrid:
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise InvariantError(f"grid must be at least 1x1, got {self.height}x{self.width}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.height, self.width))

    @classmethod
    def of(cls, array: np.ndarray) -> "ImageGrid":
        return cls(int(array.shape[0]), int(array.shape[1]))

    def check(self, other: "ImageGrid", what: str = "raster") -> None:
        if self != other:
            raise InvariantError(
                f"{what} grid {other.height}x{other.width} does not match "
                f"{self.height}x{self.width}"
            )


@dataclass(frozen=True, eq=False)
class OrganizedPointCloud:
    """Per-pixel XYZ in meters plus a validity mask.

    Invalid pixels are stored as (0, 0, 0).
    """

    xyz: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if xyz.ndim != 3 or xyz.shape[2] != 3:
            raise InvariantError(f"xyz must be HxWx3, got {xyz.shape}")
        ImageGrid.of(xyz).check(ImageGrid.of(valid), "validity")
        xyz = np.where(valid[..., None], xyz, 0.0)
        object.__setattr__(self, "xyz", _frozen(xyz))
        object.__setattr__(self, "valid", _frozen(valid))

    @property
    def grid(self) -> ImageGrid:
        return ImageGrid.of(self.xyz)

    @property
    def depth(self) -> np.ndarray:
        return self.xyz[..., 2]


@dataclass(frozen=True, eq=False)
class SemanticProbs:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 3 or probs.shape[2] < 2:
            raise InvariantError(f"probs must be HxWxC with C >= 2, got {probs.shape}")
        if (probs < 0).any():
            raise InvariantError("probabilities must be nonnegative")
        if np.abs(probs.sum(axis=2) - 1.0).max(initial=0.0) > 1e-6:
            raise InvariantError("per-pixel probabilities must sum to 1 within 1e-6")
        object.__setattr__(self, "probs", _frozen(probs))

    @property
    def grid(self) -> ImageGrid:
        return ImageGrid.of(self.probs)

    @property
    def num_classes(self) -> int:
        return self.probs.shape[2]

    def argmax(self) -> "SemanticLabels":
        return SemanticLabels(self.probs.argmax(axis=2), num_classes=self.num_classes)

    @classmethod
    def one_hot(cls, labels: "SemanticLabels") -> "SemanticProbs":
        eye = np.eye(labels.num_classes)
        return cls(eye[labels.labels])


@dataclass(frozen=True, eq=False)
class SemanticLabels:
    labels: np.ndarray
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise InvariantError(f"labels must be HxW, got {labels.shape}")
        labels = labels.astype(np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise InvariantError(f"every label must lie in [0, {self.num_classes})")
        object.__setattr__(self, "labels", _frozen(labels))

    @property
    def grid(self) -> ImageGrid:
        return ImageGrid.of(self.labels)

    @classmethod
    def from_instances(cls, instances: "InstanceLabelMap") -> "SemanticLabels":
        return cls(np.minimum(instances.labels, OBJECT))


@dataclass(frozen=True, eq=False)
class DirectionField:
    """Per-pixel unit (drow, dcol) vectors.

    ``valid`` flags pixels whose vector is meaningful; unit norm is enforced
    only there.
    """

    dirs: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        dirs = np.asarray(self.dirs, dtype=np.float64)
        if dirs.ndim != 3 or dirs.shape[2] != 2:
            raise InvariantError(f"dirs must be HxWx2, got {dirs.shape}")
        valid = np.ones(dirs.shape[:2], bool) if self.valid is None else np.asarray(self.valid, bool)
        ImageGrid.of(dirs).check(ImageGrid.of(valid), "validity")
        norms = np.hypot(dirs[..., 0], dirs[..., 1])
        if valid.any() and np.abs(norms[valid] - 1.0).max() > 1e-4:
            raise InvariantError("direction vectors must have unit norm within 1e-4")
        object.__setattr__(self, "dirs", _frozen(dirs))
        object.__setattr__(self, "valid", _frozen(valid))

    @property
    def grid(self) -> ImageGrid:
        return ImageGrid.of(self.dirs)


@dataclass(frozen=True)
class BinaryMask:
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 2:
            raise InvariantError(f"mask must be HxW, got {pixels.shape}")
        object.__setattr__(self, "pixels", _frozen(pixels.astype(bool)))

    @property
    def grid(self) -> ImageGrid:
        return ImageGrid.of(self.pixels)

    @property
    def area(self) -> int:
        return int(self.pixels.sum())

    def __bool__(self) -> bool:
        return bool(self.pixels.any())

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool((self.pixels == other.pixels).all())

    __hash__ = None


@dataclass(frozen=True)
class InstanceLabelMap:
    labels: np.ndarray
    num_instances: int = field(init=False)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise InvariantError(f"labels must be HxW, got {labels.shape}")
        if labels.size and labels.min() < 0:
            raise InvariantError("instance labels must be nonnegative")
        labels = labels.astype(np.int64)
        ids = present_values(labels)
        ids = ids[ids >= FIRST_INSTANCE]
        k = len(ids)
        if k and (ids[0] != FIRST_INSTANCE or ids[-1] != FIRST_INSTANCE + k - 1):
            raise InvariantError(
                f"instance ids must be contiguous from {FIRST_INSTANCE}, got {ids.tolist()}"
            )
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "num_instances", k)

    @property
    def grid(self) -> ImageGrid:
        return ImageGrid.of(self.labels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, InstanceLabelMap):
            return NotImplemented
        return self.labels.shape == other.labels.shape and bool((self.labels == other.labels).all())

    __hash__ = None

    @property
    def ids(self) -> list[int]:
        return list(range(FIRST_INSTANCE, FIRST_INSTANCE + self.num_instances))

    @classmethod
    def compact(cls, labels: np.ndarray) -> "InstanceLabelMap":
        """Renumber arbitrary instance ids (>= 2) to 2..1+K, keeping their order."""
        labels = np.asarray(labels, dtype=np.int64)
        if labels.ndim != 2:
            raise InvariantError(f"labels must be HxW, got {labels.shape}")
        if labels.size and labels.min() < 0:
            raise InvariantError("instance labels must be nonnegative")
        vals = present_values(labels)
        if vals.size == 0 or vals[-1] > 4 * labels.size + 65536:
            vals, inv = np.unique(labels, return_inverse=True)
            obj = vals >= FIRST_INSTANCE
            lut = np.where(obj, FIRST_INSTANCE + np.cumsum(obj) - 1, vals)
            return cls(lut[inv].reshape(labels.shape))
        lut = np.arange(vals[-1] + 1, dtype=np.int64)
        obj = vals[vals >= FIRST_INSTANCE]
        lut[obj] = FIRST_INSTANCE + np.arange(obj.size)
        return cls(lut[labels])

    @classmethod
    def from_masks(cls, masks: list[BinaryMask], table: np.ndarray | None = None) -> "InstanceLabelMap":
        """Paint masks in order (later masks win); empty masks are skipped."""
        if not masks and table is None:
            raise ValueError("need at least one mask or a table raster to know the grid")
        shape = masks[0].pixels.shape if masks else np.shape(table)
        out = np.zeros(shape, np.int64)
        if table is not None:
            out[np.asarray(table, bool)] = TABLE
        nid = FIRST_INSTANCE
        for m in masks:
            if m:
                out[m.pixels] = nid
                nid += 1
        return cls.compact(out)


def instance_masks(instances: InstanceLabelMap) -> list[tuple[int, BinaryMask]]:
    """One mask per instance id, ascending."""
    return [(i, BinaryMask(instances.labels == i)) for i in instances.ids]


def mask_centroid(mask: BinaryMask) -> tuple[float, float]:
    rows, cols = np.nonzero(mask.pixels)
    if rows.size == 0:
        raise ValueError("centroid of an empty mask is undefined")
    return float(rows.mean()), float(cols.mean())


def bounding_box(pixels) -> tuple[int, int, int, int] | None:
    """Inclusive (r0, c0, r1, c1) of the true pixels, or None if empty."""
    pixels = pixels.pixels if isinstance(pixels, BinaryMask) else np.asarray(pixels, bool)
    rows = np.flatnonzero(pixels.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(pixels.any(axis=0))
    return int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1])
