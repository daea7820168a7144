"""Pinhole camera, depth backprojection and ground-truth direction fields."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    FIXED_DIRECTION,
    DirectionField,
    ImageGrid,
    InstanceLabelMap,
    InvariantError,
    OrganizedPointCloud,
)


@dataclass(frozen=True)
class PinholeCamera:
    fx: float
    fy: float
    cx: float
    cy: float
    grid: ImageGrid

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvariantError("focal lengths must be positive")

    @classmethod
    def from_fov(cls, vertical_fov_deg: float, grid: ImageGrid) -> "PinholeCamera":
        """Square-pixel camera with the principal point at the image center."""
        fy = (grid.height / 2.0) / math.tan(math.radians(vertical_fov_deg) / 2.0)
        return cls(fy, fy, grid.width / 2.0, grid.height / 2.0, grid)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.grid.width,
            "height": self.grid.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PinholeCamera":
        return cls(
            float(d["fx"]),
            float(d["fy"]),
            float(d["cx"]),
            float(d["cy"]),
            ImageGrid(int(d["height"]), int(d["width"])),
        )

    def pixel_rays(self) -> np.ndarray:
        """HxWx3 camera-frame rays with unit z component."""
        rows, cols = np.indices(self.grid.shape, dtype=np.float64)
        return np.stack(
            [(cols - self.cx) / self.fx, (rows - self.cy) / self.fy, np.ones_like(rows)], axis=-1
        )


def backproject(depth: np.ndarray, cam: PinholeCamera, valid: np.ndarray | None = None) -> OrganizedPointCloud:
    """Depth in meters to an organized point cloud.

    Pixels are invalid where ``valid`` is false, or, when ``valid`` is not
    given, where depth is not a positive finite number.
    """
    depth = np.asarray(depth, dtype=np.float64)
    cam.grid.check(ImageGrid.of(depth), "depth")
    if valid is None:
        valid = np.isfinite(depth) & (depth > 0)
    else:
        valid = np.asarray(valid, bool)
        cam.grid.check(ImageGrid.of(valid), "validity")
    z = np.where(valid, depth, 0.0)
    xyz = cam.pixel_rays() * z[..., None]
    return OrganizedPointCloud(xyz, valid)


def project(xyz: np.ndarray, cam: PinholeCamera) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Camera-frame points to (row, col, z)."""
    xyz = np.asarray(xyz, dtype=np.float64)
    z = xyz[..., 2]
    col = xyz[..., 0] * cam.fx / z + cam.cx
    row = xyz[..., 1] * cam.fy / z + cam.cy
    return row, col, z


def gt_direction_field(instances: InstanceLabelMap) -> DirectionField:
    """Unit vectors from every object pixel toward its instance centroid.

    Non-object pixels, and a pixel sitting exactly on its centroid, get the
    fixed image-up direction.
    """
    labels = instances.labels
    h, w = labels.shape
    dirs = np.empty((h, w, 2))
    dirs[...] = FIXED_DIRECTION
    if instances.num_instances == 0:
        return DirectionField(dirs)
    rows, cols = np.indices((h, w), dtype=np.float64)
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=instances.num_instances + 2).astype(np.float64)
    counts[counts == 0] = 1.0
    mean_r = np.bincount(flat, weights=rows.ravel(), minlength=len(counts)) / counts
    mean_c = np.bincount(flat, weights=cols.ravel(), minlength=len(counts)) / counts
    obj = labels >= 2
    dr = mean_r[labels] - rows
    dc = mean_c[labels] - cols
    norm = np.hypot(dr, dc)
    ok = obj & (norm > 0)
    dirs[ok, 0] = dr[ok] / norm[ok]
    dirs[ok, 1] = dc[ok] / norm[ok]
    return DirectionField(dirs)
