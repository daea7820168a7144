"""Binary morphology, connected components and the initial mask processor.

Out-of-bounds pixels are background for both erosion and dilation. Closing
is evaluated on the unbounded plane (the mask zero-extended) and then cropped,
so it stays extensive for masks that touch the image border.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import BinaryMask, ImageGrid, InvariantError, bounding_box


@dataclass(frozen=True)
class StructuringElement:
    shape: str = "square"
    radius: int = 1

    def __post_init__(self):
        if self.shape not in ("square", "disk"):
            raise InvariantError(f"unknown structuring element shape {self.shape!r}")
        if self.radius < 1:
            raise InvariantError("structuring element radius must be >= 1")

    @property
    def footprint(self) -> np.ndarray:
        r = self.radius
        if self.shape == "square":
            return np.ones((2 * r + 1, 2 * r + 1), bool)
        dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
        return dy * dy + dx * dx <= r * r

    def rectangles(self) -> list[tuple[int, int]]:
        """Centered (half-height, half-width) rectangles whose union is the footprint."""
        r = self.radius
        if self.shape == "square":
            return [(r, r)]
        return [(k, math.isqrt(r * r - k * k)) for k in range(r + 1)]

    @classmethod
    def default_for(cls, grid: ImageGrid, fraction: float = 0.003, shape: str = "disk") -> "StructuringElement":
        return cls(shape, max(1, int(round(fraction * grid.diagonal))))


def _pixels(mask) -> np.ndarray:
    return mask.pixels if isinstance(mask, BinaryMask) else np.asarray(mask, bool)


def _rect_filter(img: np.ndarray, hh: int, hw: int, f) -> np.ndarray:
    out = f(img, 2 * hh + 1, axis=0, mode="constant", cval=0) if hh else img
    return f(out, 2 * hw + 1, axis=1, mode="constant", cval=0) if hw else out


# Erosion by a union of rectangles is the intersection of the rectangle
# erosions (dually for dilation), and each rectangle is two 1-D passes.
def _erode(pixels: np.ndarray, se: StructuringElement) -> np.ndarray:
    img = pixels.astype(np.uint8)
    out = np.ones(img.shape, bool)
    for hh, hw in se.rectangles():
        out &= _rect_filter(img, hh, hw, ndimage.minimum_filter1d).astype(bool)
    return out


def _dilate(pixels: np.ndarray, se: StructuringElement) -> np.ndarray:
    img = pixels.astype(np.uint8)
    out = np.zeros(img.shape, bool)
    for hh, hw in se.rectangles():
        out |= _rect_filter(img, hh, hw, ndimage.maximum_filter1d).astype(bool)
    return out


def erode(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    return BinaryMask(_erode(_pixels(mask), se))


def dilate(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    return BinaryMask(_dilate(_pixels(mask), se))


def open(mask: BinaryMask, se: StructuringElement) -> BinaryMask:  # noqa: A001
    return BinaryMask(_dilate(_erode(_pixels(mask), se), se))


def close(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    r = se.radius
    shrunk = _erode(_dilate(np.pad(_pixels(mask), r), se), se)
    return BinaryMask(shrunk[r:-r, r:-r])


opening = open
closing = close

def inner_boundary(mask) -> np.ndarray:
    """Mask pixels with an 8-neighbor outside the mask or on the image border."""
    pixels = _pixels(mask)
    return pixels & ~_erode(pixels, StructuringElement("square", 1))


_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


def connected_components(mask: BinaryMask, connectivity: int = 8) -> list[BinaryMask]:
    """Maximal components, largest first; equal sizes by first pixel in raster order."""
    if connectivity not in _STRUCTURES:
        raise ValueError("connectivity must be 4 or 8")
    lab, n = ndimage.label(_pixels(mask), structure=_STRUCTURES[connectivity])
    if n == 0:
        return []
    flat = lab.ravel()
    sizes = np.bincount(flat, minlength=n + 1)[1:]
    # ndimage numbers components in order of their first pixel in raster order
    order = sorted(range(n), key=lambda i: (-sizes[i], i))
    return [BinaryMask(lab == i + 1) for i in order]


def _min_distance(pixels: np.ndarray, center) -> float:
    rows, cols = np.nonzero(pixels)
    return float(np.min((rows - center[0]) ** 2 + (cols - center[1]) ** 2))


def closest_component(mask: BinaryMask, center, connectivity: int = 8) -> BinaryMask:
    """Component nearest to ``center`` by nearest-pixel distance.

    Ties go to the larger component, then the earlier one in raster order.
    Returns an empty mask when ``mask`` is empty.
    """
    comps = connected_components(mask, connectivity)
    if not comps:
        return BinaryMask(np.zeros_like(_pixels(mask)))
    # comps are already ordered by (size desc, first pixel), so min() keeps that order on ties
    return min(comps, key=lambda m: _min_distance(m.pixels, center))


def imp_process(
    mask: BinaryMask,
    center,
    se_open: StructuringElement,
    se_close: StructuringElement,
    connectivity: int = 8,
) -> BinaryMask:
    """Open, close, then keep the connected component closest to ``center``.

    Ties go to the larger component, then the earlier one in raster order.
    An empty result means the instance should be dropped.

    Pixel groups more than 4r apart (chessboard), r the larger element
    radius, cannot interact under opening or closing, so each group is
    cleaned on its own bounding box. The result equals processing the full
    raster.
    """
    pixels = _pixels(mask)
    out = np.zeros_like(pixels)
    box = bounding_box(pixels)
    if box is None:
        return BinaryMask(out)
    r0, c0 = box[0], box[1]
    crop = pixels[r0:box[2] + 1, c0:box[3] + 1]
    reach = StructuringElement("square", 2 * max(se_open.radius, se_close.radius) + 1)
    groups, _ = ndimage.label(_dilate(crop, reach), structure=_STRUCTURES[8])
    groups[~crop] = 0
    best, best_key = None, None
    for k, sl in enumerate(ndimage.find_objects(groups)):
        if sl is None:
            continue
        cleaned = close(open(groups[sl] == k + 1, se_open), se_close)
        dr, dc = r0 + sl[0].start, c0 + sl[1].start
        for comp in connected_components(cleaned, connectivity):
            rows, cols = np.nonzero(comp.pixels)
            rows, cols = rows + dr, cols + dc
            dist = np.min((rows - center[0]) ** 2 + (cols - center[1]) ** 2)
            key = (dist, -rows.size, rows[0], cols[0])
            if best_key is None or key < best_key:
                best, best_key = (rows, cols), key
    if best is not None:
        out[best] = True
    return BinaryMask(out)
