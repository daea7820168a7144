"""Mask perturbations that imitate initial masks, and refiner input crops.

Each perturbation takes a ``numpy.random.Generator`` and consumes draws in a
fixed, documented order, so a seeded substream (:mod:`uois.rng`) reproduces
a sample exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import BinaryMask, InvariantError, bounding_box, mask_centroid
from .morphology import StructuringElement, dilate, erode, inner_boundary

CROP_SIZE = 224
STEPS = ("translate_rotate", "add_cut", "morph", "ellipse")


def _round(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class AugmentConfig:
    rng_seed: int = 0
    translate_frac_range: tuple[float, float] = (0.0, 0.1)
    rotate_deg_range: tuple[float, float] = (-10.0, 10.0)
    addcut_radius_beta: tuple[float, float] = (1.4, 3.0)
    addcut_radius_max_frac: float = 0.4
    morph_iters_range: tuple[int, int] = (1, 3)
    morph_kernel_beta: tuple[float, float] = (2.0, 5.0)
    morph_kernel_max_frac: float = 0.2
    ellipse_count_lambda: float = 2.0
    ellipse_radius_gamma: tuple[float, float] = (2.0, 0.08)
    apply_probs: dict = field(default_factory=lambda: {s: 0.5 for s in STEPS})

    def __post_init__(self):
        lo, hi = self.rotate_deg_range
        if not -180.0 <= lo <= hi <= 180.0:
            raise InvariantError("rotate_deg_range must be an ordered sub-range of [-180, 180]")
        lo, hi = self.translate_frac_range
        if not 0.0 <= lo <= hi:
            raise InvariantError("translate_frac_range must be ordered and nonnegative")
        lo, hi = self.morph_iters_range
        if not 0 <= lo <= hi:
            raise InvariantError("morph_iters_range must be ordered and nonnegative")
        positive = (*self.addcut_radius_beta, *self.morph_kernel_beta, *self.ellipse_radius_gamma,
                    self.ellipse_count_lambda)
        if min(positive) <= 0:
            raise InvariantError("distribution parameters must be positive")
        if not set(self.apply_probs) <= set(STEPS):
            raise InvariantError(f"apply_probs keys must be among {STEPS}")
        if any(not 0.0 <= p <= 1.0 for p in self.apply_probs.values()):
            raise InvariantError("apply probabilities must lie in [0, 1]")

    def prob(self, step: str) -> float:
        return float(self.apply_probs.get(step, 0.0))


def _nonempty(mask: BinaryMask, what: str) -> np.ndarray:
    if not mask:
        raise ValueError(f"{what} needs a nonempty mask")
    return mask.pixels


def rigid_transform(mask: np.ndarray, angle_deg: float, shift: tuple[float, float]) -> np.ndarray:
    """Rotate about the centroid by ``angle_deg`` then translate by (drow, dcol).

    Nearest-neighbor inverse mapping; pixels mapped from outside the grid are
    background.
    """
    mask = np.asarray(mask, bool)
    cr, cc = mask_centroid(BinaryMask(mask))
    a = math.radians(angle_deg)
    ca, sa = math.cos(a), math.sin(a)
    rows, cols = np.indices(mask.shape, dtype=np.float64)
    y = rows - shift[0] - cr
    x = cols - shift[1] - cc
    src_c = np.floor(ca * x + sa * y + cc + 0.5).astype(np.int64)
    src_r = np.floor(-sa * x + ca * y + cr + 0.5).astype(np.int64)
    h, w = mask.shape
    ok = (src_r >= 0) & (src_r < h) & (src_c >= 0) & (src_c < w)
    out = np.zeros_like(mask)
    out[ok] = mask[src_r[ok], src_c[ok]]
    return out


def translate_rotate(mask: BinaryMask, cfg: AugmentConfig, rng: np.random.Generator) -> BinaryMask:
    """Draws: angle, translation fraction, translation heading."""
    pixels = _nonempty(mask, "translate_rotate")
    area = float(pixels.sum())
    angle = rng.uniform(*cfg.rotate_deg_range)
    mag = rng.uniform(*cfg.translate_frac_range) * math.sqrt(area)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    return BinaryMask(rigid_transform(pixels, angle, (mag * math.sin(heading), mag * math.cos(heading))))


def disk_region(mask: np.ndarray, center: tuple[int, int], radius: float) -> np.ndarray:
    """Mask pixels strictly closer than ``radius`` to ``center``."""
    rows, cols = np.indices(mask.shape)
    return mask & ((rows - center[0]) ** 2 + (cols - center[1]) ** 2 < radius * radius)


def reflect_into(mask: np.ndarray, region: np.ndarray, center: tuple[int, int]) -> np.ndarray:
    """Union of ``mask`` with ``region`` point-reflected through ``center``."""
    out = mask.copy()
    rr, cc = np.nonzero(region)
    rr, cc = 2 * center[0] - rr, 2 * center[1] - cc
    h, w = mask.shape
    ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
    out[rr[ok], cc[ok]] = True
    return out


def add_cut(mask: BinaryMask, cfg: AugmentConfig, rng: np.random.Generator) -> BinaryMask:
    """Cut a disk-shaped piece at the edge, or copy it outward.

    Draws: boundary pixel index, radius beta, cut/add coin.
    """
    pixels = _nonempty(mask, "add_cut")
    br, bc = np.nonzero(inner_boundary(pixels))
    k = int(rng.integers(br.size))
    center = (int(br[k]), int(bc[k]))
    radius = rng.beta(*cfg.addcut_radius_beta) * cfg.addcut_radius_max_frac * math.sqrt(pixels.sum())
    cut = rng.random() < 0.5
    region = disk_region(pixels, center, radius)
    if cut:
        return BinaryMask(pixels & ~region)
    return BinaryMask(reflect_into(pixels, region, center))


def morph_perturb(mask: BinaryMask, cfg: AugmentConfig, rng: np.random.Generator) -> BinaryMask:
    """Several rounds of erosion or dilation with area-scaled square kernels.

    Draws: iteration count, then per iteration an erode/dilate coin and a
    kernel beta. Kernel sizes scale with the input mask's area.
    """
    pixels = _nonempty(mask, "morph_perturb")
    scale = cfg.morph_kernel_max_frac * math.sqrt(pixels.sum())
    lo, hi = cfg.morph_iters_range
    n = int(rng.integers(lo, hi + 1))
    cur = BinaryMask(pixels)
    for _ in range(n):
        shrink = rng.random() < 0.5
        radius = max(1, _round(rng.beta(*cfg.morph_kernel_beta) * scale))
        se = StructuringElement("square", radius)
        cur = erode(cur, se) if shrink else dilate(cur, se)
    return cur


def ellipse_pixels(shape, center, radii, angle_rad: float) -> np.ndarray:
    """Pixels whose centers fall inside the rotated ellipse."""
    rows, cols = np.indices(shape, dtype=np.float64)
    dx = cols - center[1]
    dy = rows - center[0]
    ca, sa = math.cos(angle_rad), math.sin(angle_rad)
    u = ca * dx + sa * dy
    v = -sa * dx + ca * dy
    return (u / radii[0]) ** 2 + (v / radii[1]) ** 2 <= 1.0


def ellipse_perturb(mask: BinaryMask, cfg: AugmentConfig, rng: np.random.Generator) -> BinaryMask:
    """Add or remove a Poisson number of random ellipses near the mask.

    Centers are uniform over the bounding box grown by 5% of its extent on
    each side. Draws: count, then per ellipse center row, center column,
    two radii, angle, add/remove coin.
    """
    pixels = _nonempty(mask, "ellipse_perturb")
    r0, c0, r1, c1 = bounding_box(pixels)
    gh, gw = 0.05 * (r1 - r0 + 1), 0.05 * (c1 - c0 + 1)
    shape_k, scale_frac = cfg.ellipse_radius_gamma
    scale = scale_frac * math.sqrt(pixels.sum())
    k = int(rng.poisson(cfg.ellipse_count_lambda))
    out = pixels.copy()
    for _ in range(k):
        cr = rng.uniform(r0 - gh, r1 + gh)
        cc = rng.uniform(c0 - gw, c1 + gw)
        ra = rng.gamma(shape_k, scale)
        rb = rng.gamma(shape_k, scale)
        angle = rng.uniform(0.0, math.pi)
        add = rng.random() < 0.5
        e = ellipse_pixels(pixels.shape, (cr, cc), (ra, rb), angle)
        out = (out | e) if add else (out & ~e)
    return BinaryMask(out)


_STEP_FUNCS = {
    "translate_rotate": translate_rotate,
    "add_cut": add_cut,
    "morph": morph_perturb,
    "ellipse": ellipse_perturb,
}


def augment_mask(gt_mask: BinaryMask, cfg: AugmentConfig, rng: np.random.Generator) -> BinaryMask:
    """Apply each perturbation with its probability, in a fixed order.

    A step whose output is empty is rolled back, so the result is never
    empty. One coin is drawn per step whether or not it fires.
    """
    cur = BinaryMask(_nonempty(gt_mask, "augment_mask"))
    for step in STEPS:
        if rng.random() < cfg.prob(step):
            out = _STEP_FUNCS[step](cur, cfg, rng)
            if out:
                cur = out
    return cur


@dataclass(frozen=True, eq=False)
class RefinePair:
    rgb_crop: np.ndarray
    mask_crop: np.ndarray
    gt_crop: np.ndarray | None
    crop_box: tuple[float, float, float, float]  # top, left, bottom, right in pixel-edge coordinates


def crop_box_for(mask: np.ndarray, pad_frac: float = 0.25) -> tuple[float, float, float, float]:
    """Bounding box grown by ``pad_frac`` of its size on every side, clipped to the image."""
    box = bounding_box(mask)
    if box is None:
        raise ValueError("crop box of an empty mask is undefined")
    r0, c0, r1, c1 = box
    h, w = r1 - r0 + 1, c1 - c0 + 1
    H, W = mask.shape
    return (
        max(0.0, r0 - pad_frac * h),
        max(0.0, c0 - pad_frac * w),
        min(float(H), r1 + 1 + pad_frac * h),
        min(float(W), c1 + 1 + pad_frac * w),
    )


def _sample_centers(box, size: int):
    top, left, bottom, right = box
    ys = top + (np.arange(size) + 0.5) * (bottom - top) / size
    xs = left + (np.arange(size) + 0.5) * (right - left) / size
    return ys, xs


def crop_nearest(mask: np.ndarray, box, size: int = CROP_SIZE) -> np.ndarray:
    ys, xs = _sample_centers(box, size)
    h, w = mask.shape
    ri = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    ci = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    return np.asarray(mask)[np.ix_(ri, ci)]


def crop_bilinear(image: np.ndarray, box, size: int = CROP_SIZE) -> np.ndarray:
    ys, xs = _sample_centers(box, size)
    yy, xx = np.meshgrid(ys - 0.5, xs - 0.5, indexing="ij")
    img = np.asarray(image)
    chans = [
        ndimage.map_coordinates(img[..., k].astype(np.float64), [yy, xx], order=1, mode="nearest")
        for k in range(img.shape[2])
    ]
    out = np.stack(chans, axis=-1)
    if img.dtype == np.uint8:
        out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return out


def make_refine_pair(rgb: np.ndarray, gt_mask: BinaryMask | None, perturbed_mask: BinaryMask,
                     pad_frac: float = 0.25, size: int = CROP_SIZE) -> RefinePair:
    """Crop RGB and masks around the perturbed mask and resize to ``size`` x ``size``."""
    pm = _nonempty(perturbed_mask, "make_refine_pair")
    rgb = np.asarray(rgb)
    if rgb.shape[:2] != pm.shape:
        raise ValueError(f"rgb grid {rgb.shape[:2]} does not match mask grid {pm.shape}")
    box = crop_box_for(pm, pad_frac)
    gt = None if gt_mask is None else crop_nearest(gt_mask.pixels, box, size)
    return RefinePair(crop_bilinear(rgb, box, size), crop_nearest(pm, box, size), gt, box)


def paste_back(crop: np.ndarray, box, shape: tuple[int, int]) -> np.ndarray:
    """Inverse of :func:`crop_nearest`: full-resolution mask from a refined crop."""
    crop = np.asarray(crop, bool)
    size_r, size_c = crop.shape
    top, left, bottom, right = box
    h, w = shape
    rows = np.arange(h) + 0.5
    cols = np.arange(w) + 0.5
    in_r = (rows >= top) & (rows < bottom)
    in_c = (cols >= left) & (cols < right)
    ri = np.clip(np.floor((rows - top) * size_r / (bottom - top)).astype(np.int64), 0, size_r - 1)
    ci = np.clip(np.floor((cols - left) * size_c / (right - left)).astype(np.int64), 0, size_c - 1)
    out = crop[np.ix_(ri, ci)]
    out &= np.outer(in_r, in_c)
    return out
