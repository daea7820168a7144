"""Procedural tabletop scenes rendered by ray casting analytic primitives.

World frame: z up, the table top is the plane z = 0 centred at the origin,
and an infinite floor lies ``table_height`` below it. Camera frame follows
the pinhole model in :mod:`uois.geometry` (x right, y down, z forward), so
the rendered depth is the camera-frame Z of the first hit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import (
    BACKGROUND,
    FIRST_INSTANCE,
    OBJECT,
    TABLE,
    ImageGrid,
    InstanceLabelMap,
    InvariantError,
    OrganizedPointCloud,
    SemanticLabels,
)
from .geometry import PinholeCamera

PRIMITIVES = ("box", "sphere", "cylinder")
_RETRIES = 200


@dataclass(frozen=True)
class SceneConfig:
    rng_seed: int = 0
    object_count_range: tuple[int, int] = (5, 25)
    camera_height_range: tuple[float, float] = (0.5, 1.2)
    camera_roll_range: tuple[float, float] = (-12.0, 12.0)
    camera_tilt_range: tuple[float, float] = (0.0, 20.0)
    vertical_fov: float = 45.0
    resolution: tuple[int, int] = (640, 480)  # width, height
    primitives: tuple[str, ...] = PRIMITIVES
    box_size_range: tuple[float, float] = (0.04, 0.09)
    box_height_range: tuple[float, float] = (0.03, 0.12)
    sphere_radius_range: tuple[float, float] = (0.025, 0.045)
    cylinder_radius_range: tuple[float, float] = (0.02, 0.04)
    cylinder_height_range: tuple[float, float] = (0.04, 0.12)
    table_extent: tuple[float, float] = (1.2, 0.9)
    table_height: float = 0.75
    max_footprint_overlap: float = 0.0
    footprint_gap: float = 0.03
    stack_prob: float = 0.0
    views_per_scene: int = 1

    def __post_init__(self):
        pairs = {
            "object_count_range": self.object_count_range,
            "camera_height_range": self.camera_height_range,
            "camera_roll_range": self.camera_roll_range,
            "camera_tilt_range": self.camera_tilt_range,
            "box_size_range": self.box_size_range,
            "box_height_range": self.box_height_range,
            "sphere_radius_range": self.sphere_radius_range,
            "cylinder_radius_range": self.cylinder_radius_range,
            "cylinder_height_range": self.cylinder_height_range,
        }
        for name, (lo, hi) in pairs.items():
            if lo > hi:
                raise InvariantError(f"{name} must be a nonempty range")
        if self.object_count_range[0] < 0:
            raise InvariantError("object counts must be nonnegative")
        if min(self.resolution) < 1:
            raise InvariantError("resolution must be positive")
        if not set(self.primitives) <= set(PRIMITIVES) or not self.primitives:
            raise InvariantError(f"primitives must be a nonempty subset of {PRIMITIVES}")
        if not 0.0 <= self.max_footprint_overlap <= 0.5:
            raise InvariantError("max_footprint_overlap must lie in [0, 0.5]")
        if self.views_per_scene < 1:
            raise InvariantError("views_per_scene must be >= 1")

    @property
    def grid(self) -> ImageGrid:
        return ImageGrid(self.resolution[1], self.resolution[0])

    def camera(self) -> PinholeCamera:
        return PinholeCamera.from_fov(self.vertical_fov, self.grid)


@dataclass(frozen=True)
class NoiseConfig:
    gamma_shape: float = 1000.0
    gamma_scale: float = 0.001
    gp_grid_downsample: int = 8
    gp_sigma: float = 0.005

    def __post_init__(self):
        if self.gamma_shape <= 0 or self.gamma_scale <= 0:
            raise InvariantError("gamma parameters must be positive")
        if not 0.95 <= self.gamma_shape * self.gamma_scale <= 1.05:
            raise InvariantError("gamma noise mean must lie in [0.95, 1.05]")
        if self.gp_grid_downsample < 1 or self.gp_sigma < 0:
            raise InvariantError("gp_grid_downsample must be >= 1 and gp_sigma >= 0")


@dataclass(frozen=True)
class Primitive:
    kind: str
    center: tuple[float, float, float]  # footprint center (x, y) and base height z
    size: tuple[float, ...]  # box: (half_x, half_y, height); sphere: (radius,); cylinder: (radius, height)
    yaw: float = 0.0

    @property
    def footprint_radius(self) -> float:
        if self.kind == "box":
            return math.hypot(self.size[0], self.size[1])
        return self.size[0]

    @property
    def top(self) -> float:
        if self.kind == "sphere":
            return self.center[2] + 2 * self.size[0]
        return self.center[2] + self.size[-1]

    def corners(self) -> np.ndarray:
        """Corners of a world-axis-aligned box enclosing the primitive."""
        x, y, z = self.center
        r = self.footprint_radius
        xs, ys, zs = (x - r, x + r), (y - r, y + r), (z, self.top)
        return np.array([[a, b, c] for a in xs for b in ys for c in zs])


@dataclass(frozen=True, eq=False)
class Scene:
    depth: np.ndarray
    valid: np.ndarray
    instances: InstanceLabelMap
    semantic: SemanticLabels
    rgb: np.ndarray
    camera: PinholeCamera
    pose: np.ndarray  # 4x4 camera-to-world
    objects: list = field(default_factory=list)
    visible_objects: list = field(default_factory=list)  # object index per instance id, in id order


# --- ray / primitive intersection (vectorized over rays) -------------------

def _plane_t(origin, dirs, z):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (z - origin[2]) / dirs[:, 2]
    return np.where(t > 0, t, np.inf)


def intersect_sphere(origin, dirs, center, radius):
    oc = origin - np.asarray(center)
    a = np.einsum("ij,ij->i", dirs, dirs)
    b = 2.0 * dirs @ oc
    c = oc @ oc - radius * radius
    disc = b * b - 4 * a * c
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t0 = (-b - sq) / (2 * a)
    t1 = (-b + sq) / (2 * a)
    t = np.where(t0 > 0, t0, np.where(t1 > 0, t1, np.inf))
    return np.where(hit, t, np.inf)


def intersect_cylinder(origin, dirs, center, radius, height):
    """Upright capped cylinder with base at center[2]."""
    cx, cy, z0 = center
    ox, oy = origin[0] - cx, origin[1] - cy
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    a = dx * dx + dy * dy
    b = 2 * (ox * dx + oy * dy)
    c = ox * ox + oy * oy - radius * radius
    disc = b * b - 4 * a * c
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.where(disc >= 0, disc, 0.0))
        t_side = (-b - sq) / (2 * a)
    z = origin[2] + t_side * dz
    side_ok = (disc >= 0) & (a > 0) & (t_side > 0) & (z >= z0) & (z <= z0 + height)
    t = np.where(side_ok, t_side, np.inf)
    for zc in (z0 + height, z0):
        tc = _plane_t(origin, dirs, zc)
        with np.errstate(invalid="ignore"):
            px = origin[0] + tc * dx - cx
            py = origin[1] + tc * dy - cy
            cap_ok = np.isfinite(tc) & (px * px + py * py <= radius * radius)
        t = np.minimum(t, np.where(cap_ok, tc, np.inf))
    return t


def intersect_box(origin, dirs, center, half, height, yaw):
    """Box resting on z = center[2], rotated by ``yaw`` about the vertical axis."""
    cz, sz = math.cos(-yaw), math.sin(-yaw)
    rot = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    o = rot @ (origin - np.array([center[0], center[1], center[2] + height / 2]))
    d = dirs @ rot.T
    lo = np.array([-half[0], -half[1], -height / 2])
    hi = -lo
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - o) / d
        t2 = (hi - o) / d
    tmin = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
    tmax = np.where(np.isnan(t2), np.inf, np.maximum(t1, t2))
    # rays parallel to a slab must start inside it
    parallel = d == 0
    inside = (o >= lo) & (o <= hi)
    tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), tmin)
    tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), tmax)
    t_near = tmin.max(axis=1)
    t_far = tmax.min(axis=1)
    hit = (t_near <= t_far) & (t_far > 0)
    t = np.where(t_near > 0, t_near, t_far)
    return np.where(hit, t, np.inf)


def intersect(prim: Primitive, origin, dirs) -> np.ndarray:
    if prim.kind == "sphere":
        r = prim.size[0]
        x, y, z = prim.center
        return intersect_sphere(origin, dirs, (x, y, z + r), r)
    if prim.kind == "cylinder":
        return intersect_cylinder(origin, dirs, prim.center, prim.size[0], prim.size[1])
    return intersect_box(origin, dirs, prim.center, prim.size[:2], prim.size[2], prim.yaw)


# --- sampling -------------------------------------------------------------

def _sample_primitive(cfg: SceneConfig, rng, kind: str, xy, base: float) -> Primitive:
    yaw = rng.uniform(0.0, math.pi)
    if kind == "box":
        sx = rng.uniform(*cfg.box_size_range) / 2
        sy = rng.uniform(*cfg.box_size_range) / 2
        h = rng.uniform(*cfg.box_height_range)
        return Primitive("box", (xy[0], xy[1], base), (sx, sy, h), yaw)
    if kind == "sphere":
        return Primitive("sphere", (xy[0], xy[1], base), (rng.uniform(*cfg.sphere_radius_range),), yaw)
    r = rng.uniform(*cfg.cylinder_radius_range)
    h = rng.uniform(*cfg.cylinder_height_range)
    return Primitive("cylinder", (xy[0], xy[1], base), (r, h), yaw)


def _circle_overlap(d: float, r1: float, r2: float) -> float:
    """Intersection area of two circles with centers ``d`` apart."""
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        return math.pi * min(r1, r2) ** 2
    a1 = r1 * r1 * math.acos((d * d + r1 * r1 - r2 * r2) / (2 * d * r1))
    a2 = r2 * r2 * math.acos((d * d + r2 * r2 - r1 * r1) / (2 * d * r2))
    k = 0.5 * math.sqrt((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2))
    return a1 + a2 - k


def footprint_overlap(a: Primitive, b: Primitive, gap: float = 0.0) -> float:
    """Overlap of the (gap-inflated) circular footprints, as a fraction of the smaller one."""
    ra, rb = a.footprint_radius + gap / 2, b.footprint_radius + gap / 2
    d = math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
    return _circle_overlap(d, ra, rb) / (math.pi * min(ra, rb) ** 2)


def place_objects(cfg: SceneConfig, rng) -> list[Primitive] | None:
    """Rejection-sample a layout; None when the retry budget runs out."""
    lo, hi = cfg.object_count_range
    n = int(rng.integers(lo, hi + 1))
    lx, ly = cfg.table_extent
    placed: list[Primitive] = []
    for _ in range(n):
        kind = cfg.primitives[int(rng.integers(len(cfg.primitives)))]
        stack_on = None
        boxes = [p for p in placed if p.kind == "box" and p.center[2] == 0.0]
        if boxes and rng.random() < cfg.stack_prob:
            stack_on = boxes[int(rng.integers(len(boxes)))]
        for _attempt in range(_RETRIES):
            if stack_on is not None:
                prim = _sample_primitive(cfg, rng, kind, stack_on.center[:2], stack_on.top)
                if prim.footprint_radius <= min(stack_on.size[:2]):
                    break
                continue
            x = rng.uniform(-lx / 2, lx / 2)
            y = rng.uniform(-ly / 2, ly / 2)
            prim = _sample_primitive(cfg, rng, kind, (x, y), 0.0)
            reach = prim.footprint_radius
            if abs(x) + reach > lx / 2 or abs(y) + reach > ly / 2:
                continue
            if all(
                footprint_overlap(prim, q, cfg.footprint_gap) <= cfg.max_footprint_overlap
                for q in placed
                if q.center[2] == 0.0
            ):
                break
        else:
            return None
        placed.append(prim)
    return placed


def sample_camera_pose(cfg: SceneConfig, rng) -> np.ndarray:
    """Camera-to-world transform looking down at a point near the table center."""
    lx, ly = cfg.table_extent
    target = np.array([rng.uniform(-lx / 4, lx / 4), rng.uniform(-ly / 4, ly / 4), 0.0])
    height = rng.uniform(*cfg.camera_height_range)
    tilt = math.radians(rng.uniform(*cfg.camera_tilt_range))
    azimuth = rng.uniform(0.0, 2 * math.pi)
    roll = math.radians(rng.uniform(*cfg.camera_roll_range))
    away = np.array([math.cos(azimuth), math.sin(azimuth), 0.0])
    eye = target + height * math.tan(tilt) * away + np.array([0.0, 0.0, height])
    fwd = target - eye
    fwd /= np.linalg.norm(fwd)
    ahead = -away
    up = ahead - (ahead @ fwd) * fwd
    up /= np.linalg.norm(up)
    y_axis = -up
    x_axis = np.cross(y_axis, fwd)
    cr, sr = math.cos(roll), math.sin(roll)
    x_axis, y_axis = cr * x_axis + sr * y_axis, -sr * x_axis + cr * y_axis
    pose = np.eye(4)
    pose[:3, 0], pose[:3, 1], pose[:3, 2], pose[:3, 3] = x_axis, y_axis, fwd, eye
    return pose


# --- rendering ------------------------------------------------------------

def _project_box(corners_w: np.ndarray, pose: np.ndarray, cam: PinholeCamera):
    """Pixel window covering the projection of ``corners_w``; None if off-screen."""
    rot, eye = pose[:3, :3], pose[:3, 3]
    pc = (corners_w - eye) @ rot
    h, w = cam.grid.shape
    if (pc[:, 2] <= 1e-6).any():
        return (0, 0, h, w)
    col = pc[:, 0] * cam.fx / pc[:, 2] + cam.cx
    row = pc[:, 1] * cam.fy / pc[:, 2] + cam.cy
    r0 = max(0, int(math.floor(row.min())) - 2)
    c0 = max(0, int(math.floor(col.min())) - 2)
    r1 = min(h, int(math.ceil(row.max())) + 3)
    c1 = min(w, int(math.ceil(col.max())) + 3)
    if r0 >= r1 or c0 >= c1:
        return None
    return (r0, c0, r1, c1)


def render(objects: list[Primitive], pose: np.ndarray, cam: PinholeCamera, cfg: SceneConfig):
    """Z-buffer render. Returns depth (0 where invalid), valid, raw object index map (-1 none), semantic."""
    h, w = cam.grid.shape
    rays_c = cam.pixel_rays().reshape(-1, 3)
    rot, eye = pose[:3, :3], pose[:3, 3]
    rays_w = rays_c @ rot.T
    lx, ly = cfg.table_extent
    t_table = _plane_t(eye, rays_w, 0.0)
    hx = eye[0] + t_table * rays_w[:, 0]
    hy = eye[1] + t_table * rays_w[:, 1]
    with np.errstate(invalid="ignore"):
        on_table = np.isfinite(t_table) & (np.abs(hx) <= lx / 2) & (np.abs(hy) <= ly / 2)
    t_floor = _plane_t(eye, rays_w, -cfg.table_height)
    depth = np.where(on_table, t_table, t_floor).reshape(h, w)
    sem = np.where(on_table, TABLE, BACKGROUND).reshape(h, w)
    index = np.full((h, w), -1, dtype=np.int64)
    rays_w = rays_w.reshape(h, w, 3)
    for k, prim in enumerate(objects):
        win = _project_box(prim.corners(), pose, cam)
        if win is None:
            continue
        r0, c0, r1, c1 = win
        sub = rays_w[r0:r1, c0:c1].reshape(-1, 3)
        t = intersect(prim, eye, sub).reshape(r1 - r0, c1 - c0)
        cur = depth[r0:r1, c0:c1]
        nearer = t < cur
        cur[nearer] = t[nearer]
        index[r0:r1, c0:c1][nearer] = k
    sem = np.where(index >= 0, OBJECT, sem)
    valid = np.isfinite(depth)
    depth = np.where(valid, depth, 0.0)
    return depth, valid, index, sem


def _instances_from_index(index: np.ndarray, sem: np.ndarray):
    visible = np.unique(index[index >= 0])
    lab = np.where(sem == TABLE, TABLE, BACKGROUND).astype(np.int64)
    for new, k in enumerate(visible, start=FIRST_INSTANCE):
        lab[index == k] = new
    return InstanceLabelMap(lab), [int(k) for k in visible]


def _colors(rng, n: int) -> np.ndarray:
    return rng.integers(40, 256, size=(n, 3)).astype(np.uint8)


def render_view(objects, pose, cfg: SceneConfig, colors: np.ndarray) -> Scene:
    cam = cfg.camera()
    depth, valid, index, sem = render(objects, pose, cam, cfg)
    inst, visible = _instances_from_index(index, sem)
    rgb = np.empty(depth.shape + (3,), dtype=np.uint8)
    rgb[...] = (90, 90, 90)
    rgb[sem == TABLE] = (170, 140, 100)
    obj = index >= 0
    rgb[obj] = colors[index[obj]]
    rgb[~valid] = 0
    return Scene(depth, valid, inst, SemanticLabels(sem), rgb, cam, pose, list(objects), visible)


def generate_scene(cfg: SceneConfig, rng: np.random.Generator) -> Scene:
    """One annotated view of a random tabletop layout (see :func:`generate_views`)."""
    return generate_views(cfg, rng, 1)[0]


def generate_views(cfg: SceneConfig, rng: np.random.Generator, num_views: int | None = None) -> list[Scene]:
    """Sample a layout and render ``num_views`` camera views of it.

    If placement exhausts its retry budget, the layout is resampled from a
    generator seeded by the current one, so generation never fails.
    """
    n_views = cfg.views_per_scene if num_views is None else num_views
    while True:
        objects = place_objects(cfg, rng)
        if objects is not None:
            break
        rng = np.random.Generator(np.random.Philox(key=int(rng.integers(2**63))))
    colors = _colors(rng, len(objects))
    return [render_view(objects, sample_camera_pose(cfg, rng), cfg, colors) for _ in range(n_views)]


def apply_depth_noise(cloud: OrganizedPointCloud, ncfg: NoiseConfig, rng: np.random.Generator) -> OrganizedPointCloud:
    """Multiplicative gamma scale on every point, then smooth additive 3D noise.

    The whole XYZ vector is scaled, which equals scaling depth before
    backprojection. The additive term is a coarse Gaussian grid, one value
    per channel every ``gp_grid_downsample`` pixels, bilinearly upsampled.
    Draw order: the gamma scale, then the grid.
    """
    h, w = cloud.grid.shape
    g = rng.gamma(ncfg.gamma_shape, ncfg.gamma_scale)
    ds = ncfg.gp_grid_downsample
    gh, gw = (h - 1) // ds + 2, (w - 1) // ds + 2
    coarse = rng.standard_normal((gh, gw, 3)) * ncfg.gp_sigma
    xyz = cloud.xyz * g
    if ncfg.gp_sigma > 0:
        rows, cols = np.indices((h, w), dtype=np.float64)
        coords = [rows / ds, cols / ds]
        fine = np.stack(
            [ndimage.map_coordinates(coarse[..., k], coords, order=1) for k in range(3)], axis=-1
        )
        xyz = xyz + np.where(cloud.valid[..., None], fine, 0.0)
    return OrganizedPointCloud(xyz, cloud.valid)
