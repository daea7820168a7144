"""On-disk formats: PNG rasters, direction-field files, camera and pose JSON.

Dataset layout::

    <root>/camera.json                 fx, fy, cx, cy, width, height
    <root>/<scene>/depth.png           uint16, millimeters, 0 = no reading
    <root>/<scene>/label.png           uint16, 0 background, 1 table, >= 2 objects
    <root>/<scene>/semantic.png        uint8 (optional)
    <root>/<scene>/rgb.png             uint8 RGB (optional)
    <root>/<scene>/pose.json           camera-to-world 4x4 (optional)

A ``camera.json`` inside a scene directory overrides the root one.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .core import InstanceLabelMap, InvariantError
from .geometry import PinholeCamera

MAGIC = b"UOIS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sBIII")
MM_PER_M = 1000.0
DEPTH_MAX_MM = 65535


class DataError(ValueError):
    """Input file missing, unreadable or ill-formed."""


def _open(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.array(im)
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    except OSError as exc:
        raise DataError(f"{path}: cannot read image ({exc})") from None


def write_png16(path, array: np.ndarray) -> None:
    a = np.asarray(array)
    if a.ndim != 2:
        raise ValueError("16-bit PNGs are single channel")
    if a.size and (a.min() < 0 or a.max() > 65535):
        raise ValueError("values do not fit in 16 bits")
    Image.fromarray(a.astype(np.uint16)).save(path)


def read_png16(path) -> np.ndarray:
    a = _open(Path(path))
    if a.ndim != 2:
        raise DataError(f"{path}: expected a single-channel image, got shape {a.shape}")
    return a.astype(np.int64)


def write_png8(path, array: np.ndarray) -> None:
    a = np.asarray(array)
    if a.size and (a.min() < 0 or a.max() > 255):
        raise ValueError("values do not fit in 8 bits")
    Image.fromarray(a.astype(np.uint8)).save(path)


def read_rgb(path) -> np.ndarray:
    a = _open(Path(path))
    if a.ndim == 2:
        a = np.repeat(a[..., None], 3, axis=2)
    if a.ndim != 3 or a.shape[2] < 3:
        raise DataError(f"{path}: expected an RGB image, got shape {a.shape}")
    return a[..., :3].astype(np.uint8)


def read_mask(path) -> np.ndarray:
    a = _open(Path(path))
    if a.ndim == 3:
        a = a[..., 0]
    return a > 0


def depth_to_mm(depth: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Meters to rounded millimeters; invalid or nonpositive readings become 0."""
    d = np.asarray(depth, dtype=np.float64)
    ok = np.isfinite(d) & (d > 0)
    if valid is not None:
        ok &= np.asarray(valid, bool)
    mm = np.zeros(d.shape, dtype=np.int64)
    mm[ok] = np.clip(np.floor(d[ok] * MM_PER_M + 0.5), 1, DEPTH_MAX_MM)
    return mm


def mm_to_depth(mm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mm = np.asarray(mm)
    valid = mm > 0
    return np.where(valid, mm / MM_PER_M, 0.0), valid


def write_depth(path, depth: np.ndarray, valid: np.ndarray | None = None) -> None:
    write_png16(path, depth_to_mm(depth, valid))


def read_depth(path) -> tuple[np.ndarray, np.ndarray]:
    """Depth in meters and its validity mask."""
    return mm_to_depth(read_png16(path))


def write_labels(path, instances: InstanceLabelMap) -> None:
    write_png16(path, instances.labels)


def read_labels(path, strict: bool = False) -> InstanceLabelMap:
    """Instance map from a 16-bit PNG; gaps in the ids are closed unless ``strict``."""
    lab = read_png16(path)
    try:
        return InstanceLabelMap(lab) if strict else InstanceLabelMap.compact(lab)
    except InvariantError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_direction_file(path, data: np.ndarray) -> None:
    """HxWxC float raster as ``UOIS`` header plus little-endian float32 payload."""
    a = np.asarray(data, dtype=np.float64)
    if a.ndim == 2:
        a = a[..., None]
    if a.ndim != 3:
        raise ValueError("expected an HxW or HxWxC array")
    h, w, c = a.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, h, w, c))
        fh.write(a.astype("<f4").tobytes(order="C"))


def read_direction_file(path) -> np.ndarray:
    try:
        blob = Path(path).read_bytes()
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    if len(blob) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, version, h, w, c = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * h * w * c
    if len(blob) != expected:
        raise DataError(f"{path}: payload is {len(blob) - _HEADER.size} bytes, header implies {expected - _HEADER.size}")
    arr = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(h, w, c)
    return arr.astype(np.float64)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None


def read_camera(path) -> PinholeCamera:
    d = read_json(path)
    try:
        return PinholeCamera.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: bad intrinsics ({exc})") from None


def write_pose(path, pose: np.ndarray) -> None:
    write_json(path, {"camera_to_world": np.asarray(pose, dtype=np.float64).tolist()})


def read_pose(path) -> np.ndarray:
    pose = np.asarray(read_json(path).get("camera_to_world"), dtype=np.float64)
    if pose.shape != (4, 4):
        raise DataError(f"{path}: camera_to_world must be 4x4")
    return pose


@dataclass(frozen=True, eq=False)
class SceneRecord:
    name: str
    depth: np.ndarray
    valid: np.ndarray
    camera: PinholeCamera
    labels: InstanceLabelMap | None = None
    rgb: np.ndarray | None = None


def list_scenes(root) -> list[str]:
    """Scene directory names (those holding a depth or label image), sorted."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: not a directory")
    return sorted(
        p.name for p in root.iterdir()
        if p.is_dir() and ((p / "depth.png").exists() or (p / "label.png").exists())
    )


def scene_camera(root, name: str) -> PinholeCamera:
    local = Path(root) / name / "camera.json"
    return read_camera(local if local.exists() else Path(root) / "camera.json")


def load_scene(root, name: str, need_labels: bool = False) -> SceneRecord:
    d = Path(root) / name
    depth, valid = read_depth(d / "depth.png")
    cam = scene_camera(root, name)
    if cam.grid.shape != depth.shape:
        raise DataError(f"{d}: depth is {depth.shape} but camera.json says {cam.grid.shape}")
    labels = None
    if need_labels or (d / "label.png").exists():
        labels = read_labels(d / "label.png")
        if labels.labels.shape != depth.shape:
            raise DataError(f"{d}: label and depth sizes differ")
    rgb = read_rgb(d / "rgb.png") if (d / "rgb.png").exists() else None
    if rgb is not None and rgb.shape[:2] != depth.shape:
        raise DataError(f"{d}: rgb and depth sizes differ")
    return SceneRecord(name, depth, valid, cam, labels, rgb)
