import json

import numpy as np
import pytest

from uois import io
from uois.core import ImageGrid, InstanceLabelMap
from uois.geometry import PinholeCamera


def test_png16_round_trip(tmp_path):
    a = np.array([[0, 1, 65535], [300, 2, 7]])
    io.write_png16(tmp_path / "a.png", a)
    assert np.array_equal(io.read_png16(tmp_path / "a.png"), a)
    with pytest.raises(ValueError):
        io.write_png16(tmp_path / "b.png", np.array([[70000]]))


def test_depth_round_trip_is_millimeter_exact(tmp_path):
    d = np.array([[0.5, 1.2345, 0.0], [np.nan, 70.0, 0.0004]])
    io.write_depth(tmp_path / "d.png", d)
    back, valid = io.read_depth(tmp_path / "d.png")
    assert valid.tolist() == [[True, True, False], [False, True, True]]
    assert back[0, 0] == 0.5 and back[0, 1] == pytest.approx(1.235)
    assert back[1, 1] == 65.535  # clipped at the 16-bit ceiling
    assert back[1, 2] == 0.001  # tiny but valid stays valid


def test_labels_are_compacted_unless_strict(tmp_path):
    lab = np.array([[0, 1, 5], [5, 9, 0]])
    io.write_png16(tmp_path / "l.png", lab)
    assert io.read_labels(tmp_path / "l.png").labels.tolist() == [[0, 1, 2], [2, 3, 0]]
    with pytest.raises(io.DataError):
        io.read_labels(tmp_path / "l.png", strict=True)
    io.write_labels(tmp_path / "m.png", InstanceLabelMap(np.array([[2, 3]])))
    assert io.read_labels(tmp_path / "m.png", strict=True).labels.tolist() == [[2, 3]]


def test_direction_file_round_trip_and_checks(tmp_path):
    d = np.random.default_rng(0).normal(size=(5, 7, 2)).astype(np.float32)
    p = tmp_path / "d.uois"
    io.write_direction_file(p, d)
    assert np.array_equal(io.read_direction_file(p), d.astype(np.float64))
    blob = p.read_bytes()
    (tmp_path / "bad_magic").write_bytes(b"XXXX" + blob[4:])
    (tmp_path / "bad_version").write_bytes(blob[:4] + b"\x02" + blob[5:])
    (tmp_path / "short").write_bytes(blob[:-4])
    (tmp_path / "tiny").write_bytes(blob[:5])
    for name, msg in (("bad_magic", "magic"), ("bad_version", "version"), ("short", "payload"), ("tiny", "header")):
        with pytest.raises(io.DataError, match=msg):
            io.read_direction_file(tmp_path / name)
    with pytest.raises(io.DataError, match="not found"):
        io.read_direction_file(tmp_path / "nope")


def test_unreadable_image_is_a_data_error(tmp_path):
    (tmp_path / "x.png").write_bytes(b"not a png")
    with pytest.raises(io.DataError):
        io.read_png16(tmp_path / "x.png")
    with pytest.raises(io.DataError):
        io.read_png16(tmp_path / "missing.png")


def test_camera_and_pose(tmp_path):
    cam = PinholeCamera.from_fov(45.0, ImageGrid(48, 64))
    io.write_json(tmp_path / "camera.json", cam.to_dict())
    assert io.read_camera(tmp_path / "camera.json") == cam
    (tmp_path / "bad.json").write_text(json.dumps({"fx": 1}))
    with pytest.raises(io.DataError):
        io.read_camera(tmp_path / "bad.json")
    pose = np.eye(4)
    pose[:3, 3] = (1, 2, 3)
    io.write_pose(tmp_path / "pose.json", pose)
    assert np.array_equal(io.read_pose(tmp_path / "pose.json"), pose)
    (tmp_path / "p2.json").write_text(json.dumps({"camera_to_world": [[1, 0], [0, 1]]}))
    with pytest.raises(io.DataError):
        io.read_pose(tmp_path / "p2.json")


def test_scene_listing_and_loading(tmp_path):
    cam = PinholeCamera.from_fov(45.0, ImageGrid(4, 6))
    io.write_json(tmp_path / "camera.json", cam.to_dict())
    (tmp_path / "s1").mkdir()
    (tmp_path / "junk").mkdir()
    io.write_depth(tmp_path / "s1" / "depth.png", np.full((4, 6), 0.8))
    io.write_png16(tmp_path / "s1" / "label.png", np.zeros((4, 6), int))
    assert io.list_scenes(tmp_path) == ["s1"]
    rec = io.load_scene(tmp_path, "s1", need_labels=True)
    assert rec.valid.all() and rec.labels.num_instances == 0 and rec.rgb is None
    io.write_depth(tmp_path / "s1" / "depth.png", np.full((5, 6), 0.8))
    with pytest.raises(io.DataError, match="camera.json"):
        io.load_scene(tmp_path, "s1")
    with pytest.raises(io.DataError):
        io.list_scenes(tmp_path / "nowhere")
