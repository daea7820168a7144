import math

import numpy as np
import pytest

from uois.core import FIRST_INSTANCE, OBJECT, TABLE, InvariantError
from uois.geometry import backproject
from uois.rng import substream
from uois.scenegen import (
    NoiseConfig,
    Primitive,
    SceneConfig,
    apply_depth_noise,
    footprint_overlap,
    generate_scene,
    generate_views,
    intersect,
    intersect_box,
    intersect_cylinder,
    intersect_sphere,
    place_objects,
    sample_camera_pose,
)

SMALL = SceneConfig(resolution=(160, 120), object_count_range=(3, 8))


def _world_points(scene):
    cloud = backproject(scene.depth, scene.camera, scene.valid)
    pts = cloud.xyz @ scene.pose[:3, :3].T + scene.pose[:3, 3]
    return pts, cloud.valid


def test_config_invariants():
    for bad in ({"object_count_range": (5, 2)}, {"resolution": (0, 10)}, {"primitives": ("torus",)},
                {"max_footprint_overlap": 0.8}, {"views_per_scene": 0}):
        with pytest.raises(InvariantError):
            SceneConfig(**bad)
    with pytest.raises(InvariantError):
        NoiseConfig(gamma_shape=10.0, gamma_scale=1.0)


def test_ray_hits_match_closed_forms():
    o = np.array([0.0, 0.0, 1.0])
    down = np.array([[0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    t = intersect_sphere(o, down, (0.0, 0.0, 0.1), 0.1)
    assert t[0] == pytest.approx(0.8) and math.isinf(t[1])
    assert intersect_cylinder(o, down, (0.0, 0.0, 0.0), 0.05, 0.3)[0] == pytest.approx(0.7)
    assert intersect_box(o, down, (0.0, 0.0, 0.0), (0.1, 0.1), 0.2, 0.3)[0] == pytest.approx(0.8)
    side = np.array([[1.0, 0.0, 0.0]])
    o2 = np.array([-1.0, 0.0, 0.05])
    assert intersect_box(o2, side, (0.0, 0.0, 0.0), (0.1, 0.2), 0.1, 0.0)[0] == pytest.approx(0.9)
    assert intersect_box(o2, side, (0.0, 0.0, 0.0), (0.1, 0.2), 0.1, math.pi / 2)[0] == pytest.approx(0.8)
    assert intersect_cylinder(o2, side, (0.0, 0.0, 0.0), 0.05, 0.1)[0] == pytest.approx(0.95)


def test_sphere_rests_on_its_base():
    p = Primitive("sphere", (0.0, 0.0, 0.0), (0.05,))
    assert p.top == pytest.approx(0.1)
    t = intersect(p, np.array([0.0, 0.0, 1.0]), np.array([[0.0, 0.0, -1.0]]))
    assert t[0] == pytest.approx(0.9)


def test_footprint_overlap():
    a = Primitive("cylinder", (0.0, 0.0, 0.0), (0.05, 0.1))
    assert footprint_overlap(a, a) == pytest.approx(1.0)
    far = Primitive("cylinder", (0.2, 0.0, 0.0), (0.05, 0.1))
    assert footprint_overlap(a, far) == 0.0
    near = Primitive("cylinder", (0.12, 0.0, 0.0), (0.05, 0.1))
    assert footprint_overlap(a, near) == 0.0 and footprint_overlap(a, near, 0.04) > 0


def test_layout_respects_table_and_gap():
    cfg = SceneConfig()
    for seed in range(20):
        objs = place_objects(cfg, substream(seed))
        if objs is None:
            continue
        lo, hi = cfg.object_count_range
        assert lo <= len(objs) <= hi
        for i, a in enumerate(objs):
            assert abs(a.center[0]) + a.footprint_radius <= cfg.table_extent[0] / 2 + 1e-12
            assert abs(a.center[1]) + a.footprint_radius <= cfg.table_extent[1] / 2 + 1e-12
            for b in objs[:i]:
                assert footprint_overlap(a, b, cfg.footprint_gap) <= cfg.max_footprint_overlap + 1e-12


def test_camera_pose_is_rigid_and_above_table():
    for seed in range(20):
        pose = sample_camera_pose(SceneConfig(), substream(seed))
        rot = pose[:3, :3]
        assert np.allclose(rot.T @ rot, np.eye(3), atol=1e-12)
        assert np.linalg.det(rot) == pytest.approx(1.0)
        assert pose[2, 3] > 0 and rot[2, 2] < 0  # looking down


def test_generation_is_deterministic():
    a = generate_scene(SMALL, substream(5))
    b = generate_scene(SMALL, substream(5))
    assert np.array_equal(a.depth, b.depth) and a.instances == b.instances
    assert np.array_equal(a.rgb, b.rgb)
    c = generate_scene(SMALL, substream(6))
    assert not np.array_equal(a.depth, c.depth)


def test_annotations_agree_with_geometry():
    for seed in range(4):
        s = generate_scene(SMALL, substream(seed))
        lab, sem = s.instances.labels, s.semantic.labels
        assert np.array_equal(lab >= FIRST_INSTANCE, sem == OBJECT)
        assert np.array_equal(lab == TABLE, sem == TABLE)
        assert len(s.visible_objects) == s.instances.num_instances
        pts, valid = _world_points(s)
        assert valid.all()
        # table pixels lie on z = 0, object pixels above it
        assert np.allclose(pts[sem == TABLE][:, 2], 0.0, atol=1e-9)
        if (sem == OBJECT).any():
            assert pts[sem == OBJECT][:, 2].min() > -1e-9
        assert np.all(s.depth > 0)


def test_views_share_the_layout():
    cfg = SceneConfig(resolution=(160, 120), object_count_range=(3, 5), views_per_scene=3)
    views = generate_views(cfg, substream(1))
    assert len(views) == 3
    assert all(v.objects == views[0].objects for v in views)
    assert not np.array_equal(views[0].pose, views[1].pose)


def test_depth_noise_keeps_validity_and_is_seeded():
    s = generate_scene(SMALL, substream(2))
    cloud = backproject(s.depth, s.camera, s.valid)
    ncfg = NoiseConfig()
    a = apply_depth_noise(cloud, ncfg, substream(9))
    b = apply_depth_noise(cloud, ncfg, substream(9))
    assert np.array_equal(a.xyz, b.xyz)
    assert np.array_equal(a.valid, cloud.valid)
    assert not np.array_equal(a.xyz, cloud.xyz)
    pure = apply_depth_noise(cloud, NoiseConfig(gp_sigma=0.0), substream(9))
    ratio = pure.xyz[cloud.valid][:, 2] / cloud.xyz[cloud.valid][:, 2]
    assert np.allclose(ratio, ratio[0])
    assert np.allclose(pure.xyz, cloud.xyz * ratio[0])
