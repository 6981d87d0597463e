import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from suction_affordance.camera import CameraExtrinsics, CameraIntrinsics
from suction_affordance.errors import ConfigError, DomainError
from suction_affordance.scene import (BinSpec, PrimitiveObject, SceneConfig, SceneSpec, default_camera, intersect_bin,
                                      intersect_ray, intersect_rays, render_depth, render_depth_reference,
                                      sample_scene)


def axis_scene(objects, size=11, bin_size=(1.0, 1.0, 3.0)):
    """Camera at the bin opening looking down +z, with an odd image so the center pixel is on axis."""
    K = CameraIntrinsics(20.0, 20.0, size / 2, size / 2, size, size)
    return SceneSpec(0, BinSpec(bin_size), objects, K, CameraExtrinsics.identity())


def test_same_seed_same_scene():
    a, b = sample_scene(42), sample_scene(42)
    assert a.to_json() == b.to_json()
    assert sample_scene(43).to_json() != a.to_json()
    assert SceneSpec.from_json(a.to_json()).to_json() == a.to_json()


def test_adding_objects_keeps_earlier_draws():
    small = sample_scene(9, SceneConfig(count_range=(3, 3)))
    big = sample_scene(9, SceneConfig(count_range=(6, 6)))
    for o1, o2 in zip(small.objects, big.objects):
        assert o1.to_dict() == o2.to_dict()


def test_count_range_one():
    for seed in range(20):
        assert len(sample_scene(seed, SceneConfig(count_range=(1, 1))).objects) == 1


def test_thousand_scenes_stay_in_bin():
    cfg = SceneConfig()
    lo, hi = BinSpec(cfg.bin_size).lo, BinSpec(cfg.bin_size).hi
    n_objects = 0
    for seed in range(1000):
        for o in sample_scene(seed, cfg).objects:
            n_objects += 1
            assert np.all(o.translation >= lo) and np.all(o.translation <= hi)
            assert np.all(o.translation - o.aabb_half_extents() >= lo - 1e-12)
            assert np.all(o.translation + o.aabb_half_extents() <= hi + 1e-12)
    assert n_objects > 1000


def test_unsatisfiable_configs():
    with pytest.raises(ConfigError):
        sample_scene(0, SceneConfig(bin_size=(0.05, 0.05, 0.05)))
    with pytest.raises(ConfigError):
        sample_scene(-1)
    with pytest.raises(ConfigError):
        SceneConfig(count_range=(5, 2))


def test_intersect_ray_examples():
    sphere = PrimitiveObject(1, "sphere", (0.5,), translation=[0, 0, 2])
    assert intersect_ray([0, 0, 0], [0, 0, 1], sphere) == pytest.approx(1.5)
    assert intersect_ray([0, 0, 0], [0, 0, 1], PrimitiveObject(1, "sphere", (0.5,), translation=[5, 0, 2])) is None
    box = PrimitiveObject(2, "box", (0.5, 0.5, 0.5), translation=[0, 0, 2])
    assert intersect_ray([0, 0, 0], [0, 0, 1], box) == pytest.approx(1.5)
    cyl = PrimitiveObject(3, "cylinder", (0.5, 0.25), translation=[0, 0, 2])
    assert intersect_ray([0, 0, 0], [0, 0, 1], cyl) == pytest.approx(1.75)  # flat cap
    assert intersect_ray([-3, 0, 2], [1, 0, 0], cyl) == pytest.approx(2.5)  # curved side
    assert intersect_ray([0, 0, 2], [0, 0, 1], sphere) == pytest.approx(0.5)  # from inside
    with pytest.raises(DomainError):
        intersect_ray([0, 0, 0], [0, 0, 2], sphere)


def test_rotated_box_and_vectorized_agree():
    rng = np.random.default_rng(3)
    for shape, size in [("box", (0.1, 0.2, 0.05)), ("cylinder", (0.08, 0.15)), ("sphere", (0.12,))]:
        R = Rotation.random(random_state=rng).as_matrix()
        obj = PrimitiveObject(1, shape, size, R, [0.05, -0.02, 1.0])
        dirs = rng.normal([0, 0, 1], 0.12, (400, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        fast = intersect_rays(np.zeros(3), dirs, obj)
        for d, t in zip(dirs, fast):
            ref = intersect_ray([0, 0, 0], d.tolist(), obj)
            assert (ref is None and not np.isfinite(t)) or abs(ref - t) < 1e-9


def test_empty_bin_shows_back_wall():
    K, E = default_camera((0.4, 0.4, 0.5), image_size=(40, 40), standoff=0.5)
    spec = SceneSpec(0, BinSpec((0.4, 0.4, 0.5)), [], K, E)
    depth, seg = render_depth(spec)
    assert np.allclose(depth[10:30, 10:30], 1.0) and np.all(seg == 0)
    assert intersect_bin([0, 0, -0.5], [0, 0, 1.0], spec.bin) == pytest.approx(1.0)


def test_on_axis_sphere():
    spec = axis_scene([PrimitiveObject(7, "sphere", (0.5,), translation=[0, 0, 2])])
    depth, seg = render_depth(spec)
    assert depth[5, 5] == pytest.approx(1.5, abs=1e-12) and seg[5, 5] == 7


def test_nearer_object_wins_segmentation():
    objs = [PrimitiveObject(1, "sphere", (0.3,), translation=[0.1, 0, 2.0]),
            PrimitiveObject(2, "box", (0.2, 0.2, 0.2), translation=[-0.1, 0, 1.8])]
    spec = axis_scene(objs, size=21)
    depth, seg = render_depth(spec)
    ref_d, ref_s = render_depth_reference(spec)
    assert np.array_equal(seg, ref_s) and {1, 2} <= set(np.unique(seg))
    assert np.allclose(depth, ref_d, atol=1e-12, equal_nan=True)


def test_primitive_validation():
    with pytest.raises(DomainError):
        PrimitiveObject(0, "sphere", (0.1,))
    with pytest.raises(DomainError):
        PrimitiveObject(1, "cone", (0.1,))
    with pytest.raises(DomainError):
        PrimitiveObject(1, "box", (0.1, 0.1))
    o = PrimitiveObject(4, "cylinder", (0.1, 0.2))
    assert o.volume == pytest.approx(np.pi * 0.01 * 0.4)
    assert PrimitiveObject.from_dict(o.to_dict()).to_dict() == o.to_dict()
