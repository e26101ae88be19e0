import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import pdist
from scipy.spatial.transform import Rotation

from lumenpoint.camera import CameraIntrinsics
from lumenpoint.errors import EmptyCloud, NotARotation, ZeroDepthTarget
from lumenpoint.panorama import MISSING
from lumenpoint.pointcloud import (PointCloud, RenderingRelation, downsample_uniform,
                                   project_equirect, recenter, rotate, transform)

from conftest import random_cloud

K = CameraIntrinsics(100.0, 100.0, 32.0, 24.0)
ROT_Z90 = np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 1]])
ROT_Y90 = np.array([[0.0, 0, 1], [0, 1, 0], [-1, 0, 0]])


def one_point(p, c=(1, 1, 1)):
    return PointCloud(np.array([p], float), np.array([c], float))


def test_full_recenter_maps_target_to_origin():
    rel = RenderingRelation((32, 24), scale_factor=1.0)
    out = recenter(one_point((0, 0, 2)), rel, K, 2.0)
    np.testing.assert_allclose(out.positions, [[0, 0, 0]], atol=0)


def test_recenter_with_095_leaves_residual_offset():
    rel = RenderingRelation((32, 24))
    assert rel.scale_factor == 0.95
    out = recenter(one_point((0, 0, 2)), rel, K, 2.0)
    np.testing.assert_allclose(out.positions, [[0, 0, 0.1]], atol=1e-12)


def test_recenter_off_axis_target_distance():
    rel = RenderingRelation((60, 5), scale_factor=0.95)
    t = np.array([(60 - 32) * 3.0 / 100, (5 - 24) * 3.0 / 100, 3.0])
    out = recenter(one_point(t), rel, K, 3.0)
    assert np.linalg.norm(out.positions[0]) == pytest.approx(0.05 * np.linalg.norm(t), rel=1e-12)


def test_recenter_preserves_pairwise_distances(rng):
    pc = random_cloud(rng, 200)
    out = recenter(pc, RenderingRelation((10, 40)), K, 2.5)
    np.testing.assert_allclose(pdist(out.positions), pdist(pc.positions), rtol=1e-9, atol=1e-9)


def test_recenter_zero_depth():
    with pytest.raises(ZeroDepthTarget):
        recenter(one_point((0, 0, 1)), RenderingRelation((1, 1)), K, 0.0)


def test_rotate_identity_and_axis_permutation(rng):
    pc = random_cloud(rng, 20)
    np.testing.assert_array_equal(rotate(pc, np.eye(3)).positions, pc.positions)
    out = rotate(one_point((1, 0, 0), (0.2, 0.3, 0.4)), ROT_Z90)
    np.testing.assert_allclose(out.positions, [[0, 1, 0]], atol=1e-15)
    np.testing.assert_array_equal(out.colors, [[0.2, 0.3, 0.4]])


def test_rotate_preserves_norms(rng):
    pc = random_cloud(rng, 1000)
    rot = Rotation.random(random_state=7).as_matrix()
    out = rotate(pc, rot)
    dev = np.abs(np.linalg.norm(out.positions, axis=1) - np.linalg.norm(pc.positions, axis=1))
    assert dev.max() <= 1e-6


@pytest.mark.parametrize("bad", [np.diag([1.0, 1, -1]), 1.1 * np.eye(3),
                                 np.array([[1.0, 0.1, 0], [0, 1, 0], [0, 0, 1]])])
def test_rotate_rejects_non_rotations(bad):
    with pytest.raises(NotARotation):
        rotate(one_point((1, 2, 3)), bad)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.05, 1.0),
       u=st.floats(0, 63), v=st.floats(0, 47), d=st.floats(0.1, 10))
def test_transform_is_isometry_and_places_target(seed, scale, u, v, d):
    rng = np.random.default_rng(seed)
    pc = random_cloud(rng, 30)
    rot = Rotation.random(random_state=seed % 1000).as_matrix()
    rel = RenderingRelation((u, v), scale, rot)
    out = transform(pc, rel, K, d)
    np.testing.assert_allclose(pdist(out.positions), pdist(pc.positions), rtol=1e-9, atol=1e-12)
    t = np.array([(u - K.cx) * d / K.fx, (v - K.cy) * d / K.fy, d])
    tgt = transform(one_point(t), rel, K, d).positions[0]
    assert np.linalg.norm(tgt) == pytest.approx((1 - scale) * np.linalg.norm(t), rel=1e-9, abs=1e-12)


def test_downsample_full_is_permutation(rng):
    pc = random_cloud(rng, 1000)
    out = downsample_uniform(pc, 1000, seed=3)
    assert len(out) == 1000
    a = np.lexsort(pc.positions.T)
    b = np.lexsort(out.positions.T)
    np.testing.assert_array_equal(pc.positions[a], out.positions[b])


def test_downsample_full_frame_to_1280():
    n = 1_310_720
    pc = PointCloud(np.arange(3 * n, dtype=float).reshape(n, 3), np.zeros((n, 3)))
    assert len(downsample_uniform(pc, 1280, seed=0)) == 1280


def test_downsample_deterministic_and_seed_dependent(rng):
    pc = random_cloud(rng, 5000)
    a = downsample_uniform(pc, 100, seed=11)
    b = downsample_uniform(pc, 100, seed=11)
    c = downsample_uniform(pc, 100, seed=12)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, c.positions)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 60), m=st.integers(1, 80), seed=st.integers(0, 1000))
def test_downsample_is_sub_multiset(n, m, seed):
    rng = np.random.default_rng(seed)
    pos = rng.integers(0, 4, (m, 3)).astype(float)  # duplicates on purpose
    pc = PointCloud(pos, np.zeros((m, 3)))
    out = downsample_uniform(pc, n, seed)
    assert len(out) == min(n, m)
    rows, counts = np.unique(pos, axis=0, return_counts=True)
    have = dict(zip(map(tuple, rows), counts))
    orows, ocounts = np.unique(out.positions, axis=0, return_counts=True)
    for r, c in zip(map(tuple, orows), ocounts):
        assert have[r] >= c


def test_downsample_empty():
    with pytest.raises(EmptyCloud):
        downsample_uniform(PointCloud(np.zeros((0, 3)), np.zeros((0, 3))), 5, 0)


def test_project_single_forward_point():
    env = project_equirect(one_point((0, 0, 5), (0.5, 0.6, 0.7)), 16, 8)
    colored = np.argwhere(~env.missing_mask)
    np.testing.assert_array_equal(colored, [[4, 8]])  # (row, col) = (height/2, width/2)
    np.testing.assert_allclose(env.pixels[4, 8], [0.5, 0.6, 0.7])
    assert (env.pixels[env.missing_mask] == MISSING).all()


def test_project_antipodal_points_half_width_apart():
    pc = PointCloud(np.array([[1.0, 0.2, 0.3], [-1.0, -0.2, -0.3]]), np.ones((2, 3)))
    env = project_equirect(pc, 32, 16)
    (r1, c1), (r2, c2) = np.argwhere(~env.missing_mask)
    assert abs(c1 - c2) == 16


def test_project_averages_colors():
    pc = PointCloud(np.array([[0, 0, 1.0], [0, 0, 2.0]]), np.array([[1, 0, 0], [0, 1, 0.0]]))
    env = project_equirect(pc, 16, 8)
    np.testing.assert_allclose(env.pixels[4, 8], [0.5, 0.5, 0])


def test_project_dense_sphere_coverage(rng):
    d = rng.normal(size=(100_000, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    env = project_equirect(PointCloud(d, np.ones_like(d)), 64, 32)
    assert (~env.missing_mask).mean() >= 0.99


def test_project_skips_points_at_origin(caplog):
    pc = PointCloud(np.array([[0, 0, 0.0], [0, 0, 1.0]]), np.ones((2, 3)))
    env = project_equirect(pc, 8, 4)
    assert env.meta["skipped_at_origin"] == 1
    assert (~env.missing_mask).sum() == 1


def test_project_rotation_about_vertical_is_column_shift(rng):
    pc = random_cloud(rng, 3000)
    w, h = 64, 32
    a = project_equirect(pc, w, h)
    b = project_equirect(rotate(pc, ROT_Y90), w, h)
    np.testing.assert_allclose(b.pixels, np.roll(a.pixels, w // 4, axis=1))
