"""Grid construction, quadrature, and sensor-to-sphere projection."""

import numpy as np
import pytest

from sphereloc.errors import InvalidParameterError, ShapeMismatchError
from sphereloc.grid import (CameraView, PointCloud, assemble_feature,
                            build_grid, default_max_angle, project_cameras,
                            project_lidar)
from sphereloc.transforms import RigidTransform, look_rotation


class TestBuildGrid:
    def test_minimal_grid_nodes(self):
        grid = build_grid(1)
        assert grid.shape == (2, 2)
        np.testing.assert_allclose(grid.colatitudes, [0.0, np.pi / 2])
        np.testing.assert_allclose(grid.azimuths, [0.0, np.pi])

    def test_full_resolution_shape(self):
        grid = build_grid(100)
        assert grid.shape == (200, 200)
        assert grid.directions().shape == (200, 200, 3)

    @pytest.mark.parametrize("bandwidth", [1, 2, 8, 16, 33, 100])
    def test_constant_quadrature_is_sphere_area(self, bandwidth):
        grid = build_grid(bandwidth)
        area = grid.quadrature(np.ones(grid.shape))
        assert abs(area - 4 * np.pi) < 1e-8 * 4 * np.pi

    @pytest.mark.parametrize("bandwidth", [1, 2, 16])
    def test_ring_weights_sum_to_two(self, bandwidth):
        grid = build_grid(bandwidth)
        assert abs(grid.weights.sum() - 2.0) < 1e-12

    def test_low_degree_moment(self, grid16):
        # cos^2(theta) integrates to 4*pi/3 over the sphere.
        theta = grid16.colatitudes[:, None]
        value = grid16.quadrature(np.broadcast_to(np.cos(theta) ** 2, grid16.shape))
        assert abs(value - 4 * np.pi / 3) < 1e-10

    def test_angles_strictly_increasing_in_range(self, grid16):
        assert np.all(np.diff(grid16.colatitudes) > 0)
        assert np.all(np.diff(grid16.azimuths) > 0)
        assert grid16.colatitudes[0] == 0.0
        assert grid16.colatitudes[-1] < np.pi
        assert grid16.azimuths[-1] < 2 * np.pi

    @pytest.mark.parametrize("bad", [0, -3, 513])
    def test_bandwidth_bounds(self, bad):
        with pytest.raises(InvalidParameterError):
            build_grid(bad)

    @pytest.mark.parametrize("bad", [2.5, "8", True])
    def test_bandwidth_type(self, bad):
        with pytest.raises(InvalidParameterError):
            build_grid(bad)


def _brute_force_lidar(scan, grid, max_angle, k):
    """Reference nearest-measurement assignment by explicit angle scan."""
    pts = scan.points
    radii = np.linalg.norm(pts, axis=1)
    dirs = pts / radii[:, None]
    range_ch = np.zeros(grid.shape)
    intens_ch = np.zeros(grid.shape)
    grid_dirs = grid.directions()
    for j in range(grid.shape[0]):
        for kk in range(grid.shape[1]):
            cosang = np.clip(dirs @ grid_dirs[j, kk], -1.0, 1.0)
            ang = np.arccos(cosang)
            inside = np.flatnonzero(ang <= max_angle)
            if len(inside) == 0:
                continue
            nearest = inside[np.argsort(ang[inside], kind="stable")[:k]]
            range_ch[j, kk] = radii[nearest].mean()
            intens_ch[j, kk] = scan.intensities[nearest].mean()
    return range_ch, intens_ch


class TestProjectLidar:
    def test_single_point_lands_in_nearest_cell(self, grid16):
        scan = PointCloud(points=np.array([[10.0, 0.0, 0.0]]),
                          intensities=np.array([0.7]))
        range_ch, intens_ch = project_lidar(scan, RigidTransform.identity(), grid16)
        dots = grid16.directions() @ np.array([1.0, 0.0, 0.0])
        j, k = np.unravel_index(np.argmax(dots), grid16.shape)
        assert range_ch[j, k] == pytest.approx(10.0)
        assert intens_ch[j, k] == pytest.approx(0.7)
        ja, ka = np.unravel_index(np.argmin(dots), grid16.shape)
        assert range_ch[ja, ka] == 0.0

    def test_empty_scan_is_all_zero(self, grid16):
        scan = PointCloud(points=np.empty((0, 3)), intensities=np.empty(0))
        range_ch, intens_ch = project_lidar(scan, RigidTransform.identity(), grid16)
        assert not range_ch.any()
        assert not intens_ch.any()

    def test_matches_brute_force_nearest_neighbor(self, rng):
        grid = build_grid(8)
        pts = rng.normal(size=(10_000, 3))
        pts = pts[np.linalg.norm(pts, axis=1) > 1e-6]
        pts *= (rng.uniform(1.0, 40.0, size=len(pts)) /
                np.linalg.norm(pts, axis=1))[:, None]
        scan = PointCloud(points=pts, intensities=rng.uniform(0, 1, len(pts)))
        max_angle = default_max_angle(grid)
        got_r, got_i = project_lidar(scan, RigidTransform.identity(), grid, k=1)
        want_r, want_i = _brute_force_lidar(scan, grid, max_angle, k=1)
        np.testing.assert_allclose(got_r, want_r, atol=1e-9)
        np.testing.assert_allclose(got_i, want_i, atol=1e-9)

    def test_point_order_is_irrelevant(self, grid16, rng):
        pts = rng.uniform(-20, 20, size=(500, 3))
        intens = rng.uniform(0, 1, 500)
        scan = PointCloud(points=pts, intensities=intens)
        perm = rng.permutation(500)
        shuffled = PointCloud(points=pts[perm], intensities=intens[perm])
        a = project_lidar(scan, RigidTransform.identity(), grid16, k=3)
        b = project_lidar(shuffled, RigidTransform.identity(), grid16, k=3)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_duplicated_points_change_nothing(self, grid16, rng):
        pts = rng.uniform(-20, 20, size=(300, 3))
        intens = rng.uniform(0, 1, 300)
        scan = PointCloud(points=pts, intensities=intens)
        doubled = PointCloud(points=np.concatenate([pts, pts]),
                             intensities=np.concatenate([intens, intens]))
        a = project_lidar(scan, RigidTransform.identity(), grid16, k=1)
        b = project_lidar(doubled, RigidTransform.identity(), grid16, k=1)
        np.testing.assert_allclose(a[0], b[0], atol=1e-12)
        np.testing.assert_allclose(a[1], b[1], atol=1e-12)

    def test_grid_step_yaw_rolls_the_channel(self, rng):
        grid = build_grid(16)
        pts = rng.uniform(-25, 25, size=(4000, 3))
        scan = PointCloud(points=pts, intensities=rng.uniform(0, 1, 4000))
        base, _ = project_lidar(scan, RigidTransform.identity(), grid)
        steps = 3
        spin = RigidTransform.yaw(steps * np.pi / grid.bandwidth)
        spun = PointCloud(points=spin.rotate(pts), intensities=scan.intensities)
        rotated, _ = project_lidar(spun, RigidTransform.identity(), grid)
        rolled = np.roll(base, steps, axis=1)
        mismatched = np.abs(rotated - rolled) > 1e-9
        # Floating-point ties at cell borders may flip the odd assignment.
        assert mismatched.mean() < 1e-3

    def test_extrinsic_offsets_the_range(self, grid16):
        scan = PointCloud(points=np.array([[5.0, 0.0, 0.0]]),
                          intensities=np.array([1.0]))
        lift = RigidTransform(rotation=np.eye(3),
                              translation=np.array([5.0, 0.0, 0.0]))
        range_ch, _ = project_lidar(scan, lift, grid16)
        assert range_ch.max() == pytest.approx(10.0)

    def test_parameter_validation(self, grid16):
        scan = PointCloud(points=np.array([[1.0, 0.0, 0.0]]),
                          intensities=np.array([1.0]))
        with pytest.raises(InvalidParameterError):
            project_lidar(scan, RigidTransform.identity(), grid16, max_angle=0.0)
        with pytest.raises(InvalidParameterError):
            project_lidar(scan, RigidTransform.identity(), grid16, k=0)


def _forward_camera(image, hfov=np.pi / 2):
    h, w = image.shape
    fx = w / (2 * np.tan(hfov / 2))
    return CameraView(image=image, fx=fx, fy=fx,
                      cx=(w - 1) / 2, cy=(h - 1) / 2,
                      extrinsic=RigidTransform(
                          rotation=look_rotation([1.0, 0.0, 0.0]),
                          translation=np.zeros(3)))


class TestProjectCameras:
    def test_constant_image_fills_covered_cells(self, grid16):
        view = _forward_camera(np.full((48, 64), 0.5))
        channel = project_cameras([view], grid16)
        covered = channel != 0
        assert covered.any()
        np.testing.assert_allclose(channel[covered], 0.5)

    def test_two_identical_cameras_average_to_one(self, grid16, rng):
        image = rng.uniform(0.1, 1.0, size=(48, 64))
        view = _forward_camera(image)
        one = project_cameras([view], grid16)
        two = project_cameras([view, view], grid16)
        np.testing.assert_allclose(one, two, atol=1e-12)

    def test_no_views_is_all_zero(self, grid16):
        assert not project_cameras([], grid16).any()

    def test_ring_covers_more_than_single_camera(self, grid16, rng):
        image = rng.uniform(0.2, 1.0, size=(48, 64))
        single = [_forward_camera(image)]
        ring = []
        for yaw in (0.0, np.pi / 2, np.pi, 3 * np.pi / 2):
            forward = np.array([np.cos(yaw), np.sin(yaw), 0.0])
            ring.append(CameraView(image=image, fx=single[0].fx, fy=single[0].fy,
                                   cx=single[0].cx, cy=single[0].cy,
                                   extrinsic=RigidTransform(
                                       rotation=look_rotation(forward),
                                       translation=np.zeros(3))))
        few = np.count_nonzero(project_cameras(single, grid16))
        many = np.count_nonzero(project_cameras(ring, grid16))
        assert many > few


class TestAssembleFeature:
    def test_zero_channels_are_valid(self, grid16):
        zeros = np.zeros(grid16.shape)
        fs = assemble_feature(zeros, zeros, zeros, grid16)
        assert fs.shape == (3,) + grid16.shape
        assert not fs.channels.any()

    def test_channel_order_is_fixed(self, grid16):
        photo = np.full(grid16.shape, 1.0)
        rng_ch = np.full(grid16.shape, 2.0)
        intens = np.full(grid16.shape, 3.0)
        fs = assemble_feature(photo, rng_ch, intens, grid16)
        assert fs.channel(0)[0, 0] == 1.0
        assert fs.channel(1)[0, 0] == 2.0
        assert fs.channel(2)[0, 0] == 3.0

    def test_full_resolution_shape(self):
        grid = build_grid(100)
        zeros = np.zeros(grid.shape)
        assert assemble_feature(zeros, zeros, zeros, grid).shape == (3, 200, 200)

    def test_mismatched_shapes_raise(self, grid16):
        ok = np.zeros(grid16.shape)
        bad = np.zeros((8, 8))
        with pytest.raises(ShapeMismatchError):
            assemble_feature(ok, bad, ok, grid16)
