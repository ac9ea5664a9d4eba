import numpy as np
import pytest

from dynview.errors import GeometryError
from dynview.geometry import (
    Camera,
    CameraIntrinsics,
    CameraPose,
    SamplingGrid,
    backproject,
    bilinear_sample,
    bilinear_weights,
    make_depth_schedule,
    plane_warp_grid,
    project,
)


def random_pose(rng):
    # random rotation via QR, sign-fixed to det = +1
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return CameraPose(R=q, t=rng.standard_normal(3))


def random_camera(rng, width=32, height=24):
    k = CameraIntrinsics(fx=rng.uniform(20, 60), fy=rng.uniform(20, 60),
                         cx=(width - 1) / 2 + rng.uniform(-2, 2),
                         cy=(height - 1) / 2 + rng.uniform(-2, 2),
                         width=width, height=height)
    return Camera(k, random_pose(rng))


class TestIntrinsics:
    def test_rejects_nonpositive_focal(self):
        with pytest.raises(GeometryError):
            CameraIntrinsics(fx=0, fy=1, cx=0, cy=0, width=4, height=4)
        with pytest.raises(GeometryError):
            CameraIntrinsics(fx=1, fy=-2, cx=0, cy=0, width=4, height=4)

    def test_scaled_keeps_pixel_centers(self):
        k = CameraIntrinsics(fx=64, fy=64, cx=31.5, cy=31.5, width=64, height=64)
        s = k.scaled(2)
        assert s.width == 32 and s.height == 32
        assert s.fx == 32 and s.fy == 32
        # center of the full image must stay the center of the scaled image
        assert s.cx == pytest.approx((31.5 + 0.5) / 2 - 0.5)

    def test_cropped_shifts_principal_point(self):
        k = CameraIntrinsics(fx=50, fy=50, cx=31.5, cy=31.5, width=64, height=64)
        c = k.cropped(8, 4, 16, 16)
        assert (c.cx, c.cy) == (31.5 - 8, 31.5 - 4)
        assert (c.width, c.height) == (16, 16)
        assert (c.fx, c.fy) == (k.fx, k.fy)


class TestPose:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(GeometryError):
            CameraPose(R=np.eye(3) * 2.0, t=np.zeros(3))

    def test_rejects_reflection(self):
        R = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(GeometryError):
            CameraPose(R=R, t=np.zeros(3))

    def test_center_inverts_extrinsics(self):
        rng = np.random.default_rng(3)
        pose = random_pose(rng)
        c = pose.center
        assert np.allclose(pose.R @ c + pose.t, 0.0, atol=1e-12)


class TestCameraJson:
    def test_round_trip(self):
        rng = np.random.default_rng(7)
        cam = random_camera(rng)
        back = Camera.loads(cam.dumps())
        assert np.allclose(back.pose.R, cam.pose.R)
        assert np.allclose(back.pose.t, cam.pose.t)
        assert back.intrinsics == cam.intrinsics


class TestDepthSchedule:
    def test_endpoints_exact_and_monotone(self):
        s = make_depth_schedule(1.5, 12.0, 8)
        assert s.depths[0] == 1.5 and s.depths[-1] == 12.0
        assert np.all(np.diff(s.depths) > 0)

    def test_uniform_in_inverse_depth(self):
        s = make_depth_schedule(2.0, 10.0, 16)
        inv = 1.0 / s.depths
        assert np.allclose(np.diff(inv), inv[1] - inv[0], atol=1e-12)

    def test_invalid_ranges(self):
        with pytest.raises(GeometryError):
            make_depth_schedule(-1.0, 5.0, 4)
        with pytest.raises(GeometryError):
            make_depth_schedule(5.0, 2.0, 4)
        with pytest.raises(GeometryError):
            make_depth_schedule(1.0, 5.0, 1)


class TestProjectBackproject:
    def test_round_trip_many_cameras(self):
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(50):
            cam = random_camera(rng)
            u = rng.uniform(0, 31, size=200)
            v = rng.uniform(0, 23, size=200)
            z = rng.uniform(0.5, 20, size=200)
            world = backproject(cam, u, v, z)
            u2, v2, z2 = project(cam, world)
            worst = max(worst, np.abs(u2 - u).max(), np.abs(v2 - v).max(),
                        np.abs(z2 - z).max())
        assert worst < 1e-9

    def test_scalar_api(self):
        rng = np.random.default_rng(0)
        cam = random_camera(rng)
        p = backproject(cam, 3.0, 4.0, 2.5)
        assert p.shape == (3,)
        u, v, z = project(cam, p)
        assert (u, v, z) == (pytest.approx(3.0), pytest.approx(4.0),
                             pytest.approx(2.5))

    def test_degenerate_depth_raises(self):
        cam = Camera(CameraIntrinsics(10, 10, 1, 1, 4, 4),
                     CameraPose(R=np.eye(3), t=np.zeros(3)))
        with pytest.raises(GeometryError):
            project(cam, np.array([0.0, 0.0, 0.0]))
        with pytest.raises(GeometryError):
            backproject(cam, 0.0, 0.0, -1.0)


class TestPlaneWarpGrid:
    def test_identity_cameras_identity_grid(self):
        rng = np.random.default_rng(5)
        cam = random_camera(rng)
        for depth in (1.0, 3.7):
            g = plane_warp_grid(cam, cam, depth)
            uu, vv = np.meshgrid(np.arange(cam.intrinsics.width, dtype=float),
                                 np.arange(cam.intrinsics.height, dtype=float))
            assert np.allclose(g.x, uu, atol=1e-9)
            assert np.allclose(g.y, vv, atol=1e-9)
            assert np.allclose(g.z, depth, atol=1e-9)

    def test_matches_per_pixel_oracle(self):
        # brute force: backproject each target pixel to the plane, transform,
        # project into the source camera
        rng = np.random.default_rng(13)
        worst = 0.0
        for _ in range(100):
            src = random_camera(rng)
            tgt = random_camera(rng)
            for depth in (0.8, 2.5, 9.0):
                g = plane_warp_grid(src, tgt, depth)
                k = tgt.intrinsics
                for _check in range(5):
                    u = int(rng.integers(0, k.width))
                    v = int(rng.integers(0, k.height))
                    world = backproject(tgt, float(u), float(v), depth)
                    p_cam = src.pose.R @ world + src.pose.t
                    if abs(p_cam[2]) < 1e-6:
                        continue
                    sk = src.intrinsics
                    ex = sk.fx * p_cam[0] / p_cam[2] + sk.cx
                    ey = sk.fy * p_cam[1] / p_cam[2] + sk.cy
                    worst = max(worst, abs(g.x[v, u] - ex), abs(g.y[v, u] - ey))
        assert worst < 1e-6

    def test_nonpositive_depth_raises(self):
        rng = np.random.default_rng(2)
        cam = random_camera(rng)
        with pytest.raises(GeometryError):
            plane_warp_grid(cam, cam, 0.0)


class TestBilinear:
    def test_integer_grid_is_exact_lookup(self):
        rng = np.random.default_rng(21)
        img = rng.random((3, 6, 7)).astype(np.float32)
        xs, ys = np.meshgrid(np.arange(7, dtype=float), np.arange(6, dtype=float))
        g = SamplingGrid(x=xs, y=ys, z=np.ones_like(xs))
        out = bilinear_sample(img, g)
        assert np.allclose(out.reshape(3, 6, 7), img)

    def test_out_of_bounds_zero(self):
        img = np.ones((1, 4, 4), dtype=np.float32)
        x = np.array([[-1.0, 5.0, 2.0]])
        y = np.array([[2.0, 2.0, 99.0]])
        g = SamplingGrid(x=x, y=y, z=np.ones_like(x))
        out = bilinear_sample(img, g)
        assert np.all(out == 0.0)

    def test_behind_camera_zero(self):
        img = np.ones((1, 4, 4), dtype=np.float32)
        x = np.full((1, 2), 1.5)
        y = np.full((1, 2), 1.5)
        g = SamplingGrid(x=x, y=y, z=np.array([[1.0, -1.0]]))
        out = bilinear_sample(img, g).reshape(2)
        assert out[0] == 1.0 and out[1] == 0.0

    def test_weights_sum_to_one_inside(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 6, size=(5, 5))
        y = rng.uniform(0, 4, size=(5, 5))
        g = SamplingGrid(x=x, y=y, z=np.ones_like(x))
        _, _, _, _, w00, w01, w10, w11 = bilinear_weights(g, 5, 7)
        assert np.allclose(w00 + w01 + w10 + w11, 1.0)

    def test_interpolates_linear_image_exactly(self):
        # a bilinear sampler reproduces any affine ramp exactly
        yy, xx = np.mgrid[0:8, 0:9].astype(np.float64)
        img = (2.0 * xx + 3.0 * yy + 1.0)[None]
        rng = np.random.default_rng(4)
        x = rng.uniform(0, 8, size=(3, 3))
        y = rng.uniform(0, 7, size=(3, 3))
        g = SamplingGrid(x=x, y=y, z=np.ones_like(x))
        out = bilinear_sample(img, g).reshape(3, 3)
        assert np.allclose(out, 2.0 * x + 3.0 * y + 1.0, atol=1e-9)
