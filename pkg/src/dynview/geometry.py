"""Camera models, projection and plane-induced warping.

Conventions (fixed for the whole package):

* Extrinsics are world-to-camera: ``p_cam = R @ p_world + t``.
* The camera looks down +z, x points right, y points down.
* Pixel (u, v) has u along the width axis; integer coordinates are pixel
  centers, so the image spans [0, W-1] x [0, H-1].
* Geometry runs in float64; image payloads are float32.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError

_ROT_TOL = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise GeometryError("image size must be at least 1x1")

    def scaled(self, factor: float) -> "CameraIntrinsics":
        """Intrinsics of the same camera at resolution scaled by 1/factor.

        Keeps pixel-center alignment: c' = (c + 0.5)/factor - 0.5.
        """
        return CameraIntrinsics(
            fx=self.fx / factor,
            fy=self.fy / factor,
            cx=(self.cx + 0.5) / factor - 0.5,
            cy=(self.cy + 0.5) / factor - 0.5,
            width=int(round(self.width / factor)),
            height=int(round(self.height / factor)),
        )

    def cropped(self, x0: int, y0: int, width: int, height: int) -> "CameraIntrinsics":
        """Intrinsics of the window [x0, x0+width) x [y0, y0+height)."""
        return CameraIntrinsics(
            fx=self.fx, fy=self.fy,
            cx=self.cx - x0, cy=self.cy - y0,
            width=width, height=height,
        )


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera rotation R (3x3) and translation t (3,)."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        if not np.allclose(R.T @ R, np.eye(3), atol=_ROT_TOL):
            raise GeometryError("R is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > _ROT_TOL:
            raise GeometryError("R is not a proper rotation (det != 1)")

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates (-R^T t)."""
        return -self.R.T @ self.t


@dataclass(frozen=True)
class Camera:
    intrinsics: CameraIntrinsics
    pose: CameraPose

    def to_json(self) -> dict:
        k = self.intrinsics
        return {
            "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
            "width": k.width, "height": k.height,
            "R": [float(x) for x in self.pose.R.reshape(-1)],
            "t": [float(x) for x in self.pose.t],
        }

    @staticmethod
    def from_json(obj: dict) -> "Camera":
        return Camera(
            CameraIntrinsics(obj["fx"], obj["fy"], obj["cx"], obj["cy"],
                             int(obj["width"]), int(obj["height"])),
            CameraPose(np.asarray(obj["R"], dtype=np.float64).reshape(3, 3),
                       np.asarray(obj["t"], dtype=np.float64)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @staticmethod
    def loads(s: str) -> "Camera":
        return Camera.from_json(json.loads(s))


@dataclass(frozen=True)
class DepthSchedule:
    """D plane depths between near and far, uniform in inverse depth."""

    near: float
    far: float
    count: int
    depths: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.asarray(self.depths, dtype=np.float64)
        object.__setattr__(self, "depths", d)
        if len(d) != self.count or np.any(np.diff(d) <= 0):
            raise GeometryError("depths must be strictly increasing with length count")


def make_depth_schedule(near: float, far: float, count: int) -> DepthSchedule:
    if not (0 < near < far):
        raise GeometryError(f"invalid depth range: near={near}, far={far}")
    if count < 2:
        raise GeometryError("need at least 2 planes")
    k = np.arange(count, dtype=np.float64)
    inv = 1.0 / near + k / (count - 1) * (1.0 / far - 1.0 / near)
    depths = 1.0 / inv
    depths[0] = near
    depths[-1] = far
    return DepthSchedule(near=near, far=far, count=count, depths=depths)


def project(camera: Camera, point):
    """Pinhole projection of world points into pixel coordinates.

    Accepts shape (3,) or (..., 3); returns (u, v, z) with z the camera-space
    depth (may be negative; the caller decides visibility).
    """
    p = np.asarray(point, dtype=np.float64)
    scalar = p.ndim == 1
    p_cam = p @ camera.pose.R.T + camera.pose.t
    z = p_cam[..., 2]
    if np.any(np.abs(z) < 1e-12):
        raise GeometryError("degenerate depth: |z| < 1e-12")
    k = camera.intrinsics
    u = k.fx * p_cam[..., 0] / z + k.cx
    v = k.fy * p_cam[..., 1] / z + k.cy
    if scalar:
        return float(u), float(v), float(z)
    return u, v, z


def backproject(camera: Camera, u, v, z):
    """Inverse of :func:`project`: pixel (u, v) at camera depth z > 0 to world.

    Accepts scalars or arrays (broadcast together); returns shape (..., 3).
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if np.any(z <= 0):
        raise GeometryError("backproject requires z > 0")
    k = camera.intrinsics
    x = (u - k.cx) / k.fx * z
    y = (v - k.cy) / k.fy * z
    p_cam = np.stack(np.broadcast_arrays(x, y, z), axis=-1)
    return (p_cam - camera.pose.t) @ camera.pose.R


@dataclass(frozen=True)
class SamplingGrid:
    """Continuous source-pixel coordinates for each target pixel.

    x, y, z have shape (H', W'); z is the source camera-space depth and is
    kept so the sampler can zero out behind-camera lookups.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    @property
    def shape(self):
        return self.x.shape


def plane_warp_grid(src: Camera, tgt: Camera, depth: float) -> SamplingGrid:
    """Sampling grid induced by the fronto-parallel plane at `depth` in the
    target frame: target pixel -> source pixel.

    Out-of-bounds and behind-camera coordinates are preserved in the grid.
    """
    if depth <= 0:
        raise GeometryError("plane depth must be positive")
    k = tgt.intrinsics
    uu, vv = np.meshgrid(
        np.arange(k.width, dtype=np.float64),
        np.arange(k.height, dtype=np.float64),
    )
    world = backproject(tgt, uu, vv, np.full_like(uu, depth))
    p_cam = world @ src.pose.R.T + src.pose.t
    z = p_cam[..., 2]
    safe_z = np.where(np.abs(z) < 1e-12, 1e-12, z)
    sk = src.intrinsics
    x = sk.fx * p_cam[..., 0] / safe_z + sk.cx
    y = sk.fy * p_cam[..., 1] / safe_z + sk.cy
    return SamplingGrid(x=x, y=y, z=z)


def bilinear_weights(grid: SamplingGrid, height: int, width: int):
    """Gather indices and weights for bilinear interpolation with zero padding.

    Returns (idx00, idx01, idx10, idx11, w00, w01, w10, w11) where indices are
    flat into an H*W image and all weights are zero for invalid lookups
    (outside [0, W-1] x [0, H-1] or with non-positive source depth).
    """
    x, y, z = grid.x, grid.y, grid.z
    eps = 1e-9      # tolerate round-off at the image border
    valid = (z > 0) & (x >= -eps) & (x <= width - 1 + eps) \
        & (y >= -eps) & (y <= height - 1 + eps)
    xc = np.clip(x, 0, width - 1)
    yc = np.clip(y, 0, height - 1)
    x0 = np.floor(xc).astype(np.int64)
    y0 = np.floor(yc).astype(np.int64)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    tx = xc - x0
    ty = yc - y0
    v = valid.astype(np.float64)
    w00 = (1 - tx) * (1 - ty) * v
    w01 = tx * (1 - ty) * v
    w10 = (1 - tx) * ty * v
    w11 = tx * ty * v
    idx00 = y0 * width + x0
    idx01 = y0 * width + x1
    idx10 = y1 * width + x0
    idx11 = y1 * width + x1
    return (idx00, idx01, idx10, idx11, w00, w01, w10, w11)


def bilinear_sample(image, grid: SamplingGrid):
    """Sample a C x H x W image at the grid coordinates (zero padding).

    Accepts a numpy array or an arraycore Tensor; Tensors route through the
    differentiable warp op so gradients flow to the image values.
    """
    from .arraycore import Tensor, ops

    if isinstance(image, Tensor):
        return ops.warp(image, grid)
    img = np.asarray(image)
    c, h, w = img.shape
    i00, i01, i10, i11, w00, w01, w10, w11 = bilinear_weights(grid, h, w)
    flat = img.reshape(c, h * w)
    out = (flat[:, i00] * w00 + flat[:, i01] * w01
           + flat[:, i10] * w10 + flat[:, i11] * w11)
    return out.astype(img.dtype)
