"""Procedural dynamic scenes and their ground-truth renderer.

World convention matches the camera convention: x right, z forward depth,
and y pointing *down* (so "up" is -y). The ground plane sits at y = 0 with
objects above it at y < 0, and every scene is enclosed in a textured room
so that all rays hit a surface. Shading is unlit: a surface point's color
depends only on its position in the owning object's local frame, which
makes static content exactly multi-view consistent.

Rendering is per-pixel ray casting against axis-aligned boxes and quads
with a z-buffer over the hit depths; ray directions are kept with unit
camera-space z so the ray parameter *is* the camera-space depth.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError, GeometryError
from .geometry import Camera, CameraIntrinsics, CameraPose

_EPS = 1e-9


# ---------------------------------------------------------------------------
# scene description

@dataclass
class GenConfig:
    resolution: int = 64
    frames: int = 81               # T
    statics: int = 8
    dynamics: int = 2
    billboard_fraction: float = 0.25
    object_half_size: tuple = (0.25, 0.7)
    bounds_xz: float = 2.2         # objects stay within |x|,|z| <= bounds_xz
    bounds_y: tuple = (-2.0, 0.0)  # y range for object centers (up is -y)
    speed: tuple = (0.015, 0.05)   # world units / frame for dynamic objects
    room_half: float = 8.0
    room_depth: float = 8.0        # ceiling height (room spans y in [-room_depth, 0])
    cam_radius: tuple = (4.0, 6.0)
    cam_theta: tuple = (0.45, 1.25)   # polar angle from up, radians
    focal_scale: float = 1.0          # fx = fy = focal_scale * resolution


@dataclass
class Box:
    position: np.ndarray     # center at t=1
    half_size: np.ndarray
    texture_seed: int
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    dynamic: bool = False

    def center_at(self, t: int) -> np.ndarray:
        return self.position + self.velocity * (t - 1)


@dataclass
class Quad:
    """Axis-aligned rectangle: plane {axis = offset}, extents on the others."""
    axis: int
    offset: float
    center: np.ndarray       # 3D center (center[axis] == offset at t=1)
    half_u: float
    half_v: float
    texture_seed: int
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    dynamic: bool = False

    def center_at(self, t: int) -> np.ndarray:
        return self.center + self.velocity * (t - 1)


@dataclass
class SceneSpec:
    statics: list
    dynamics: list
    room_half: float
    room_depth: float
    room_seed: int
    duration: int
    seed: int


def sample_scene(seed: int, config: GenConfig) -> SceneSpec:
    """Deterministic scene draw; dynamic velocities are rejection-sampled so
    objects never leave the bounds before the final frame."""
    rng = np.random.default_rng(seed)
    max_half = config.object_half_size[1]
    if max_half * 2 >= config.bounds_xz or config.frames < 1:
        raise ConfigError("objects cannot fit in the configured bounds")

    def draw_position(half):
        lo_y, hi_y = config.bounds_y
        return np.array([
            rng.uniform(-config.bounds_xz + half, config.bounds_xz - half),
            rng.uniform(lo_y + half, hi_y - half) if hi_y - half > lo_y + half
            else -half,
            rng.uniform(-config.bounds_xz + half, config.bounds_xz - half),
        ])

    statics = []
    for _ in range(config.statics):
        half = rng.uniform(*config.object_half_size)
        pos = draw_position(half)
        tex = int(rng.integers(1 << 31))
        if rng.random() < config.billboard_fraction:
            axis = int(rng.choice([0, 2]))
            statics.append(Quad(axis=axis, offset=float(pos[axis]), center=pos,
                                half_u=half, half_v=half, texture_seed=tex))
        else:
            statics.append(Box(position=pos, half_size=np.full(3, half) *
                               rng.uniform(0.6, 1.0, size=3), texture_seed=tex))

    dynamics = []
    for _ in range(config.dynamics):
        half = rng.uniform(*config.object_half_size)
        tex = int(rng.integers(1 << 31))
        for _attempt in range(1000):
            pos = draw_position(half)
            speed = rng.uniform(*config.speed)
            direction = rng.standard_normal(3)
            direction[1] *= 0.3     # mostly lateral motion
            direction /= np.linalg.norm(direction) + _EPS
            vel = direction * speed
            end = pos + vel * (config.frames - 1)
            lo_y, hi_y = config.bounds_y
            if (abs(end[0]) <= config.bounds_xz - half
                    and abs(end[2]) <= config.bounds_xz - half
                    and lo_y + half <= end[1] <= hi_y - half + 1e-9):
                break
        else:
            raise ConfigError("could not place a dynamic object inside bounds")
        dynamics.append(Box(position=pos, half_size=np.full(3, half) *
                            rng.uniform(0.6, 1.0, size=3), texture_seed=tex,
                            velocity=vel, dynamic=True))

    return SceneSpec(statics=statics, dynamics=dynamics,
                     room_half=config.room_half, room_depth=config.room_depth,
                     room_seed=int(rng.integers(1 << 31)),
                     duration=config.frames, seed=seed)


# ---------------------------------------------------------------------------
# cameras

def _look_at(position: np.ndarray, target: np.ndarray) -> CameraPose:
    fwd = target - position
    n = np.linalg.norm(fwd)
    if n < 1e-9:
        raise GeometryError("camera position equals look-at point")
    z = fwd / n
    down = np.array([0.0, 1.0, 0.0])
    x = np.cross(down, z)
    nx = np.linalg.norm(x)
    if nx < 1e-9:    # looking straight up/down: pick an arbitrary right vector
        x = np.array([1.0, 0.0, 0.0])
        nx = 1.0
    x = x / nx
    y = np.cross(z, x)
    R = np.stack([x, y, z], axis=0)
    return CameraPose(R=R, t=-R @ position)


def _spherical_position(r, theta, phi, lookat):
    return lookat + np.array([
        r * np.sin(theta) * np.cos(phi),
        -r * np.cos(theta),
        r * np.sin(theta) * np.sin(phi),
    ])


def camera_trajectory(start, end, lookat, T: int,
                      intrinsics: CameraIntrinsics) -> list:
    """T cameras interpolated linearly in spherical coordinates (r, theta,
    phi) around a shared look-at point; endpoints reproduced exactly."""
    if start[0] <= 0 or end[0] <= 0:
        raise GeometryError("spherical radius must be positive")
    if T < 2:
        raise GeometryError("trajectory needs T >= 2")
    lookat = np.asarray(lookat, dtype=np.float64)
    cams = []
    for i in range(T):
        a = i / (T - 1)
        r, th, ph = (np.array(start) * (1 - a) + np.array(end) * a)
        pos = _spherical_position(r, th, ph, lookat)
        cams.append(Camera(intrinsics, _look_at(pos, lookat)))
    return cams


# ---------------------------------------------------------------------------
# procedural texture

def _lattice_hash(ix, iy, iz, seed):
    """Deterministic integer-lattice hash to [0, 1)."""
    v = (ix.astype(np.uint32) * np.uint32(73856093)
         + iy.astype(np.uint32) * np.uint32(19349663)
         + iz.astype(np.uint32) * np.uint32(83492791)
         + np.uint32((seed * 2654435761) & 0xFFFFFFFF))
    v ^= v >> np.uint32(16)
    v *= np.uint32(0x45D9F3B)
    v ^= v >> np.uint32(16)
    v *= np.uint32(0x45D9F3B)
    v ^= v >> np.uint32(16)
    return v.astype(np.float64) / 4294967296.0


def _value_noise(q: np.ndarray, seed: int) -> np.ndarray:
    """Band-limited value noise: random lattice values, smoothstep-trilinear
    interpolated. Smooth at sub-cell scale, so bilinear image resampling of
    the rendered texture stays multi-view consistent."""
    i = np.floor(q)
    f = q - i
    f = f * f * (3.0 - 2.0 * f)
    ix, iy, iz = (i[..., a].astype(np.int64) for a in range(3))
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    out = np.zeros(q.shape[:-1])
    for dx in (0, 1):
        wx = fx if dx else 1.0 - fx
        for dy in (0, 1):
            wy = fy if dy else 1.0 - fy
            for dz in (0, 1):
                wz = fz if dz else 1.0 - fz
                out += wx * wy * wz * _lattice_hash(ix + dx, iy + dy, iz + dz, seed)
    return out


def _texture(points: np.ndarray, seed: int) -> np.ndarray:
    """Unlit procedural color for local-frame points, shape (..., 3) -> (..., 3)."""
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.3, 0.95, size=3)
    alt = rng.uniform(0.05, 0.7, size=3)
    freq = rng.uniform(4.0, 7.0)
    n1 = _value_noise(points * freq, seed)
    n2 = _value_noise(points * freq * 3.1, seed + 101)
    t = np.clip(0.65 * n1 + 0.55 * n2, 0.0, 1.0)[..., None]
    checker = (np.floor(points * freq * 0.5).sum(axis=-1) % 2)[..., None]
    color = (base * t + alt * (1.0 - t)) * (0.8 + 0.2 * checker)
    return np.clip(color, 0.0, 1.0)


# ---------------------------------------------------------------------------
# ray casting

def _camera_rays(camera: Camera):
    k = camera.intrinsics
    u, v = np.meshgrid(np.arange(k.width, dtype=np.float64),
                       np.arange(k.height, dtype=np.float64))
    d_cam = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1)
    d_world = d_cam @ camera.pose.R    # R^T applied to rows
    origin = camera.pose.center
    return origin, d_world


def _intersect_box(origin, dirs, lo, hi):
    """Slab test. Returns (t_near, hit) with t the camera-space depth."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t0 = (lo - origin) * inv
        t1 = (hi - origin) * inv
    tmin = np.minimum(t0, t1).max(axis=-1)
    tmax = np.maximum(t0, t1).min(axis=-1)
    hit = (tmax >= tmin) & (tmax > _EPS) & (tmin > _EPS)
    return tmin, hit


def _intersect_quad(origin, dirs, axis, offset, center, half_u, half_v):
    other = [a for a in range(3) if a != axis]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (offset - origin[axis]) / dirs[..., axis]
    p_u = origin[other[0]] + t * dirs[..., other[0]]
    p_v = origin[other[1]] + t * dirs[..., other[1]]
    hit = ((t > _EPS)
           & (np.abs(p_u - center[other[0]]) <= half_u)
           & (np.abs(p_v - center[other[1]]) <= half_v)
           & np.isfinite(t))
    return t, hit


def _room_quads(spec: SceneSpec):
    s = spec.room_half
    d = spec.room_depth
    c0 = np.array([0.0, -d / 2, 0.0])
    return [
        Quad(axis=1, offset=0.0, center=np.array([0.0, 0.0, 0.0]),
             half_u=s, half_v=s, texture_seed=spec.room_seed + 1),       # ground
        Quad(axis=1, offset=-d, center=np.array([0.0, -d, 0.0]),
             half_u=s, half_v=s, texture_seed=spec.room_seed + 2),       # ceiling
        Quad(axis=0, offset=-s, center=c0 + [-s, 0, 0], half_u=d, half_v=s,
             texture_seed=spec.room_seed + 3),
        Quad(axis=0, offset=s, center=c0 + [s, 0, 0], half_u=d, half_v=s,
             texture_seed=spec.room_seed + 4),
        Quad(axis=2, offset=-s, center=c0 + [0, 0, -s], half_u=s, half_v=d,
             texture_seed=spec.room_seed + 5),                           # back wall
        Quad(axis=2, offset=s, center=c0 + [0, 0, s], half_u=s, half_v=d,
             texture_seed=spec.room_seed + 6),
    ]


def rasterize(scene: SceneSpec, camera: Camera, t: int,
              include_dynamics: bool = True):
    """Render one frame: (frame 3xHxW in [0,1], depth HxW, dyn_mask 1xHxW)."""
    if not (1 <= t <= scene.duration):
        raise ConfigError(f"frame index {t} outside [1, {scene.duration}]")
    origin, dirs = _camera_rays(camera)
    h, w = dirs.shape[:2]
    depth = np.full((h, w), np.inf)
    color = np.zeros((h, w, 3))
    dyn = np.zeros((h, w), dtype=bool)

    objects = list(_room_quads(scene)) + list(scene.statics)
    if include_dynamics:
        objects += list(scene.dynamics)

    for obj in objects:
        center = obj.center_at(t) if obj.dynamic else \
            (obj.center if isinstance(obj, Quad) else obj.position)
        if isinstance(obj, Box):
            tval, hit = _intersect_box(origin, dirs, center - obj.half_size,
                                       center + obj.half_size)
        else:
            offset = obj.offset + (obj.velocity[obj.axis] * (t - 1) if obj.dynamic else 0.0)
            tval, hit = _intersect_quad(origin, dirs, obj.axis, offset,
                                        center, obj.half_u, obj.half_v)
        closer = hit & (tval < depth)
        if not closer.any():
            continue
        pts = origin + tval[closer, None] * dirs[closer]
        color[closer] = _texture(pts - center, obj.texture_seed)
        depth[closer] = tval[closer]
        dyn[closer] = obj.dynamic

    frame = np.ascontiguousarray(color.transpose(2, 0, 1)).astype(np.float32)
    return frame, depth, dyn[None, :, :]


# ---------------------------------------------------------------------------
# dataset export / load

def _default_intrinsics(config: GenConfig) -> CameraIntrinsics:
    res = config.resolution
    f = config.focal_scale * res
    return CameraIntrinsics(fx=f, fy=f, cx=(res - 1) / 2, cy=(res - 1) / 2,
                            width=res, height=res)


def scene_cameras(seed: int, config: GenConfig):
    """Input trajectory + two static target cameras for one scene.

    Deterministic in the seed (shared with :func:`sample_scene` callers via
    an offset so camera placement is independent of scene content).
    """
    rng = np.random.default_rng(seed + 10_000_019)
    k = _default_intrinsics(config)
    lookat = np.zeros(3)

    def draw_sph():
        return (rng.uniform(*config.cam_radius),
                rng.uniform(*config.cam_theta),
                rng.uniform(0, 2 * np.pi))

    input_cams = camera_trajectory(draw_sph(), draw_sph(), lookat,
                                   config.frames, k)
    targets = []
    for _ in range(2):
        pos = _spherical_position(*draw_sph(), lookat)
        targets.append(Camera(k, _look_at(pos, lookat)))
    return input_cams, targets


def _write_png(path, array_hw_or_hwc):
    arr = np.clip(np.round(array_hw_or_hwc * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def _read_png(path):
    return np.asarray(Image.open(path), dtype=np.float32) / 255.0


def export_dataset(seeds, config: GenConfig, out_dir, save_depth=False):
    """Write scenes to disk: one moving input camera plus two static targets
    per scene, with dynamic masks (and optional raw-float depth) for the
    targets, and a per-scene manifest carrying cameras and depth bounds."""
    os.makedirs(out_dir, exist_ok=True)
    scene_dirs = []
    for scene_idx, seed in enumerate(seeds):
        try:
            scene = sample_scene(seed, config)
            input_cams, target_cams = scene_cameras(seed, config)
            sdir = os.path.join(out_dir, f"scene_{scene_idx:05d}")
            os.makedirs(sdir, exist_ok=True)
            dmin, dmax = np.inf, 0.0
            cam_json = {"input": [c.to_json() for c in input_cams]}
            for name, cams in [("input", input_cams)] + [
                    (f"target{j+1}", [target_cams[j]] * config.frames)
                    for j in range(2)]:
                cdir = os.path.join(sdir, name)
                os.makedirs(cdir, exist_ok=True)
                if name != "input":
                    cam_json[name] = cams[0].to_json()
                for t in range(1, config.frames + 1):
                    frame, depth, mask = rasterize(scene, cams[t - 1], t)
                    finite = depth[np.isfinite(depth)]
                    dmin = min(dmin, float(finite.min()))
                    dmax = max(dmax, float(finite.max()))
                    _write_png(os.path.join(cdir, f"frame_{t:05d}.png"),
                               frame.transpose(1, 2, 0))
                    if name != "input":
                        _write_png(os.path.join(cdir, f"mask_{t:05d}.png"),
                                   mask[0].astype(np.float64))
                        if save_depth:
                            np.save(os.path.join(cdir, f"depth_{t:05d}.npy"),
                                    depth.astype(np.float32))
            manifest = {
                "seed": int(seed),
                "frames": config.frames,
                "resolution": config.resolution,
                "near": dmin * 0.95,
                "far": dmax * 1.05,
                "cameras": cam_json,
            }
            with open(os.path.join(sdir, "manifest.json"), "w") as f:
                json.dump(manifest, f, indent=1, sort_keys=True)
            scene_dirs.append(sdir)
        except OSError as e:
            raise DataError(f"scene {scene_idx} (seed {seed}): {e}") from e
    return scene_dirs


@dataclass
class SceneData:
    """One exported scene loaded back into memory."""
    path: str
    frames: np.ndarray        # T x 3 x H x W input video
    input_cameras: list
    targets: dict             # name -> {"camera", "frames", "masks"}
    near: float
    far: float
    T: int
    resolution: int
    seed: int


def load_scene(scene_dir) -> SceneData:
    mpath = os.path.join(scene_dir, "manifest.json")
    if not os.path.exists(mpath):
        raise DataError(f"missing manifest: {mpath}")
    with open(mpath) as f:
        manifest = json.load(f)
    T = manifest["frames"]
    frames = np.stack([
        _read_png(os.path.join(scene_dir, "input", f"frame_{t:05d}.png"))
        .transpose(2, 0, 1) for t in range(1, T + 1)])
    input_cams = [Camera.from_json(c) for c in manifest["cameras"]["input"]]
    targets = {}
    for name in sorted(manifest["cameras"]):
        if name == "input":
            continue
        tdir = os.path.join(scene_dir, name)
        tframes = np.stack([
            _read_png(os.path.join(tdir, f"frame_{t:05d}.png")).transpose(2, 0, 1)
            for t in range(1, T + 1)])
        masks = np.stack([
            _read_png(os.path.join(tdir, f"mask_{t:05d}.png")) > 0.5
            for t in range(1, T + 1)])
        targets[name] = {"camera": Camera.from_json(manifest["cameras"][name]),
                         "frames": tframes, "masks": masks}
    return SceneData(path=scene_dir, frames=frames, input_cameras=input_cams,
                     targets=targets, near=manifest["near"], far=manifest["far"],
                     T=T, resolution=manifest["resolution"], seed=manifest["seed"])


def load_dataset(root) -> list:
    dirs = sorted(d for d in os.listdir(root) if d.startswith("scene_"))
    if not dirs:
        raise DataError(f"no scene_* directories under {root}")
    return [load_scene(os.path.join(root, d)) for d in dirs]
