"""The recurrent view-synthesis network.

One forward step maps (V input frames, their cameras, a target camera, the
previous hidden state) to (predicted target frame, new hidden state):

    patchify(PSV) -> latent render with reprojected state -> unpatchify

The latent renderer is a small 3D U-Net over the (depth, height, width)
volume: per level two 3x3x3 convs with leaky-relu, spatial 2x downsampling
with stride-2 depth reduction while depth > 1, extra stride-(2,1,1) convs
until the depth axis collapses to 1, then a mirrored decoder whose skip
connections are depth-averaged before concatenation. Widths are (C, 2C);
every conv except the output projection is followed by instance norm and
leaky-relu.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .arraycore import Tensor, ops
from .errors import ConfigError, ShapeError
from .geometry import Camera, DepthSchedule, plane_warp_grid
from .psv import PlaneSweepVolume, build_dynamic_psv


@dataclass(frozen=True)
class ModelConfig:
    C: int = 32            # latent channels
    D: int = 8             # depth planes
    F: int = 2             # patch / down-sampling factor
    V: int = 3             # input views
    unet_levels: int = 2
    depth_group: int = 1   # fold pairs of planes into channels when 2
    seed: int = 0

    def __post_init__(self):
        if self.F not in (1, 2, 4):
            raise ConfigError(f"F must be 1, 2 or 4, got {self.F}")
        if self.C % 2:
            raise ConfigError("C must be even")
        if self.depth_group not in (1, 2) or self.D % self.depth_group:
            raise ConfigError("depth_group must be 1 or 2 and divide D")
        if self.V < 1 or self.V % 2 == 0:
            raise ConfigError("V must be odd")

    def to_json(self):
        return asdict(self)

    @staticmethod
    def from_json(obj):
        return ModelConfig(**obj)


@dataclass
class LatentState:
    """Recurrent hidden tensor stamped with the camera it was rendered at."""
    z: Tensor | None
    camera: Camera | None
    valid: bool = False

    @staticmethod
    def initial() -> "LatentState":
        return LatentState(z=None, camera=None, valid=False)

    def detach(self) -> "LatentState":
        if not self.valid:
            return self
        return LatentState(z=self.z.detach(), camera=self.camera, valid=True)


# ---------------------------------------------------------------------------
# architecture layout

def _depth_after(d, stride):
    return (d - 1) // stride + 1 if stride == 2 else d


def unet_layout(config: ModelConfig):
    """Layer list of (name, cin, cout, stride) shared by init and forward."""
    g = config.depth_group
    c, c2 = config.C, 2 * config.C
    depth = config.D // g
    layers = []

    def conv(name, cin, cout, stride=(1, 1, 1)):
        layers.append((name, cin, cout, stride))

    conv("stem1", 2 * config.C * g, c)
    conv("stem2", c, c)
    ch = c
    for lvl in range(1, config.unet_levels + 1):
        sd = 2 if depth > 1 else 1
        conv(f"down{lvl}", ch, c2, (sd, 2, 2))
        depth = _depth_after(depth, sd)
        conv(f"enc{lvl}", c2, c2)
        ch = c2
    r = 0
    while depth > 1:
        conv(f"reduce{r}", ch, ch, (2, 1, 1))
        depth = _depth_after(depth, 2)
        r += 1
    conv("mid", ch, ch)
    for lvl in range(config.unet_levels, 0, -1):
        skip_ch = c2 if lvl > 1 else c
        out_ch = c2 if lvl > 1 else c
        conv(f"dec{lvl}a", ch + skip_ch, out_ch)
        conv(f"dec{lvl}b", out_ch, out_ch)
        ch = out_ch
    layers.append(("out", ch, config.C, (1, 1, 1), 1))  # 1x1x1 projection
    return layers


def init_params(config: ModelConfig) -> dict:
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization."""
    rng = np.random.default_rng(config.seed)
    params = {}

    def make(name, shape):
        fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        params[name] = Tensor(rng.uniform(-bound, bound, size=shape)
                              .astype(np.float32), requires_grad=True, name=name)

    make("patchify.w", (config.C, 3 * config.V, config.F, config.F))
    params["patchify.b"] = Tensor(np.zeros(config.C, dtype=np.float32),
                                  requires_grad=True, name="patchify.b")
    for entry in unet_layout(config):
        name, cin, cout = entry[0], entry[1], entry[2]
        k = entry[4] if len(entry) > 4 else 3
        make(f"unet.{name}.w", (cout, cin, k, k, k))
        params[f"unet.{name}.b"] = Tensor(np.zeros(cout, dtype=np.float32),
                                          requires_grad=True, name=f"unet.{name}.b")
        if name != "out":   # conv -> instance norm -> leaky relu
            params[f"unet.{name}.gamma"] = Tensor(
                np.ones(cout, dtype=np.float32), requires_grad=True,
                name=f"unet.{name}.gamma")
            params[f"unet.{name}.beta"] = Tensor(
                np.zeros(cout, dtype=np.float32), requires_grad=True,
                name=f"unet.{name}.beta")
    make("unpatchify.w", (3 * config.F * config.F, config.C, 1, 1))
    params["unpatchify.b"] = Tensor(np.zeros(3 * config.F * config.F,
                                             dtype=np.float32),
                                    requires_grad=True, name="unpatchify.b")
    return params


# ---------------------------------------------------------------------------
# stages

def patchify(psv: PlaneSweepVolume, params, config: ModelConfig) -> Tensor:
    """D x V x 3 x H x W -> D x C x H/F x W/F (view axis folded view-major
    into channels, then an F-kernel, F-stride convolution per depth plane)."""
    data = psv.data if isinstance(psv.data, Tensor) else Tensor(psv.data)
    d, v, c3, h, w = data.shape
    if h % config.F or w % config.F:
        raise ShapeError(f"spatial dims {h}x{w} not divisible by F={config.F}")
    folded = ops.reshape(data, (d, v * c3, h, w))
    return ops.conv2d(folded, params["patchify.w"], params["patchify.b"],
                      stride=config.F, padding=0)


def reproject_state(state: LatentState, new_target: Camera,
                    schedule: DepthSchedule, config: ModelConfig,
                    latent_hw=None) -> Tensor:
    """Replicate the single-slice latent across the D planes, warping each
    replica through the plane homography from the state's camera to the new
    target; an invalid state yields zeros."""
    if state.valid:
        _, c, h, w = state.z.shape
    else:
        if latent_hw is None:
            raise ShapeError("latent size needed for the initial state")
        c, (h, w) = config.C, latent_hw
    if not state.valid:
        return Tensor(np.zeros((config.D, c, h, w), dtype=np.float32))

    src_k = state.camera.intrinsics.scaled(config.F)
    tgt_k = new_target.intrinsics.scaled(config.F)
    src = Camera(src_k, state.camera.pose)
    tgt = Camera(tgt_k, new_target.pose)
    z2d = ops.reshape(state.z, (c, h, w))
    slices = []
    for depth in schedule.depths:
        grid = plane_warp_grid(src, tgt, depth)
        slices.append(ops.reshape(ops.warp(z2d, grid), (1, c, h, w)))
    return ops.concat(slices, axis=0)


def latent_render(y: Tensor, z_prev: Tensor, params,
                  config: ModelConfig) -> Tensor:
    """Fuse the patchified volume with the reprojected state and collapse
    the depth axis: (D,C,h,w) x (D,C,h,w) -> (1,C,h,w)."""
    if y.shape != z_prev.shape:
        raise ShapeError(f"latent_render: {y.shape} vs {z_prev.shape}")
    d, c, h, w = y.shape
    x = ops.concat([y, z_prev], axis=1)                 # D x 2C x h x w
    x = ops.transpose(x, (1, 0, 2, 3))                  # 2C x D x h x w
    x = ops.reshape(x, (1, 2 * c, d, h, w))
    if config.depth_group == 2:
        x = ops.reshape(x, (1, 2 * c, d // 2, 2, h, w))
        x = ops.transpose(x, (0, 1, 3, 2, 4, 5))
        x = ops.reshape(x, (1, 4 * c, d // 2, h, w))

    skips = []
    for entry in unet_layout(config):
        name, stride = entry[0], entry[3]
        k = entry[4] if len(entry) > 4 else 3
        pad = 1 if k == 3 else 0
        if name.startswith("down"):
            skips.append(x)
        if name.startswith("dec") and name.endswith("a"):
            x = _upsample_spatial(x)
            skip = skips.pop()
            skip = ops.mean_axis(skip, axis=2, keepdims=True)
            x = ops.concat([x, skip], axis=1)
        x = ops.conv3d(x, params[f"unet.{name}.w"], params[f"unet.{name}.b"],
                       stride=stride, padding=pad)
        if name != "out":
            x = ops.instance_norm(x, params[f"unet.{name}.gamma"],
                                  params[f"unet.{name}.beta"])
            x = ops.leaky_relu(x, 0.2)
    return ops.reshape(x, (1, config.C, h, w))


def _upsample_spatial(x: Tensor) -> Tensor:
    return ops.resize_bilinear_2x(x)


def unpatchify(z: Tensor, params, config: ModelConfig) -> Tensor:
    """1x1 conv to 3*F*F channels, then each F*F channel group becomes an
    FxF block (channel-major, row-then-column): (1,C,h,w) -> (1,3,H,W)."""
    one, c, h, w = z.shape
    f = config.F
    x = ops.conv2d(z, params["unpatchify.w"], params["unpatchify.b"])
    x = ops.reshape(x, (1, 3, f, f, h, w))
    x = ops.transpose(x, (0, 1, 4, 2, 5, 3))            # 1,3,h,fy,w,fx
    return ops.reshape(x, (1, 3, h * f, w * f))


def forward_step(frames, cameras, target: Camera, state: LatentState,
                 config: ModelConfig, params: dict,
                 schedule: DepthSchedule):
    """One recurrent step: returns (prediction 1x3xHxW, new LatentState)."""
    if len(frames) != config.V:
        raise ShapeError(f"expected V={config.V} frames, got {len(frames)}")
    psv = build_dynamic_psv(frames, cameras, target, schedule)
    y = patchify(psv, params, config)
    h, w = y.shape[-2:]
    z_rep = reproject_state(state, target, schedule, config, latent_hw=(h, w))
    z = latent_render(y, z_rep, params, config)
    pred = unpatchify(z, params, config)
    return pred, LatentState(z=z, camera=target, valid=True)


# ---------------------------------------------------------------------------
# cost accounting

def model_flops(config: ModelConfig, height: int, width: int) -> int:
    """Multiply-accumulate count (x2) for one forward step."""
    h, w = height // config.F, width // config.F
    total = 2 * config.D * 3 * config.V * config.C * config.F ** 2 * h * w
    g = config.depth_group
    depth, hh, ww = config.D // g, h, w
    for entry in unet_layout(config):
        name, cin, cout, stride = entry[0], entry[1], entry[2], entry[3]
        k = entry[4] if len(entry) > 4 else 3
        if name.startswith("dec") and name.endswith("a"):
            hh, ww = hh * 2, ww * 2
        depth = _depth_after(depth, stride[0])
        hh, ww = hh // stride[1], ww // stride[2]
        total += 2 * cin * cout * k ** 3 * depth * hh * ww
    total += 2 * config.C * 3 * config.F ** 2 * h * w
    return int(total)


def param_count(params: dict) -> int:
    return int(sum(p.size for p in params.values()))
