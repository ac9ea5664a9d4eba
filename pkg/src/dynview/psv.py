"""Dynamic plane sweep volumes and their focus diagnostics.

A volume stacks the V source views warped onto each of D fronto-parallel
planes in the target frame; static content lines up across views at the
plane nearest its true depth, dynamic content does not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arraycore import Tensor, ops
from .errors import ShapeError
from .geometry import Camera, DepthSchedule, bilinear_sample, plane_warp_grid


@dataclass
class PlaneSweepVolume:
    data: object            # D x V x 3 x H x W (Tensor or ndarray)
    schedule: DepthSchedule
    target_camera: Camera

    @property
    def shape(self):
        return self.data.shape


def build_dynamic_psv(frames, cameras, target: Camera,
                      schedule: DepthSchedule) -> PlaneSweepVolume:
    """Warp each frame onto each depth plane of the target camera.

    frames: V images of identical shape (3, H, W), numpy or Tensor. With
    Tensor frames the result stays on the tape (differentiable w.r.t. the
    frame values); geometry is always treated as fixed.
    """
    if len(frames) != len(cameras) or len(frames) == 0:
        raise ShapeError("need one camera per frame and V >= 1")
    shapes = {tuple(f.shape) for f in frames}
    if len(shapes) != 1:
        raise ShapeError(f"mismatched frame sizes: {sorted(shapes)}")

    grids = [[plane_warp_grid(cam, target, depth) for cam in cameras]
             for depth in schedule.depths]
    h, w = grids[0][0].x.shape          # target resolution, not source
    traced = any(isinstance(f, Tensor) for f in frames)
    if traced:
        tensors = [f if isinstance(f, Tensor) else Tensor(f) for f in frames]
        planes = []
        for row in grids:
            views = [ops.reshape(ops.warp(t, g), (1, 1, t.shape[0], h, w))
                     for t, g in zip(tensors, row)]
            planes.append(ops.concat(views, axis=1))
        data = ops.concat(planes, axis=0)
    else:
        d, v = schedule.count, len(frames)
        data = np.empty((d, v, 3, h, w), dtype=np.float32)
        for k, row in enumerate(grids):
            for j, g in enumerate(row):
                data[k, j] = bilinear_sample(frames[j], g)
    return PlaneSweepVolume(data=data, schedule=schedule, target_camera=target)


def psv_view_mean(psv: PlaneSweepVolume):
    """Mean over the V axis: D x 3 x H x W."""
    if isinstance(psv.data, Tensor):
        return ops.mean_axis(psv.data, axis=1)
    return psv.data.mean(axis=1)


def focus_score(psv: PlaneSweepVolume, plane_index: int, mask=None) -> float:
    """Cross-view per-pixel variance at one plane, averaged over a region.

    Lower is sharper alignment: zero exactly when all V views agree. The
    optional mask is a boolean H x W region.
    """
    data = psv.data.numpy() if isinstance(psv.data, Tensor) else psv.data
    if not (0 <= plane_index < data.shape[0]):
        raise IndexError(f"plane index {plane_index} out of range [0, {data.shape[0]})")
    plane = data[plane_index]                    # V x 3 x H x W
    var = plane.var(axis=0).mean(axis=0)         # H x W, averaged over color
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ShapeError("empty focus mask")
        return float(var[mask].mean())
    return float(var.mean())


def focus_curve(psv: PlaneSweepVolume, mask=None) -> np.ndarray:
    """focus_score at every plane, as one array."""
    return np.array([focus_score(psv, k, mask) for k in range(psv.shape[0])])
