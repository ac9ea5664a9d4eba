"""Trajectory-driven inference and test-set evaluation."""

from __future__ import annotations

import time

import numpy as np

from ..errors import ConfigError, ShapeError
from ..geometry import make_depth_schedule
from ..model import LatentState, ModelConfig, forward_step
from ..sampler import TargetSpec, iteration_passes, select_inputs, validate_target_spec
from .metrics import psnr, ssim


def run_recurrence(params, mc: ModelConfig, input_frames, input_cameras,
                   spec: TargetSpec, schedule, recurrent=True):
    """Run the full pass schedule over the target spec.

    Returns a list (one entry per pass) of lists of predicted frames, each
    3 x H x W in [0, 1]. The hidden state is carried across passes; between
    steps it is always detached (inference never backpropagates through it).
    """
    T = len(input_frames)
    bad = validate_target_spec(spec, T)
    if bad is not None:
        raise ConfigError(f"invalid target spec at entry {bad}")
    state = LatentState.initial()
    outputs = []
    for d, _k in iteration_passes(spec):
        preds = []
        for t_i, cam in spec.entries:
            sel = select_inputs(t_i, d, mc.V, T)
            frames = [input_frames[i - 1] for i in sel.indices]
            cams = [input_cameras[i - 1] for i in sel.indices]
            if not recurrent:
                state = LatentState.initial()
            pred, state = forward_step(frames, cams, cam, state, mc, params,
                                       schedule)
            state = state.detach()
            preds.append(np.clip(pred.numpy()[0], 0.0, 1.0))
        outputs.append(preds)
    return outputs


def _metric_block():
    return {"psnr_full": [], "ssim_full": [], "psnr_dyn": [], "ssim_dyn": []}


def _frame_metrics(block, pred, gt, mask):
    block["psnr_full"].append(psnr(pred, gt))
    block["ssim_full"].append(ssim(pred, gt))
    if mask is not None and mask.any():
        block["psnr_dyn"].append(psnr(pred, gt, mask))
        try:
            block["ssim_dyn"].append(ssim(pred, gt, mask))
        except ShapeError:
            pass    # no window center inside the mask: excluded, not NaN


def _summarize(block):
    return {k: (float(np.mean(v)) if v else None) for k, v in block.items()}


def evaluate(params, mc: ModelConfig, dataset, dilations, mode="sync",
             bullet_t=1, recurrent=True, limit_frames=0, identity=False):
    """Evaluate on every scene and target camera of a loaded dataset.

    mode "sync" uses t_i = i; mode "bullet" freezes t_i at bullet_t.
    Returns a report dict with per-camera, per-pass and aggregate PSNR/SSIM
    on full images and dynamic-only regions (empty-mask frames excluded).
    """
    if mode not in ("sync", "bullet"):
        raise ConfigError(f"unknown eval mode: {mode}")
    t0 = time.time()
    n_passes = len(dilations)
    per_pass = [{"dilation": d, "cameras": {}} for d in dilations]
    agg = [_metric_block() for _ in range(n_passes)]
    frame_count = 0

    for scene in dataset:
        N = scene.T if not limit_frames else min(scene.T, limit_frames)
        schedule = make_depth_schedule(scene.near, scene.far, mc.D)
        for name in sorted(scene.targets):
            tgt = scene.targets[name]
            times = [bullet_t] * N if mode == "bullet" else list(range(1, N + 1))
            spec = TargetSpec(entries=[(t, tgt["camera"]) for t in times],
                              dilations=list(dilations))
            if identity:
                outputs = [[tgt["frames"][t - 1] for t in times]] * n_passes
            else:
                outputs = run_recurrence(params, mc, scene.frames,
                                         scene.input_cameras, spec, schedule,
                                         recurrent=recurrent)
            for k in range(n_passes):
                cams = per_pass[k]["cameras"]
                block = cams.setdefault(name, _metric_block())
                for j, t in enumerate(times):
                    gt = tgt["frames"][t - 1]
                    mask = tgt["masks"][t - 1]
                    _frame_metrics(block, outputs[k][j], gt, mask)
                    _frame_metrics(agg[k], outputs[k][j], gt, mask)
            frame_count += N

    runtime = time.time() - t0
    report = {
        "mode": mode,
        "bullet_t": bullet_t if mode == "bullet" else None,
        "dilations": list(dilations),
        "recurrent": recurrent,
        "frame_count": frame_count,
        "runtime_s": runtime,
        "fps": frame_count / runtime if runtime > 0 else None,
        "per_pass": [
            {"dilation": per_pass[k]["dilation"],
             "aggregate": _summarize(agg[k]),
             "cameras": {n: _summarize(b)
                         for n, b in per_pass[k]["cameras"].items()}}
            for k in range(n_passes)
        ],
    }
    report["aggregate"] = report["per_pass"][-1]["aggregate"]
    report["cameras"] = report["per_pass"][-1]["cameras"]
    return report


def render_video(params, mc: ModelConfig, input_frames, input_cameras,
                 spec: TargetSpec, near, far, recurrent=True):
    """Render the spec's target views; returns (final-pass frames, fps)."""
    schedule = make_depth_schedule(near, far, mc.D)
    t0 = time.time()
    outputs = run_recurrence(params, mc, input_frames, input_cameras, spec,
                             schedule, recurrent=recurrent)
    dt = time.time() - t0
    frames = outputs[-1]
    return frames, (len(frames) / dt if dt > 0 else float("inf"))
