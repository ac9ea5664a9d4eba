"""Training loop: unrolled recurrence over consecutive target frames."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from ..arraycore import AdamState, Tensor, adam_step, ops, save_checkpoint
from ..errors import ConfigError, NumericalError
from ..geometry import Camera, make_depth_schedule
from ..model import LatentState, ModelConfig, forward_step, init_params
from ..sampler import select_inputs


@dataclass
class TrainConfig:
    steps: int = 200
    batch_size: int = 1
    lr: float = 2e-3
    lr_schedule: str = "constant"  # "constant" | "cosine"
    warmup_steps: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    crop: int = 0                  # 0 = full frame
    dilations: tuple = (1,)
    loss_switch_fraction: float = 0.1   # retained for config compatibility;
                                        # the loss is L1 throughout (no-op)
    unroll: int = 3
    detach: str = "both"           # "both" | "pass" | "none"
    recurrent: bool = True
    seed: int = 0
    checkpoint_interval: int = 0   # 0 = only at the end
    log_every: int = 10

    def __post_init__(self):
        if self.unroll < 1:
            raise ConfigError("unroll must be >= 1")
        if self.detach not in ("both", "pass", "none"):
            raise ConfigError(f"unknown detach policy: {self.detach}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"unknown lr schedule: {self.lr_schedule}")

    def to_json(self):
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d


def _crop_window(rng, trainc: TrainConfig, resolution: int, fdiv: int):
    crop = trainc.crop or resolution
    if crop % fdiv:
        raise ConfigError(f"crop size {crop} not divisible by F={fdiv}")
    if crop > resolution:
        raise ConfigError(f"crop {crop} exceeds resolution {resolution}")
    x0 = int(rng.integers(0, resolution - crop + 1))
    y0 = int(rng.integers(0, resolution - crop + 1))
    return x0, y0, crop


def _valid_time_range(T, dilations, V, unroll):
    """Start times whose whole unrolled window keeps the middle input frame
    unclamped for every dilation pass (training pairs target with middle)."""
    half = (V - 1) // 2
    dmax = max(dilations)
    lo = 1 + dmax * half
    hi = T - dmax * half - (unroll - 1)
    if hi < lo:
        raise ConfigError(
            f"sequence too short: T={T}, V={V}, d={dmax}, unroll={unroll}")
    return lo, hi


def train(model_config: ModelConfig, train_config: TrainConfig, dataset,
          out_dir=None, callback=None):
    """Optimize a fresh model on an in-memory dataset (list of SceneData).

    Returns (params, adam_state, loss_curve). Checkpoints and the loss
    curve (CSV + figure) are written when out_dir is given.
    """
    if not dataset:
        raise ConfigError("empty dataset")
    res = dataset[0].resolution
    if any(s.resolution != res for s in dataset):
        raise ConfigError("mixed resolutions in dataset")

    params = init_params(model_config)
    adam = AdamState(lr=train_config.lr, beta1=train_config.beta1,
                     beta2=train_config.beta2)
    rng = np.random.default_rng(train_config.seed)
    loss_curve = []
    t_start = time.time()

    for step in range(1, train_config.steps + 1):
        adam.lr = _lr_at(step, train_config)
        grads = {n: np.zeros_like(p.data) for n, p in params.items()}
        step_loss = 0.0
        for _ in range(train_config.batch_size):
            loss = _sample_loss(rng, dataset, model_config, train_config, params)
            if not np.isfinite(loss.item()):
                raise NumericalError(f"non-finite loss at step {step}")
            loss.backward()
            for n, p in params.items():
                if p.grad is not None:
                    grads[n] += p.grad / train_config.batch_size
                p.zero_grad()
            step_loss += loss.item() / train_config.batch_size
        adam_step(params, grads, adam)
        loss_curve.append(step_loss)
        if callback is not None:
            callback(step, step_loss)
        if out_dir and train_config.checkpoint_interval and \
                step % train_config.checkpoint_interval == 0:
            _save(out_dir, f"checkpoint_{step:06d}.ckpt", params, model_config,
                  train_config, adam)

    runtime = time.time() - t_start
    ckpt_path = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        ckpt_path = _save(out_dir, "checkpoint.ckpt", params, model_config,
                          train_config, adam)
        _write_loss_curve(out_dir, loss_curve)
    return params, adam, loss_curve, {"runtime": runtime, "checkpoint": ckpt_path}


def _lr_at(step: int, tc: TrainConfig) -> float:
    if tc.warmup_steps and step <= tc.warmup_steps:
        return tc.lr * step / tc.warmup_steps
    if tc.lr_schedule == "cosine":
        done = step - tc.warmup_steps
        span = max(tc.steps - tc.warmup_steps, 1)
        return tc.lr * 0.5 * (1.0 + np.cos(np.pi * (done - 1) / span))
    return tc.lr


def _sample_loss(rng, dataset, mc: ModelConfig, tc: TrainConfig, params):
    """One unrolled sample: scene, target camera, consecutive time window."""
    scene = dataset[int(rng.integers(len(dataset)))]
    tname = sorted(scene.targets)[int(rng.integers(len(scene.targets)))]
    target = scene.targets[tname]
    lo, hi = _valid_time_range(scene.T, tc.dilations, mc.V, tc.unroll)
    t0 = int(rng.integers(lo, hi + 1))
    x0, y0, crop = _crop_window(rng, tc, scene.resolution, mc.F)

    cam_full: Camera = target["camera"]
    cam = Camera(cam_full.intrinsics.cropped(x0, y0, crop, crop), cam_full.pose)
    schedule = make_depth_schedule(scene.near, scene.far, mc.D)

    state = LatentState.initial()
    terms = []
    for d in tc.dilations:
        if tc.detach == "pass":
            state = state.detach()
        for j in range(tc.unroll):
            t_i = t0 + j
            sel = select_inputs(t_i, d, mc.V, scene.T)
            assert not sel.center_clamped    # guaranteed by _valid_time_range
            frames = [scene.frames[i - 1] for i in sel.indices]
            cams = [scene.input_cameras[i - 1] for i in sel.indices]
            if not tc.recurrent:
                state = LatentState.initial()
            elif tc.detach == "both":
                state = state.detach()
            pred, state = forward_step(frames, cams, cam, state, mc, params,
                                       schedule)
            gt = target["frames"][t_i - 1][:, y0:y0 + crop, x0:x0 + crop]
            terms.append(ops.l1_loss(pred, Tensor(gt[None])))
    total = terms[0]
    for t in terms[1:]:
        total = ops.add(total, t)
    return ops.scale(total, 1.0 / len(terms))


def _save(out_dir, name, params, mc, tc, adam):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    save_checkpoint(path, params,
                    {"model": mc.to_json(), "train": tc.to_json()}, adam)
    return path


def _write_loss_curve(out_dir, loss_curve):
    csv_path = os.path.join(out_dir, "loss_curve.csv")
    with open(csv_path, "w") as f:
        f.write("step,loss\n")
        for i, v in enumerate(loss_curve, 1):
            f.write(f"{i},{v:.8f}\n")
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(range(1, len(loss_curve) + 1), loss_curve)
        ax.set_xlabel("step")
        ax.set_ylabel("L1 loss")
        ax.set_yscale("log")
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, "loss_curve.png"), dpi=120)
        plt.close(fig)
    except Exception:
        pass
