"""Command-line entry point.

Subcommands: gen-data, inspect-psv, train, render, eval. Exit codes:
0 success, 2 configuration/usage error, 3 I/O error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import scenes
from .arraycore import load_checkpoint
from .config import CliConfig
from .errors import ConfigError, DataError, DynviewError, GeometryError, NumericalError
from .geometry import make_depth_schedule
from .model import ModelConfig
from .psv import build_dynamic_psv, focus_curve, psv_view_mean
from .pipeline import evaluate, render_video, report_table, train, write_report
from .pipeline.train import TrainConfig
from .sampler import TargetSpec, select_inputs

log = logging.getLogger("dynview")

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


def _add_config_flags(p):
    p.add_argument("--config", "-c", help="key=value config file")
    p.add_argument("--set", "-s", action="append", metavar="KEY=VALUE",
                   help="config override (repeatable)")


def _resolve_config(args) -> CliConfig:
    cfg = CliConfig()
    if getattr(args, "config", None):
        cfg.load_file(args.config)
    cfg.apply_overrides(getattr(args, "set", None))
    log.info("resolved configuration:\n%s", cfg.resolved())
    return cfg


def _load_model(path):
    params, hyper, adam = load_checkpoint(path)
    return params, ModelConfig.from_json(hyper["model"]), hyper, adam


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen_data(args):
    cfg = _resolve_config(args)
    gen = cfg.gen_config()
    if args.frames:
        gen = scenes.GenConfig(**{**gen.__dict__, "frames": args.frames})
    seeds = [args.seed + i for i in range(args.scenes)]
    dirs = scenes.export_dataset(seeds, gen, args.out, save_depth=args.save_depth)
    print(f"wrote {len(dirs)} scenes under {args.out}")
    print(f"manifest: {os.path.join(dirs[0], 'manifest.json')}")
    return 0


def cmd_inspect_psv(args):
    _resolve_config(args)
    dataset = scenes.load_dataset(args.data)
    if not (0 <= args.scene < len(dataset)):
        raise ConfigError(f"scene index {args.scene} out of range")
    scene = dataset[args.scene]
    if not (1 <= args.frame <= scene.T):
        raise ConfigError(f"frame {args.frame} outside [1, {scene.T}]")
    if args.target not in scene.targets:
        raise ConfigError(f"unknown target camera {args.target!r}; "
                          f"have {sorted(scene.targets)}")
    sel = select_inputs(args.frame, args.dilation, args.views, scene.T)
    frames = [scene.frames[i - 1] for i in sel.indices]
    cams = [scene.input_cameras[i - 1] for i in sel.indices]
    schedule = make_depth_schedule(scene.near, scene.far, args.planes)
    volume = build_dynamic_psv(frames, cams, scene.targets[args.target]["camera"],
                               schedule)
    means = psv_view_mean(volume)
    scores = focus_curve(volume)

    os.makedirs(args.out, exist_ok=True)
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, axes = plt.subplots(1, args.planes, figsize=(2 * args.planes, 2.2))
    axes = np.atleast_1d(axes)
    for k, ax in enumerate(axes):
        ax.imshow(np.clip(means[k].transpose(1, 2, 0), 0, 1))
        ax.set_title(f"z={schedule.depths[k]:.2f}", fontsize=8)
        ax.axis("off")
    fig.tight_layout()
    row_path = os.path.join(args.out, "psv_planes.png")
    fig.savefig(row_path, dpi=120)
    plt.close(fig)
    with open(os.path.join(args.out, "focus_scores.json"), "w") as f:
        json.dump({"depths": [float(d) for d in schedule.depths],
                   "focus_scores": [float(s) for s in scores],
                   "argmin_plane": int(np.argmin(scores))}, f, indent=1)
    print(f"wrote {row_path} and focus_scores.json")
    return 0


def cmd_train(args):
    cfg = _resolve_config(args)
    mc = cfg.model_config()
    tc = cfg.train_config()
    dataset = scenes.load_dataset(args.data)
    def progress(step, loss):
        if step == 1 or step % tc.log_every == 0:
            log.info("step %d  loss %.5f", step, loss)
    _, _, curve, info = train(mc, tc, dataset, out_dir=args.out,
                              callback=progress)
    print(f"trained {tc.steps} steps; final loss {curve[-1]:.5f}; "
          f"checkpoint: {info['checkpoint']}")
    return 0


def _spec_for_render(args, scene):
    if args.trajectory:
        spec = TargetSpec.load(args.trajectory)
    else:
        cam = scene.targets[sorted(scene.targets)[0]]["camera"]
        spec = TargetSpec(entries=[(t, cam) for t in range(1, scene.T + 1)],
                          dilations=[1])
    if args.dilations:
        spec.dilations = [int(x) for x in args.dilations.split(",")]
    if args.bullet_time:
        spec = TargetSpec(entries=[(args.bullet_time, c) for _, c in spec.entries],
                          dilations=spec.dilations)
    elif args.sync:
        spec = TargetSpec(entries=[(i + 1, c) for i, (_, c) in enumerate(spec.entries)],
                          dilations=spec.dilations)
    return spec


def cmd_render(args):
    _resolve_config(args)
    params, mc, _, _ = _load_model(args.checkpoint)
    dataset = scenes.load_dataset(args.data)
    if not (0 <= args.scene < len(dataset)):
        raise ConfigError(f"scene index {args.scene} out of range")
    scene = dataset[args.scene]
    spec = _spec_for_render(args, scene)
    frames, fps = render_video(params, mc, scene.frames, scene.input_cameras,
                               spec, scene.near, scene.far,
                               recurrent=not args.no_recurrence)
    os.makedirs(args.out, exist_ok=True)
    for i, frame in enumerate(frames, 1):
        scenes._write_png(os.path.join(args.out, f"frame_{i:05d}.png"),
                          frame.transpose(1, 2, 0))
    print(f"wrote {len(frames)} frames to {args.out} ({fps:.2f} FPS)")
    return 0


def cmd_eval(args):
    _resolve_config(args)
    if args.identity:
        params, mc = {}, ModelConfig()
    elif not args.checkpoint:
        raise ConfigError("--checkpoint is required unless --identity is set")
    else:
        params, mc, _, _ = _load_model(args.checkpoint)
    dataset = scenes.load_dataset(args.data)
    dilations = [int(x) for x in args.dilations.split(",")] if args.dilations \
        else [1]
    report = evaluate(params, mc, dataset, dilations,
                      mode="bullet" if args.bullet_time else "sync",
                      bullet_t=args.bullet_time or 1,
                      recurrent=not args.no_recurrence,
                      limit_frames=args.limit_frames,
                      identity=args.identity)
    write_report(report, args.out)
    print(report_table(report))
    print(f"report written to {args.out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="dynview",
                                description=__doc__.splitlines()[0])
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--scenes", type=int, default=2)
    g.add_argument("--frames", type=int, default=0, help="override data.frames")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--save-depth", action="store_true")
    _add_config_flags(g)
    g.set_defaults(func=cmd_gen_data)

    i = sub.add_parser("inspect-psv", help="dump per-plane view means and focus scores")
    i.add_argument("--data", required=True)
    i.add_argument("--scene", type=int, default=0)
    i.add_argument("--frame", type=int, default=1)
    i.add_argument("--target", default="target1")
    i.add_argument("--planes", type=int, default=6)
    i.add_argument("--views", type=int, default=5)
    i.add_argument("--dilation", type=int, default=1)
    i.add_argument("--out", required=True)
    _add_config_flags(i)
    i.set_defaults(func=cmd_inspect_psv)

    t = sub.add_parser("train", help="train a model on a generated dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    _add_config_flags(t)
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("render", help="render a target trajectory")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--scene", type=int, default=0)
    r.add_argument("--trajectory", help="TargetSpec JSON file")
    r.add_argument("--bullet-time", type=int, default=0,
                   help="freeze scene time at this frame index")
    r.add_argument("--sync", action="store_true", help="force t_i = i")
    r.add_argument("--dilations", help="comma-separated pass schedule")
    r.add_argument("--no-recurrence", action="store_true")
    r.add_argument("--out", required=True)
    _add_config_flags(r)
    r.set_defaults(func=cmd_render)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a test dataset")
    e.add_argument("--checkpoint")
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--dilations", default="1")
    e.add_argument("--bullet-time", type=int, default=0)
    e.add_argument("--limit-frames", type=int, default=0)
    e.add_argument("--no-recurrence", action="store_true")
    e.add_argument("--identity", action="store_true",
                   help="score ground truth against itself (plumbing check)")
    _add_config_flags(e)
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as e:
        log.error("numerical failure: %s", e)
        return EXIT_NUMERICAL
    except (ConfigError, GeometryError) as e:
        log.error("configuration error: %s", e)
        return EXIT_CONFIG
    except (DataError, OSError) as e:
        log.error("I/O error: %s", e)
        return EXIT_IO
    except DynviewError as e:
        log.error("%s", e)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
