"""Evaluation report serialization: JSON, CSV, aligned text table, figure."""

from __future__ import annotations

import json
import os


def _fmt(v, nd=3):
    return "-" if v is None else f"{v:.{nd}f}"


def report_table(report) -> str:
    """Aligned text table: one row per target camera plus the aggregate,
    PSNR/SSIM on full images (left) and dynamic regions only (right)."""
    header = f"{'camera':<12} {'PSNR':>8} {'SSIM':>8} | {'PSNR-dyn':>9} {'SSIM-dyn':>9}"
    lines = [header, "-" * len(header)]
    rows = list(sorted(report["cameras"].items())) + [("all", report["aggregate"])]
    for name, m in rows:
        lines.append(f"{name:<12} {_fmt(m['psnr_full']):>8} {_fmt(m['ssim_full']):>8}"
                     f" | {_fmt(m['psnr_dyn']):>9} {_fmt(m['ssim_dyn']):>9}")
    return "\n".join(lines)


def write_report(report, out_dir):
    """report.json + report.csv + report.txt + report.png under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump(report, f, indent=1, sort_keys=True)

    with open(os.path.join(out_dir, "report.csv"), "w") as f:
        f.write("pass,dilation,camera,psnr_full,ssim_full,psnr_dyn,ssim_dyn\n")
        for k, p in enumerate(report["per_pass"]):
            rows = list(sorted(p["cameras"].items())) + [("all", p["aggregate"])]
            for name, m in rows:
                f.write(f"{k},{p['dilation']},{name},"
                        f"{_fmt(m['psnr_full'], 6)},{_fmt(m['ssim_full'], 6)},"
                        f"{_fmt(m['psnr_dyn'], 6)},{_fmt(m['ssim_dyn'], 6)}\n")

    with open(os.path.join(out_dir, "report.txt"), "w") as f:
        f.write(report_table(report) + "\n")

    _write_figure(report, os.path.join(out_dir, "report.png"))


def _write_figure(report, path):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except Exception:
        return
    passes = report["per_pass"]
    xs = list(range(1, len(passes) + 1))
    full = [p["aggregate"]["psnr_full"] for p in passes]
    dyn = [p["aggregate"]["psnr_dyn"] for p in passes]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, full, "o-", label="full image")
    if all(v is not None for v in dyn):
        ax.plot(xs, dyn, "s-", label="dynamic only")
    ax.set_xticks(xs)
    ax.set_xticklabels([f"pass {i}\nd={p['dilation']}"
                        for i, p in zip(xs, passes)])
    ax.set_ylabel("PSNR (dB)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
