from .metrics import psnr, ssim
from .train import TrainConfig, train
from .evaluate import evaluate, render_video, run_recurrence
from .report import report_table, write_report

__all__ = [
    "psnr", "ssim", "TrainConfig", "train", "evaluate", "render_video",
    "run_recurrence", "report_table", "write_report",
]
