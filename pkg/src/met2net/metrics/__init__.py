"""Forecast metrics, linear CKA and split-level evaluation reports."""

from .core import (PSNR_CAP, MetricError, acc, acc_fields, gaussian_window, linear_cka, pcc, pcc_fields,
                   pixel_metrics, psnr, psnr_from_mse, r2, ssim, ssim_fields)
from .report import (METRICS, MetricsReport, evaluate, read_pgm, write_error_heatmaps, write_metrics_csv,
                     write_pgm, write_summary_csv)

__all__ = [
    "METRICS", "MetricError", "MetricsReport", "PSNR_CAP", "acc", "acc_fields", "evaluate", "gaussian_window",
    "linear_cka", "pcc", "pcc_fields", "pixel_metrics", "psnr", "psnr_from_mse", "r2", "read_pgm", "ssim",
    "ssim_fields", "write_error_heatmaps", "write_metrics_csv", "write_pgm", "write_summary_csv",
]
