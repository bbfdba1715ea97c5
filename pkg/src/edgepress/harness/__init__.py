"""Metrics, latency timing, the compression sweep and its reports."""

from ..metrics import auc_roc
from .report import CSV_COLUMNS, emit_all, emit_plots, emit_report, emit_summary, read_report
from .sweep import (
    DEFAULT_SPARSITIES,
    PRECISIONS,
    PreparedData,
    SweepConfig,
    SweepRow,
    aggregate,
    evaluate_variants,
    prepare_data,
    run_sweep,
    train_baseline,
)
from .timing import Timing, time_single_inference

__all__ = [
    "CSV_COLUMNS",
    "DEFAULT_SPARSITIES",
    "PRECISIONS",
    "PreparedData",
    "SweepConfig",
    "SweepRow",
    "Timing",
    "aggregate",
    "auc_roc",
    "emit_all",
    "emit_plots",
    "emit_report",
    "emit_summary",
    "evaluate_variants",
    "prepare_data",
    "read_report",
    "run_sweep",
    "time_single_inference",
    "train_baseline",
]
