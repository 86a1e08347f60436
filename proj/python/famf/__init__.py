"""Frame aggregation and multi-modal fusion for set-based person recognition."""

from ._core import (
    attention_matrix_report,
    attention_vlad,
    average_precision,
    frame_weight_report,
    ghost_vlad,
    init_aggregation,
    lr_at,
    map_at_100,
    mlma,
    mma,
    netvlad,
    run_command,
    sample_frames,
    soft_assign,
)

__all__ = [
    "attention_matrix_report",
    "attention_vlad",
    "average_precision",
    "frame_weight_report",
    "ghost_vlad",
    "init_aggregation",
    "lr_at",
    "map_at_100",
    "mlma",
    "mma",
    "netvlad",
    "run_command",
    "sample_frames",
    "soft_assign",
]
