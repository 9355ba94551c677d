"""Air-tissue boundary segmentation of rtMRI frames with low-resource adaptation."""

from ._atbseg import (
    AtbsegError,
    ConfigError,
    DataError,
    SegModel,
    ShapeError,
    TrainingError,
    contour_to_mask,
    dice,
    pca,
    phantom_clip,
    polygon_area,
    resize_frame,
    resize_mask,
    run_cli,
    write_benchmark_suite,
)

__all__ = [
    "AtbsegError",
    "ConfigError",
    "DataError",
    "SegModel",
    "ShapeError",
    "TrainingError",
    "contour_to_mask",
    "dice",
    "pca",
    "phantom_clip",
    "polygon_area",
    "resize_frame",
    "resize_mask",
    "run_cli",
    "write_benchmark_suite",
]
