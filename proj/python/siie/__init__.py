"""Sensor-independent illuminant estimation."""

from ._siie import (
    FormatError,
    Image,
    InvalidArgument,
    InvalidInput,
    IoError,
    Model,
    SingularMatrixError,
    TrainingAbort,
    baseline,
    baseline_names,
    error_stats,
    evaluate,
    histogram,
    load_dataset,
    read_image,
    recovery_error,
    reproduction_error,
    synth_generate,
    to_thumbnail,
    train,
)

__all__ = [
    "FormatError",
    "Image",
    "InvalidArgument",
    "InvalidInput",
    "IoError",
    "Model",
    "SingularMatrixError",
    "TrainingAbort",
    "baseline",
    "baseline_names",
    "error_stats",
    "evaluate",
    "histogram",
    "load_dataset",
    "read_image",
    "recovery_error",
    "reproduction_error",
    "synth_generate",
    "to_thumbnail",
    "train",
]
