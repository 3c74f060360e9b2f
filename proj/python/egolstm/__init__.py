"""Python bindings for the egolstm C++ core."""

from ._core import (
    FormatError,
    Model,
    NumericError,
    ShapeError,
    conv2d,
    conv3d,
    evaluate,
    gradcheck,
    lrn,
    max_pool2d,
    parameter_counts,
    predict,
    run_cli,
    synth,
)

__all__ = [
    "FormatError",
    "Model",
    "NumericError",
    "ShapeError",
    "conv2d",
    "conv3d",
    "evaluate",
    "gradcheck",
    "lrn",
    "max_pool2d",
    "parameter_counts",
    "predict",
    "run_cli",
    "synth",
]
