"""Attention LSTM forecaster with spatio/temporal interpretability."""

from ._lagsight import (
    Checkpoint,
    CheckpointError,
    DivergenceError,
    Frame,
    IoError,
    ShapeError,
    ValidationError,
    generate,
    train,
    window_count,
)

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "DivergenceError",
    "Frame",
    "IoError",
    "ShapeError",
    "ValidationError",
    "generate",
    "train",
    "window_count",
]
