"""Uniform-length resampling and per-window standardisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LabeledWindow
from .errors import ValidationError


@dataclass(frozen=True)
class PreprocessConfig:
    target_length: int = 75
    standardize: bool = True
    epsilon: float = 1e-12
    method: str = "linear"

    def __post_init__(self) -> None:
        if int(self.target_length) != self.target_length or self.target_length < 2:
            raise ValidationError("target_length must be an integer >= 2")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if self.method not in ("linear", "nearest"):
            raise ValidationError(f"unknown resampling method {self.method!r}")


def resample_to_length(series: np.ndarray, target_length: int, method: str = "linear") -> np.ndarray:
    """Resample ``series`` onto ``target_length`` evenly spaced points.

    Both endpoints are kept. ``method="nearest"`` picks the closest
    original sample instead of interpolating linearly, rounding halfway points up.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1 or len(series) < 2:
        raise ValidationError("resampling needs a 1-D series of at least 2 points")
    if target_length < 2:
        raise ValidationError("target_length must be >= 2")
    if len(series) == target_length:
        return series.copy()
    src = np.linspace(0.0, 1.0, len(series))
    dst = np.linspace(0.0, 1.0, target_length)
    if method == "nearest":
        return series[np.floor(dst * (len(series) - 1) + 0.5).astype(np.int64)]
    return np.interp(dst, src, series)


def standardize_array(data: np.ndarray, epsilon: float = 1e-12) -> np.ndarray:
    """Per-row ``(x - mean) / std`` with population std.

    Rows whose std does not exceed ``epsilon`` are zero-variance and map to zeros.
    """
    data = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise ValidationError("cannot standardise non-finite values")
    mean = data.mean(axis=-1, keepdims=True)
    std = data.std(axis=-1, keepdims=True)
    flat = std <= epsilon
    out = (data - mean) / np.where(flat, 1.0, std)
    return np.where(flat, 0.0, out)


def standardize(window: LabeledWindow, epsilon: float = 1e-12) -> LabeledWindow:
    return window.with_data(standardize_array(window.data, epsilon))


def preprocess_window(window: LabeledWindow, config: PreprocessConfig = PreprocessConfig()) -> LabeledWindow:
    data = window.data
    if data.shape[1] != config.target_length:
        data = np.stack([resample_to_length(row, config.target_length, config.method) for row in data])
    if config.standardize:
        data = standardize_array(data, config.epsilon)
    return window.with_data(data)
