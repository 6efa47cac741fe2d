"""Calf behaviour classification from collar accelerometer windows.

MiniRocket/ROCKET features with a one-vs-rest ridge classifier, calf-level
stratified splitting, an MLP baseline and macro-averaged evaluation.
"""

from .core import BEHAVIOURS, DEFAULT_CHANNELS, Dataset, LabeledSegment, LabeledWindow
from .errors import (
    CalfRocketError,
    CoverageError,
    EmptyInputError,
    LeakageError,
    NumericalError,
    UnsatisfiableStratificationError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "BEHAVIOURS",
    "DEFAULT_CHANNELS",
    "Dataset",
    "LabeledSegment",
    "LabeledWindow",
    "CalfRocketError",
    "CoverageError",
    "EmptyInputError",
    "LeakageError",
    "NumericalError",
    "UnsatisfiableStratificationError",
    "ValidationError",
]
