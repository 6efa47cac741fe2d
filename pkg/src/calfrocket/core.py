"""Domain data model: accelerometer records, labelled segments, windows, datasets."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import EmptyInputError, ValidationError

logger = logging.getLogger(__name__)

BEHAVIOURS = ("drinking_milk", "grooming", "lying", "running", "walking", "other")
AXES = ("accX", "accY", "accZ")
DEFAULT_CHANNELS = ("accX", "accY", "accZ", "magnitude", "odba", "vedba", "pitch", "roll")

SAMPLE_RATE_HZ = 25.0
WINDOW_SECONDS = 3.0


def normalise_label(label: str) -> str:
    """Map free-form behaviour names such as ``"Drinking milk"`` to ``drinking_milk``."""
    return str(label).strip().lower().replace(" ", "_").replace("-", "_")


@dataclass(frozen=True)
class AccelRecord:
    calf_id: str
    timestamp: float
    channels: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class LabeledSegment:
    """One continuous annotated observation of a single calf.

    Samples are held column-wise (``timestamps`` of shape ``(n,)`` and
    ``values`` of shape ``(n, channels)``); :meth:`records` yields them as
    :class:`AccelRecord` objects.
    """

    calf_id: str
    segment_id: str
    behaviour_label: str
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or ts.ndim != 1 or len(ts) != len(vals):
            raise ValidationError(
                f"segment {self.segment_id}: timestamps {ts.shape} and values {vals.shape} disagree"
            )
        if self.behaviour_label not in BEHAVIOURS:
            raise ValidationError(
                f"segment {self.segment_id}: unknown behaviour {self.behaviour_label!r}; "
                f"expected one of {', '.join(BEHAVIOURS)}"
            )
        if len(ts) > 1 and not np.all(np.diff(ts) > 0):
            raise ValidationError(f"segment {self.segment_id}: timestamps must strictly increase")
        object.__setattr__(self, "calf_id", str(self.calf_id))
        object.__setattr__(self, "segment_id", str(self.segment_id))
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_records(
        cls, records: Sequence[AccelRecord], behaviour_label: str, segment_id: str
    ) -> LabeledSegment:
        if not records:
            raise EmptyInputError(f"segment {segment_id} has no records")
        calves = {r.calf_id for r in records}
        if len(calves) != 1:
            raise ValidationError(f"segment {segment_id} mixes calves {sorted(calves)}")
        arity = {len(r.channels) for r in records}
        if len(arity) != 1:
            raise ValidationError(f"segment {segment_id} mixes channel arities {sorted(arity)}")
        return cls(
            calf_id=records[0].calf_id,
            segment_id=segment_id,
            behaviour_label=behaviour_label,
            timestamps=np.array([r.timestamp for r in records]),
            values=np.array([r.channels for r in records]),
        )

    def __len__(self) -> int:
        return len(self.timestamps)

    def records(self) -> Iterator[AccelRecord]:
        for t, row in zip(self.timestamps, self.values):
            yield AccelRecord(self.calf_id, float(t), tuple(float(v) for v in row))


@dataclass(frozen=True, eq=False)
class LabeledWindow:
    """A fixed-length ``channels x length`` snippet cut from one segment."""

    calf_id: str
    segment_id: str
    behaviour_label: str
    data: np.ndarray
    window_index: int = 0

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2 or data.shape[1] == 0:
            raise ValidationError(f"window data must be a non-empty 2-D array, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError(f"window {self.segment_id}#{self.window_index} has non-finite values")
        object.__setattr__(self, "calf_id", str(self.calf_id))
        object.__setattr__(self, "segment_id", str(self.segment_id))
        object.__setattr__(self, "data", data)

    @property
    def key(self) -> str:
        return f"{self.segment_id}#{self.window_index}"

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray) -> LabeledWindow:
        return LabeledWindow(self.calf_id, self.segment_id, self.behaviour_label, data, self.window_index)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered collection of windows with a calf-level index."""

    windows: tuple[LabeledWindow, ...]
    label_set: tuple[str, ...] = ()
    channel_names: tuple[str, ...] = ()
    calf_index: Mapping[str, tuple[int, ...]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        windows = tuple(self.windows)
        present = {w.behaviour_label for w in windows}
        label_set = tuple(self.label_set) or tuple(b for b in BEHAVIOURS if b in present) + tuple(
            sorted(present - set(BEHAVIOURS))
        )
        missing = present - set(label_set)
        if missing:
            raise ValidationError(f"labels {sorted(missing)} not in label_set {label_set}")
        if windows:
            shapes = {w.data.shape for w in windows}
            if len({s[0] for s in shapes}) != 1:
                raise ValidationError(f"windows disagree on channel count: {sorted(shapes)}")
        index: dict[str, list[int]] = {}
        for i, w in enumerate(windows):
            index.setdefault(w.calf_id, []).append(i)
        object.__setattr__(self, "windows", windows)
        object.__setattr__(self, "label_set", label_set)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        object.__setattr__(self, "calf_index", {k: tuple(v) for k, v in sorted(index.items())})

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def calves(self) -> tuple[str, ...]:
        return tuple(self.calf_index)

    @cached_property
    def labels(self) -> np.ndarray:
        return np.array([w.behaviour_label for w in self.windows], dtype=str)

    @cached_property
    def calf_ids(self) -> np.ndarray:
        return np.array([w.calf_id for w in self.windows], dtype=str)

    @cached_property
    def keys(self) -> tuple[str, ...]:
        return tuple(w.key for w in self.windows)

    def stack(self) -> np.ndarray:
        """Return window data as one ``(n, channels, length)`` array."""
        if not self.windows:
            raise EmptyInputError("dataset has no windows")
        lengths = {w.length for w in self.windows}
        if len(lengths) != 1:
            raise ValidationError(f"windows have mixed lengths {sorted(lengths)}")
        return np.stack([w.data for w in self.windows])

    def subset(self, indices: Iterable[int]) -> Dataset:
        return Dataset(
            tuple(self.windows[i] for i in indices), self.label_set, self.channel_names
        )

    def indices_for(self, calves: Iterable[str]) -> np.ndarray:
        wanted = set(calves)
        unknown = wanted - set(self.calf_index)
        if unknown:
            raise ValidationError(f"unknown calves {sorted(unknown)}")
        return np.array(
            sorted(i for c in wanted for i in self.calf_index[c]), dtype=np.int64
        )

    def select_calves(self, calves: Iterable[str]) -> Dataset:
        return self.subset(self.indices_for(calves))


def window_size(window_seconds: float, sample_rate_hz: float) -> int:
    if window_seconds <= 0 or sample_rate_hz <= 0:
        raise ValidationError("window_seconds and sample_rate_hz must be positive")
    size = int(round(window_seconds * sample_rate_hz))
    if size < 1:
        raise ValidationError("window must span at least one sample")
    return size


def window_segment(
    segment: LabeledSegment,
    window_seconds: float = WINDOW_SECONDS,
    sample_rate_hz: float = SAMPLE_RATE_HZ,
) -> list[LabeledWindow]:
    """Cut ``segment`` into consecutive non-overlapping windows.

    A trailing remainder shorter than one window is dropped.
    """
    size = window_size(window_seconds, sample_rate_hz)
    if len(segment) == 0:
        raise EmptyInputError(f"segment {segment.segment_id} is empty")
    values = segment.values
    return [
        LabeledWindow(
            segment.calf_id,
            segment.segment_id,
            segment.behaviour_label,
            values[i * size : (i + 1) * size].T,
            window_index=i,
        )
        for i in range(len(segment) // size)
    ]


def split_on_gaps(
    segment: LabeledSegment, sample_rate_hz: float = SAMPLE_RATE_HZ, max_gap_periods: float = 2.0
) -> list[LabeledSegment]:
    """Split a segment wherever consecutive timestamps are more than
    ``max_gap_periods`` sample periods apart.

    Pieces are renamed ``<segment_id>.<k>`` only when a split happens.
    """
    if len(segment) < 2:
        return [segment]
    gaps = np.flatnonzero(np.diff(segment.timestamps) > max_gap_periods / sample_rate_hz)
    if gaps.size == 0:
        return [segment]
    logger.info("segment %s split at %d sensor gaps", segment.segment_id, gaps.size)
    bounds = np.concatenate([[0], gaps + 1, [len(segment)]])
    return [
        LabeledSegment(
            segment.calf_id,
            f"{segment.segment_id}.{k}",
            segment.behaviour_label,
            segment.timestamps[a:b],
            segment.values[a:b],
        )
        for k, (a, b) in enumerate(zip(bounds[:-1], bounds[1:]))
    ]


# Derived channels. Each function maps the (x, y, z) axes (1-D arrays) to one series.
# ``smooth`` estimates the static (gravity) component with a centred moving average.

def _static(a: np.ndarray, smooth: int) -> np.ndarray:
    return uniform_filter1d(a, size=max(1, min(smooth, len(a))), mode="nearest")


def _magnitude(x, y, z, smooth):
    return np.sqrt(x * x + y * y + z * z)


def _odba(x, y, z, smooth):
    return (
        np.abs(x - _static(x, smooth))
        + np.abs(y - _static(y, smooth))
        + np.abs(z - _static(z, smooth))
    )


def _vedba(x, y, z, smooth):
    dx, dy, dz = x - _static(x, smooth), y - _static(y, smooth), z - _static(z, smooth)
    return np.sqrt(dx * dx + dy * dy + dz * dz)


def _pitch(x, y, z, smooth):
    # arctan2(0, 0) == 0, so an all-zero sample has pitch 0
    return np.arctan2(-x, np.sqrt(y * y + z * z)) + 0.0


def _roll(x, y, z, smooth):
    return np.arctan2(y, z) + 0.0


DERIVATIONS: dict[str, Callable[..., np.ndarray]] = {
    "accX": lambda x, y, z, s: x,
    "accY": lambda x, y, z, s: y,
    "accZ": lambda x, y, z, s: z,
    "magnitude": _magnitude,
    "odba": _odba,
    "vedba": _vedba,
    "pitch": _pitch,
    "roll": _roll,
}


def derive_array(
    xyz: np.ndarray, channels: Sequence[str] = DEFAULT_CHANNELS, smoothing_samples: int = 25
) -> np.ndarray:
    """Compute the ``channels`` series from a ``(3, length)`` axis array."""
    xyz = np.asarray(xyz, dtype=np.float64)
    if xyz.ndim != 2 or xyz.shape[0] != 3:
        raise ValidationError(f"expected the 3 accelerometer axes, got shape {xyz.shape}")
    if not np.all(np.isfinite(xyz)):
        raise ValidationError("accelerometer axes contain non-finite values")
    unknown = [c for c in channels if c not in DERIVATIONS]
    if unknown:
        raise ValidationError(f"unknown channel derivations {unknown}; known: {sorted(DERIVATIONS)}")
    x, y, z = xyz
    return np.stack([np.asarray(DERIVATIONS[c](x, y, z, smoothing_samples), dtype=np.float64) for c in channels])


def derive_channels(
    window: LabeledWindow, channels: Sequence[str] = DEFAULT_CHANNELS, smoothing_samples: int = 25
) -> LabeledWindow:
    """Expand a raw 3-axis window into the configured channel layout.

    The default layout is ``accX, accY, accZ, magnitude, odba, vedba,
    pitch, roll``. ODBA and VeDBA use a centred moving average of
    ``smoothing_samples`` points as the static component; pitch and roll
    are in radians.
    """
    return window.with_data(derive_array(window.data, channels, smoothing_samples))
