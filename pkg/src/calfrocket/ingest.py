"""CSV ingestion, window preparation and the on-disk dataset archive."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from ._archive import load_archive, save_archive
from .core import (
    BEHAVIOURS,
    DEFAULT_CHANNELS,
    Dataset,
    LabeledSegment,
    LabeledWindow,
    derive_channels,
    normalise_label,
    split_on_gaps,
    window_segment,
)
from .errors import EmptyInputError, ValidationError
from .preprocess import PreprocessConfig, preprocess_window

CSV_COLUMNS = ("calf_id", "segment_id", "timestamp", "accX", "accY", "accZ", "label")
DATASET_FORMAT = "calfrocket.dataset/1"


@dataclass(frozen=True)
class IngestConfig:
    sample_rate_hz: float = 25.0
    window_seconds: float = 3.0
    max_gap_periods: float = 2.0
    channels: tuple[str, ...] = DEFAULT_CHANNELS
    smoothing_seconds: float = 1.0
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)

    @property
    def smoothing_samples(self) -> int:
        return max(1, int(round(self.smoothing_seconds * self.sample_rate_hz)))


def read_csv(path) -> list[LabeledSegment]:
    """Parse an accelerometer CSV into segments, in order of first appearance.

    Errors name the offending line (the header is line 1).
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path} does not exist")
    if path.stat().st_size == 0:
        raise EmptyInputError(f"{path} is empty")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise EmptyInputError(f"{path} is empty") from exc
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    header = tuple(c.strip() for c in frame.columns)
    if header != CSV_COLUMNS:
        raise ValidationError(f"{path}:1: header must be {','.join(CSV_COLUMNS)}, got {','.join(header)}")
    frame.columns = list(CSV_COLUMNS)
    if frame.empty:
        raise EmptyInputError(f"{path} has a header but no rows")

    for col in ("calf_id", "segment_id"):
        blank = frame[col].str.strip() == ""
        if blank.any():
            raise ValidationError(f"{path}:{int(np.flatnonzero(blank)[0]) + 2}: empty {col}")
    numeric = {}
    for col in ("timestamp", "accX", "accY", "accZ"):
        text = frame[col].str.strip().to_numpy()
        try:
            # exact decimal conversion; pandas' fast parser can be off by one ulp
            vals = text.astype(np.float64)
        except ValueError:
            vals = pd.to_numeric(frame[col].str.strip(), errors="coerce").to_numpy(dtype=np.float64)
        bad = ~np.isfinite(vals)
        if bad.any():
            line = int(np.flatnonzero(bad)[0]) + 2
            raise ValidationError(f"{path}:{line}: {col} value {frame[col].iloc[line - 2]!r} is not a finite number")
        numeric[col] = vals
    labels = frame["label"].map(normalise_label)
    unknown = ~labels.isin(BEHAVIOURS)
    if unknown.any():
        line = int(np.flatnonzero(unknown.to_numpy())[0]) + 2
        raise ValidationError(
            f"{path}:{line}: unknown behaviour {frame['label'].iloc[line - 2]!r}; expected one of {', '.join(BEHAVIOURS)}"
        )

    segments = []
    seg_ids = frame["segment_id"].str.strip().to_numpy()
    calf_ids = frame["calf_id"].str.strip().to_numpy()
    lab = labels.to_numpy()
    values = np.column_stack([numeric["accX"], numeric["accY"], numeric["accZ"]])
    ts = numeric["timestamp"]
    _, first, inverse = np.unique(seg_ids, return_index=True, return_inverse=True)
    for g in np.argsort(first, kind="stable"):
        rows = np.flatnonzero(inverse == g)
        sid = seg_ids[rows[0]]
        for col, arr in (("calf_id", calf_ids), ("label", lab)):
            mixed = rows[arr[rows] != arr[rows[0]]]
            if mixed.size:
                raise ValidationError(f"{path}:{int(mixed[0]) + 2}: segment {sid} mixes {col} values")
        rows = rows[np.argsort(ts[rows], kind="stable")]
        dup = np.flatnonzero(np.diff(ts[rows]) <= 0)
        if dup.size:
            raise ValidationError(f"{path}:{int(rows[dup[0] + 1]) + 2}: segment {sid} repeats timestamp {ts[rows[dup[0]]]}")
        segments.append(LabeledSegment(calf_ids[rows[0]], sid, lab[rows[0]], ts[rows], values[rows]))
    return segments


def segment_windows(segment: LabeledSegment, config: IngestConfig = IngestConfig()) -> list[LabeledWindow]:
    """Gap-split, window, derive channels and preprocess one raw segment."""
    out = []
    for piece in split_on_gaps(segment, config.sample_rate_hz, config.max_gap_periods):
        for w in window_segment(piece, config.window_seconds, config.sample_rate_hz):
            w = derive_channels(w, config.channels, config.smoothing_samples)
            out.append(preprocess_window(w, config.preprocess))
    return out


def build_dataset(segments: Iterable[LabeledSegment], config: IngestConfig = IngestConfig()) -> Dataset:
    windows = [w for seg in segments for w in segment_windows(seg, config)]
    return Dataset(tuple(windows), channel_names=tuple(config.channels))


def summarize(segments: Sequence[LabeledSegment], sample_rate_hz: float = 25.0) -> list[dict]:
    """Per-class total minutes, segment count and calf count."""
    rows = []
    present = {s.behaviour_label for s in segments}
    for label in (b for b in BEHAVIOURS if b in present):
        segs = [s for s in segments if s.behaviour_label == label]
        rows.append({
            "behaviour": label,
            "minutes": sum(len(s) for s in segs) / sample_rate_hz / 60.0,
            "segments": len(segs),
            "calves": len({s.calf_id for s in segs}),
        })
    return rows


def summary_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["behaviour", "minutes", "segments", "calves"])
    for r in rows:
        w.writerow([r["behaviour"], f"{r['minutes']:.2f}", r["segments"], r["calves"]])
    return buf.getvalue()


def save_dataset(dataset: Dataset, path, settings: dict | None = None) -> Path:
    return save_archive(
        path,
        DATASET_FORMAT,
        {"label_set": list(dataset.label_set), "channel_names": list(dataset.channel_names), "settings": settings or {}},
        {
            "data": dataset.stack(),
            "calf_ids": dataset.calf_ids,
            "segment_ids": np.array([w.segment_id for w in dataset.windows], dtype=str),
            "labels": dataset.labels,
            "window_index": np.array([w.window_index for w in dataset.windows], dtype=np.int64),
        },
    )


def load_dataset(path) -> Dataset:
    meta, a = load_archive(path, DATASET_FORMAT)
    windows = tuple(
        LabeledWindow(c, s, lab, d, int(i))
        for c, s, lab, d, i in zip(a["calf_ids"], a["segment_ids"], a["labels"], a["data"], a["window_index"])
    )
    return Dataset(windows, tuple(meta["label_set"]), tuple(meta["channel_names"]))
