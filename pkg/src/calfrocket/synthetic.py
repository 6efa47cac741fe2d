"""Seeded generator of collar-like 3-axis recordings for the six behaviours.

Each behaviour has its own motion signature (dominant frequency, waveform
and noise character); each calf perturbs that signature with its own
frequency scale, gain, posture and noise level, so generalising to unseen
calves is non-trivial but feasible.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import BEHAVIOURS, LabeledSegment


def _signal(label: str, t: np.ndarray, rng: np.random.Generator, freq_scale: float, gain: float) -> np.ndarray:
    n = len(t)
    phase = rng.uniform(0, 2 * np.pi, 3)
    axis_gain = gain * rng.uniform(0.6, 1.4, 3)[:, None]
    if label == "lying":
        return np.zeros((3, n))
    if label == "running":
        f = 3.0 * freq_scale
        base = np.sin(2 * np.pi * f * t + phase[:, None]) + 0.4 * np.sin(4 * np.pi * f * t + 2 * phase[:, None])
        return 0.8 * axis_gain * base
    if label == "walking":
        f = 1.6 * freq_scale
        return 0.3 * axis_gain * np.sin(2 * np.pi * f * t + phase[:, None])
    if label == "grooming":
        f = 4.5 * freq_scale
        envelope = 0.5 * (1 + np.sin(2 * np.pi * 0.5 * t + phase[0]))
        return 0.15 * axis_gain * envelope * np.sin(2 * np.pi * f * t + phase[:, None])
    if label == "drinking_milk":
        f = 2.2 * freq_scale
        saw = ((f * t[None, :] + phase[:, None] / (2 * np.pi)) % 1.0) - 0.5
        return 0.2 * axis_gain * saw
    if label == "other":
        walk = np.cumsum(rng.normal(0, 1, (3, n)), axis=1)
        walk -= walk.mean(axis=1, keepdims=True)
        return 0.02 * axis_gain * walk
    raise ValueError(f"no signature for {label!r}")


def make_segments(
    n_calves: int = 20,
    seed: int = 0,
    sample_rate_hz: float = 25.0,
    segments_per_class: tuple[int, int] = (1, 2),
    segment_seconds: tuple[float, float] = (6.0, 12.0),
    labels: Sequence[str] = BEHAVIOURS,
) -> list[LabeledSegment]:
    rng = np.random.default_rng(seed)
    segments = []
    clock = 1_700_000_000.0
    for c in range(n_calves):
        calf = f"calf{c:02d}"
        freq_scale = 1.0 + rng.normal(0, 0.05)
        gain = float(np.exp(rng.normal(0, 0.15)))
        noise = 0.02 * float(np.exp(rng.normal(0, 0.2)))
        posture = rng.normal(0, 0.15, 3) + np.array([0.0, 0.0, 1.0])
        for label in labels:
            for s in range(int(rng.integers(segments_per_class[0], segments_per_class[1] + 1))):
                n = int(round(rng.uniform(*segment_seconds) * sample_rate_hz))
                t = np.arange(n) / sample_rate_hz
                tilt = posture + (np.array([0.6, 0.0, -0.4]) if label == "lying" else 0.0)
                xyz = tilt[:, None] + _signal(label, t, rng, freq_scale, gain)
                xyz += rng.normal(0, noise * (0.5 if label == "lying" else 1.0), xyz.shape)
                segments.append(LabeledSegment(calf, f"{calf}-{label}-{s}", label, clock + t, xyz.T))
                clock += n / sample_rate_hz + 60.0
    return segments


def write_csv(segments: Sequence[LabeledSegment], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["calf_id", "segment_id", "timestamp", "accX", "accY", "accZ", "label"])
        for seg in segments:
            for ts, (x, y, z) in zip(seg.timestamps, seg.values):
                w.writerow([seg.calf_id, seg.segment_id, repr(float(ts)), repr(float(x)), repr(float(y)), repr(float(z)), seg.behaviour_label])
    return path
