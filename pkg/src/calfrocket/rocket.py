"""ROCKET and MiniRocket convolutional feature extraction.

ROCKET draws random kernels and pools each convolution output into two
features, the maximum and the proportion of positive values (PPV).
MiniRocket uses the 84 fixed length-9 kernels with weights in {-1, 2},
exponentially spaced dilations and biases drawn from quantiles of training
convolutions, and keeps PPV only. Multichannel windows are transformed one
channel at a time and the per-channel blocks are concatenated.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from numba import njit

from ._archive import load_archive, save_archive
from .core import Dataset
from .errors import EmptyInputError, ValidationError

logger = logging.getLogger(__name__)

ROCKET_LENGTHS = (7, 9, 11)
MINIROCKET_LENGTH = 9
MINIROCKET_INDICES = np.array(list(combinations(range(MINIROCKET_LENGTH), 3)), dtype=np.int64)
N_MINIROCKET_KERNELS = len(MINIROCKET_INDICES)  # C(9, 3) == 84

PARAMS_FORMAT = "calfrocket.minirocket/1"
KERNELS_FORMAT = "calfrocket.rocket/1"


@dataclass(frozen=True, eq=False)
class RocketKernel:
    """One dilated convolution kernel.

    ``padding`` switches on zero padding of ``(length - 1) * dilation // 2``
    samples at each end of the series.
    """

    weights: np.ndarray
    bias: float
    dilation: int
    padding: bool

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or len(w) % 2 == 0:
            raise ValidationError("kernel weights must be a 1-D vector of odd length")
        if int(self.dilation) < 1:
            raise ValidationError("dilation must be >= 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "dilation", int(self.dilation))
        object.__setattr__(self, "bias", float(self.bias))
        object.__setattr__(self, "padding", bool(self.padding))

    @property
    def length(self) -> int:
        return len(self.weights)

    @property
    def pad(self) -> int:
        return (self.length - 1) * self.dilation // 2 if self.padding else 0


def generate_rocket_kernels(count: int, input_length: int, seed: int = 0) -> list[RocketKernel]:
    """Draw ``count`` random kernels for series of ``input_length`` points."""
    if count < 1:
        raise ValidationError("count must be >= 1")
    if input_length < max(ROCKET_LENGTHS):
        raise ValidationError(
            f"input_length {input_length} is shorter than the longest kernel ({max(ROCKET_LENGTHS)})"
        )
    rng = np.random.default_rng(seed)
    kernels = []
    for _ in range(count):
        length = int(rng.choice(ROCKET_LENGTHS))
        weights = rng.normal(0.0, 1.0, length)
        weights -= weights.mean()
        bias = rng.uniform(-1.0, 1.0)
        exponent = rng.uniform(0.0, np.log2((input_length - 1) / (length - 1)))
        dilation = int(np.floor(2.0**exponent))
        padding = bool(rng.integers(2))
        kernels.append(RocketKernel(weights, bias, dilation, padding))
    return kernels


@njit(cache=True, nogil=True)
def _apply_kernel(x, weights, bias, dilation, pad):
    n = x.shape[0]
    length = weights.shape[0]
    out_len = n + 2 * pad - (length - 1) * dilation
    if out_len <= 0:
        return 0.0, 0.0, False
    best = -np.inf
    positive = 0
    for i in range(-pad, n + pad - (length - 1) * dilation):
        s = bias
        idx = i
        for j in range(length):
            if idx >= 0 and idx < n:
                s += weights[j] * x[idx]
            idx += dilation
        if s > best:
            best = s
        if s > 0.0:
            positive += 1
    return best, positive / out_len, True


def apply_kernel(series: np.ndarray, kernel: RocketKernel) -> tuple[float, float]:
    """Convolve ``series`` with ``kernel`` and return ``(max, ppv)``.

    When the receptive field does not fit even after padding, the pair
    ``(0.0, 0.0)`` is returned and a warning is logged.
    """
    x = np.ascontiguousarray(series, dtype=np.float64)
    best, ppv, ok = _apply_kernel(x, kernel.weights, kernel.bias, kernel.dilation, kernel.pad)
    if not ok:
        logger.warning(
            "kernel (length %d, dilation %d) does not fit a series of %d points; emitting (0, 0)",
            kernel.length, kernel.dilation, len(x),
        )
    return best, ppv


@njit(cache=True, nogil=True)
def _rocket_block(X, weights, offsets, biases, dilations, pads):
    n, channels, _ = X.shape
    k = biases.shape[0]
    out = np.zeros((n, channels * 2 * k))
    misfits = 0
    for i in range(n):
        for c in range(channels):
            x = X[i, c]
            base = c * 2 * k
            for j in range(k):
                w = weights[offsets[j] : offsets[j + 1]]
                best, ppv, ok = _apply_kernel(x, w, biases[j], dilations[j], pads[j])
                if not ok:
                    misfits += 1
                out[i, base + 2 * j] = best
                out[i, base + 2 * j + 1] = ppv
    return out, misfits


@njit(cache=True, nogil=True)
def _shifted(x, dilation):
    # rows j = 0..8 hold x shifted by (j - 4) * dilation, zero filled
    n = x.shape[0]
    S = np.zeros((9, n))
    for j in range(9):
        off = (j - 4) * dilation
        for t in range(n):
            s = t + off
            if s >= 0 and s < n:
                S[j, t] = x[s]
    return S


@njit(cache=True, nogil=True)
def _minirocket_conv(x, dilation, i0, i1, i2):
    S = _shifted(x, dilation)
    total = S.sum(axis=0)
    return 3.0 * (S[i0] + S[i1] + S[i2]) - total


@njit(cache=True, nogil=True)
def _minirocket_block(X, dilations, per_dilation, biases, indices):
    n, channels, length = X.shape
    f_per = biases.shape[1]
    out = np.zeros((n, channels * f_per))
    for i in range(n):
        for c in range(channels):
            x = X[i, c]
            f = 0
            for di in range(dilations.shape[0]):
                d = dilations[di]
                pad = 4 * d
                S = _shifted(x, d)
                total = S.sum(axis=0)
                for k in range(indices.shape[0]):
                    C = 3.0 * (S[indices[k, 0]] + S[indices[k, 1]] + S[indices[k, 2]]) - total
                    # alternate between the full output and the unpadded part
                    trim = (di + k) % 2 == 1
                    lo = pad if trim else 0
                    hi = length - pad if trim else length
                    for q in range(per_dilation[di]):
                        b = biases[c, f]
                        positive = 0
                        for t in range(lo, hi):
                            if C[t] > b:
                                positive += 1
                        out[i, c * f_per + f] = positive / (hi - lo)
                        f += 1
    return out


@dataclass(frozen=True, eq=False)
class MiniRocketParams:
    """Fitted MiniRocket state.

    ``biases`` has one row per channel; columns run over dilation, then
    kernel index, then quantile.
    """

    dilations: np.ndarray
    features_per_dilation: np.ndarray
    biases: np.ndarray
    input_length: int
    seed: int
    kernel_indices: np.ndarray = field(default_factory=lambda: MINIROCKET_INDICES.copy())

    def __post_init__(self) -> None:
        object.__setattr__(self, "dilations", np.asarray(self.dilations, dtype=np.int64))
        object.__setattr__(self, "features_per_dilation", np.asarray(self.features_per_dilation, dtype=np.int64))
        object.__setattr__(self, "biases", np.atleast_2d(np.asarray(self.biases, dtype=np.float64)))
        object.__setattr__(self, "kernel_indices", np.asarray(self.kernel_indices, dtype=np.int64))
        if self.kernel_indices.shape != (N_MINIROCKET_KERNELS, 3):
            raise ValidationError("MiniRocket needs exactly 84 kernel index triples")
        if self.biases.shape[1] != self.features_per_channel:
            raise ValidationError("bias count does not match the dilation layout")

    @property
    def features_per_channel(self) -> int:
        return N_MINIROCKET_KERNELS * int(self.features_per_dilation.sum())

    @property
    def channel_count(self) -> int:
        return self.biases.shape[0]

    def save(self, path) -> Path:
        return save_archive(
            path,
            PARAMS_FORMAT,
            {"input_length": self.input_length, "seed": self.seed},
            {
                "dilations": self.dilations,
                "features_per_dilation": self.features_per_dilation,
                "biases": self.biases,
                "kernel_indices": self.kernel_indices,
            },
        )

    @classmethod
    def load(cls, path) -> MiniRocketParams:
        meta, arrays = load_archive(path, PARAMS_FORMAT)
        return cls(
            arrays["dilations"], arrays["features_per_dilation"], arrays["biases"],
            int(meta["input_length"]), int(meta["seed"]), arrays["kernel_indices"],
        )


def quantile_sequence(n: int) -> np.ndarray:
    """Low-discrepancy quantiles ``frac(k * golden_ratio)`` for ``k = 1..n``."""
    phi = (np.sqrt(5.0) + 1.0) / 2.0
    return (np.arange(1, n + 1) * phi) % 1.0


def fit_dilations(
    input_length: int, features_per_channel: int, max_dilations_per_kernel: int = 32
) -> tuple[np.ndarray, np.ndarray]:
    """Exponentially spaced dilations and how many features each one gets."""
    per_kernel = features_per_channel // N_MINIROCKET_KERNELS
    if per_kernel < 1:
        raise ValidationError(f"at least {N_MINIROCKET_KERNELS} features per channel are required")
    if input_length < MINIROCKET_LENGTH:
        raise ValidationError(f"series of {input_length} points is shorter than the kernel length 9")
    n_dil = min(per_kernel, max_dilations_per_kernel)
    multiplier = per_kernel / n_dil
    max_exponent = np.log2((input_length - 1) / (MINIROCKET_LENGTH - 1))
    dilations, counts = np.unique(
        np.logspace(0, max_exponent, n_dil, base=2).astype(np.int64), return_counts=True
    )
    counts = (counts * multiplier).astype(np.int64)
    remainder = per_kernel - counts.sum()
    i = 0
    while remainder > 0:
        counts[i] += 1
        remainder -= 1
        i = (i + 1) % len(counts)
    return dilations, counts


def _as_array(data: Union[Dataset, np.ndarray]) -> np.ndarray:
    X = data.stack() if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, None, :]
    if X.ndim != 3:
        raise ValidationError(f"expected (windows, channels, length) data, got shape {X.shape}")
    if len(X) == 0:
        raise EmptyInputError("no windows to transform")
    return np.ascontiguousarray(X, dtype=np.float64)


def fit_minirocket(
    training: Union[Dataset, np.ndarray],
    features_per_channel: int = 10_000,
    seed: int = 0,
    max_dilations_per_kernel: int = 32,
) -> MiniRocketParams:
    """Fit dilations and quantile biases on training windows only.

    The feature budget is rounded down to a multiple of 84. For every
    (channel, dilation, kernel) one training window is drawn under ``seed``
    and the biases are quantiles of its convolution output.
    """
    try:
        X = _as_array(training)
    except EmptyInputError as exc:
        raise ValidationError("cannot fit MiniRocket on an empty training set") from exc
    n, channels, length = X.shape
    dilations, per_dilation = fit_dilations(length, features_per_channel, max_dilations_per_kernel)
    f_per = N_MINIROCKET_KERNELS * int(per_dilation.sum())
    quantiles = quantile_sequence(f_per)
    rng = np.random.default_rng(seed)
    picks = rng.integers(n, size=(channels, len(dilations), N_MINIROCKET_KERNELS))
    biases = np.empty((channels, f_per))
    for c in range(channels):
        f = 0
        for di, d in enumerate(dilations):
            m = int(per_dilation[di])
            for k, (i0, i1, i2) in enumerate(MINIROCKET_INDICES):
                C = _minirocket_conv(X[picks[c, di, k], c], int(d), i0, i1, i2)
                biases[c, f : f + m] = np.quantile(C, quantiles[f : f + m])
                f += m
    return MiniRocketParams(dilations, per_dilation, biases, length, seed)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray
    per_channel_feature_count: int
    channel_count: int
    column_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or self.values.shape[1] != self.per_channel_feature_count * self.channel_count:
            raise ValidationError("feature matrix width disagrees with its channel bookkeeping")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def to_csv(self, path, row_keys: Sequence[str] | None = None) -> Path:
        """Write the matrix with a header row; values use ``repr`` precision."""
        path = Path(path)
        names = self.column_names or tuple(f"f{i}" for i in range(self.values.shape[1]))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join((["window"] if row_keys is not None else []) + list(names)) + "\n")
            for i, row in enumerate(self.values):
                cells = [repr(float(v)) for v in row]
                if row_keys is not None:
                    cells.insert(0, row_keys[i])
                fh.write(",".join(cells) + "\n")
        return path


def minirocket_column_names(params: MiniRocketParams, channel_names: Sequence[str] = ()) -> tuple[str, ...]:
    names = list(channel_names) or [f"ch{c}" for c in range(params.channel_count)]
    cols = []
    for ch in names:
        for d, m in zip(params.dilations, params.features_per_dilation):
            for k in range(N_MINIROCKET_KERNELS):
                cols.extend(f"{ch}_d{d}_k{k}_q{q}" for q in range(m))
    return tuple(cols)


def _pack(kernels: Sequence[RocketKernel]):
    weights = np.concatenate([k.weights for k in kernels])
    offsets = np.concatenate([[0], np.cumsum([k.length for k in kernels])]).astype(np.int64)
    return (
        weights,
        offsets,
        np.array([k.bias for k in kernels]),
        np.array([k.dilation for k in kernels], dtype=np.int64),
        np.array([k.pad for k in kernels], dtype=np.int64),
    )


def _chunks(n: int, workers: int) -> list[slice]:
    size = max(1, -(-n // max(1, workers)))
    return [slice(a, min(n, a + size)) for a in range(0, n, size)]


def transform(
    data: Union[Dataset, np.ndarray],
    params: Union[MiniRocketParams, Sequence[RocketKernel]],
    workers: int = 1,
) -> FeatureMatrix:
    """Pool convolution features for every window.

    Rows follow the input order. Work is split across ``workers`` threads by
    contiguous window blocks; each row depends on its own window only, so the
    result does not depend on ``workers``.
    """
    X = _as_array(data)
    channel_names = data.channel_names if isinstance(data, Dataset) else ()
    slices = _chunks(len(X), workers)

    if isinstance(params, MiniRocketParams):
        if X.shape[1] != params.channel_count:
            raise ValidationError(
                f"windows have {X.shape[1]} channels but MiniRocket was fitted on {params.channel_count}"
            )
        if X.shape[2] != params.input_length:
            raise ValidationError(
                f"windows have length {X.shape[2]} but MiniRocket was fitted on {params.input_length}"
            )

        def run(s):
            return _minirocket_block(X[s], params.dilations, params.features_per_dilation, params.biases, params.kernel_indices)

        per_channel = params.features_per_channel
        names = minirocket_column_names(params, channel_names)
    else:
        kernels = list(params)
        if not kernels:
            raise ValidationError("no ROCKET kernels given")
        packed = _pack(kernels)

        def run(s):
            out, misfits = _rocket_block(X[s], *packed)
            if misfits:
                logger.warning("%d kernel applications did not fit the series; emitted (0, 0)", misfits)
            return out

        per_channel = 2 * len(kernels)
        chs = list(channel_names) or [f"ch{c}" for c in range(X.shape[1])]
        names = tuple(f"{ch}_k{j}_{stat}" for ch in chs for j in range(len(kernels)) for stat in ("max", "ppv"))

    if len(slices) == 1:
        values = run(slices[0])
    else:
        with ThreadPoolExecutor(max_workers=len(slices)) as pool:
            values = np.concatenate(list(pool.map(run, slices)))
    return FeatureMatrix(values, per_channel, X.shape[1], names)


def save_kernels(kernels: Sequence[RocketKernel], path, seed: int | None = None) -> Path:
    weights, offsets, biases, dilations, _ = _pack(kernels)
    paddings = np.array([k.padding for k in kernels])
    return save_archive(
        path, KERNELS_FORMAT, {"seed": seed, "count": len(kernels)},
        {"weights": weights, "offsets": offsets, "biases": biases, "dilations": dilations, "paddings": paddings},
    )


def load_kernels(path) -> list[RocketKernel]:
    _, a = load_archive(path, KERNELS_FORMAT)
    off = a["offsets"]
    return [
        RocketKernel(a["weights"][off[j] : off[j + 1]], a["biases"][j], a["dilations"][j], a["paddings"][j])
        for j in range(len(a["biases"]))
    ]
