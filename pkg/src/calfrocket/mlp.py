"""Fully connected neural baseline written directly in numpy.

Three ReLU hidden layers with inverted dropout feed a softmax output trained
on categorical cross-entropy by mini-batch backpropagation. Adadelta is the
default optimiser; SGD (with momentum) and Adam are also available. The
learning rate is cut by a constant factor whenever the monitored loss stops
improving for ``patience`` epochs.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._archive import load_archive, save_archive
from .errors import LeakageError, NumericalError, ValidationError

CHECKPOINT_FORMAT = "calfrocket.mlp/1"
OPTIMIZERS = ("adadelta", "sgd", "adam")


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def relu(x):
    out = np.maximum(0.0, np.asarray(x, dtype=np.float64))
    return out if out.ndim else float(out)


def softmax(v, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v - v.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(probs: np.ndarray, onehot: np.ndarray) -> float:
    """Mean categorical cross-entropy; probabilities are floored at 1e-300."""
    return float(-np.mean(np.sum(onehot * np.log(np.maximum(probs, 1e-300)), axis=-1)))


@dataclass(frozen=True)
class MlpConfig:
    hidden_sizes: tuple[int, ...] = (500, 500, 500)
    dropout_rate: float = 0.1
    epochs: int = 200
    batch_size: int = 16
    optimizer: str = "adadelta"
    learning_rate: float = 1.0
    rho: float = 0.95
    epsilon: float = 1e-6
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    plateau_patience: int = 50
    plateau_factor: float = 0.5
    min_lr: float = 1e-3
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ValidationError("hidden sizes must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError("dropout_rate must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValidationError("epochs must be >= 0 and batch_size >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"optimizer must be one of {OPTIMIZERS}")
        if not 0 < self.plateau_factor < 1 or self.plateau_patience < 1:
            raise ValidationError("plateau factor must lie in (0, 1) and patience be >= 1")
        if not 0 < self.min_lr <= self.learning_rate:
            raise ValidationError("min_lr must be positive and not exceed learning_rate")


@dataclass
class History:
    loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "loss", "val_loss", "lr"])
            for e, (loss, lr) in enumerate(zip(self.loss, self.lr)):
                val = repr(self.val_loss[e]) if e < len(self.val_loss) else ""
                w.writerow([e + 1, repr(loss), val, repr(lr)])
        return path


@dataclass(eq=False)
class MlpModel:
    params: list[np.ndarray]  # W0, b0, W1, b1, ...
    label_order: tuple[str, ...]
    config: MlpConfig
    history: History = field(default_factory=History)

    @property
    def n_inputs(self) -> int:
        return self.params[0].shape[0]

    def save(self, path) -> Path:
        meta = {"label_order": list(self.label_order), "config": asdict(self.config),
                "history": asdict(self.history)}
        return save_archive(path, CHECKPOINT_FORMAT, meta, {f"p{i:02d}": p for i, p in enumerate(self.params)})

    @classmethod
    def load(cls, path) -> MlpModel:
        meta, arrays = load_archive(path, CHECKPOINT_FORMAT)
        params = [arrays[k] for k in sorted(arrays)]
        return cls(params, tuple(meta["label_order"]), MlpConfig(**meta["config"]), History(**meta["history"]))


def init_params(sizes: Sequence[int], seed: int) -> list[np.ndarray]:
    """Uniform fan-in initialisation ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``, zero biases."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[0])
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        params.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params, X, masks=None):
    """Return ``(probs, cache)``; ``masks`` holds one dropout mask per hidden layer."""
    acts = [X]
    pre = []
    a = X
    n_layers = len(params) // 2
    for layer in range(n_layers):
        z = a @ params[2 * layer] + params[2 * layer + 1]
        pre.append(z)
        if layer == n_layers - 1:
            break
        a = np.maximum(z, 0.0)
        if masks is not None:
            a = a * masks[layer]
        acts.append(a)
    return softmax(pre[-1]), (acts, pre)


def loss_and_grad(params, X, Y, masks=None) -> tuple[float, list[np.ndarray]]:
    probs, (acts, pre) = forward(params, X, masks)
    loss = cross_entropy(probs, Y)
    n_layers = len(params) // 2
    grads: list[np.ndarray] = [None] * len(params)  # type: ignore[list-item]
    delta = (probs - Y) / len(X)
    for layer in range(n_layers - 1, -1, -1):
        grads[2 * layer] = acts[layer].T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer == 0:
            break
        delta = delta @ params[2 * layer].T
        if masks is not None:
            delta = delta * masks[layer - 1]
        delta = delta * (pre[layer - 1] > 0)
    return loss, grads


class _Adadelta:
    def __init__(self, params, cfg: MlpConfig):
        self.rho, self.eps = cfg.rho, cfg.epsilon
        self.g2 = [np.zeros_like(p) for p in params]
        self.d2 = [np.zeros_like(p) for p in params]

    def step(self, params, grads, lr):
        for p, g, g2, d2 in zip(params, grads, self.g2, self.d2):
            g2 *= self.rho
            g2 += (1 - self.rho) * g * g
            update = np.sqrt(d2 + self.eps) / np.sqrt(g2 + self.eps) * g
            d2 *= self.rho
            d2 += (1 - self.rho) * update * update
            p -= lr * update


class _Sgd:
    def __init__(self, params, cfg: MlpConfig):
        self.momentum = cfg.momentum
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads, lr):
        for p, g, v in zip(params, grads, self.v):
            v *= self.momentum
            v -= lr * g
            p += v


class _Adam:
    def __init__(self, params, cfg: MlpConfig):
        self.b1, self.b2, self.eps = cfg.beta1, cfg.beta2, cfg.epsilon
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


_OPT = {"adadelta": _Adadelta, "sgd": _Sgd, "adam": _Adam}


def _flatten(X) -> np.ndarray:
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    if X.ndim < 2:
        raise ValidationError("inputs need a leading sample axis")
    return X.reshape(len(X), -1)


def _onehot(labels, order) -> np.ndarray:
    lookup = {c: i for i, c in enumerate(order)}
    try:
        idx = [lookup[v] for v in np.asarray(labels).tolist()]
    except KeyError as exc:
        raise ValidationError(f"label {exc.args[0]!r} not in label order") from None
    Y = np.zeros((len(idx), len(order)))
    Y[np.arange(len(idx)), idx] = 1.0
    return Y


def train(
    X,
    labels,
    config: MlpConfig = MlpConfig(),
    validation: tuple | None = None,
    groups: tuple | None = None,
    label_order: Sequence[str] | None = None,
) -> MlpModel:
    """Train the baseline on flattened inputs.

    ``validation`` is an optional ``(X_val, labels_val)`` pair whose loss
    drives learning-rate reduction (otherwise the training loss does).
    ``groups`` is an optional ``(train_calves, val_calves)`` pair of per-row
    calf ids; overlapping calves raise :class:`LeakageError`.
    """
    Xf = _flatten(X)
    labels = np.asarray(labels)
    if len(Xf) != len(labels):
        raise ValidationError(f"{len(Xf)} inputs but {len(labels)} labels")
    order = tuple(label_order) if label_order is not None else tuple(sorted(set(labels.tolist())))
    if len(set(labels.tolist())) < 2:
        raise ValidationError("training needs at least 2 classes")
    Y = _onehot(labels, order)
    if groups is not None:
        shared = set(np.asarray(groups[0]).tolist()) & set(np.asarray(groups[1]).tolist())
        if shared:
            raise LeakageError(f"calves in both training and validation: {sorted(shared)}")
    val = None
    if validation is not None:
        val = (_flatten(validation[0]), _onehot(validation[1], order))

    cfg = config
    params = init_params((Xf.shape[1], *cfg.hidden_sizes, len(order)), cfg.seed)
    history = History()
    opt = _OPT[cfg.optimizer](params, cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[1])
    keep = 1.0 - cfg.dropout_rate
    lr = cfg.learning_rate
    best, wait = np.inf, 0

    for epoch in range(1, cfg.epochs + 1):
        order_idx = rng.permutation(len(Xf))
        total = 0.0
        for start in range(0, len(Xf), cfg.batch_size):
            batch = order_idx[start : start + cfg.batch_size]
            masks = None
            if cfg.dropout_rate > 0:
                masks = [(rng.random((len(batch), h)) < keep) / keep for h in cfg.hidden_sizes]
            loss, grads = loss_and_grad(params, Xf[batch], Y[batch], masks)
            if not np.isfinite(loss):
                raise NumericalError(f"training loss became non-finite at epoch {epoch}")
            opt.step(params, grads, lr)
            total += loss * len(batch)
        history.loss.append(total / len(Xf))
        history.lr.append(lr)
        monitored = history.loss[-1]
        if val is not None:
            probs, _ = forward(params, val[0])
            monitored = cross_entropy(probs, val[1])
            history.val_loss.append(monitored)
        if not np.isfinite(monitored):
            raise NumericalError(f"monitored loss became non-finite at epoch {epoch}")
        if monitored < best:
            best, wait = monitored, 0
        else:
            wait += 1
            if wait >= cfg.plateau_patience:
                lr = max(lr * cfg.plateau_factor, cfg.min_lr)
                wait = 0
    return MlpModel(params, order, cfg, history)


def predict_proba(model: MlpModel, X) -> np.ndarray:
    Xf = _flatten(X)
    if Xf.shape[1] != model.n_inputs:
        raise ValidationError(f"model expects {model.n_inputs} inputs per sample, got {Xf.shape[1]}")
    probs, _ = forward(model.params, Xf)
    return probs


def mlp_predict(model: MlpModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(labels, probabilities)``; dropout is off at inference."""
    probs = predict_proba(model, X)
    return np.asarray(model.label_order)[np.argmax(probs, axis=1)], probs


def config_from_dict(d: dict) -> MlpConfig:
    d = dict(d)
    if "hidden_sizes" in d:
        d["hidden_sizes"] = tuple(d["hidden_sizes"])
    return MlpConfig(**d)

