"""One-vs-rest ridge classification with fold-based regularisation selection.

Targets are encoded as +1 for the row's class and -1 otherwise. For a
candidate ``alpha`` the weighted ridge problem

    min_W  sum_i s_i ||y_i - W x_i - b||^2 + alpha ||W||^2

is solved through one symmetric eigendecomposition of either the feature
Gram matrix or the sample Gram matrix, whichever is smaller, so a whole
alpha path costs a single factorisation. The intercept is unpenalised and
handled by weighted centring.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._archive import load_archive, save_archive
from .errors import LeakageError, NumericalError, ValidationError
from .evaluation import macro_recall

MODEL_FORMAT = "calfrocket.ridge/1"
CLASS_WEIGHTS = ("none", "balanced")


def default_alphas() -> tuple[float, ...]:
    return tuple(float(a) for a in np.linspace(0.001, 1000.0, 100))


@dataclass(frozen=True)
class RidgeConfig:
    alphas: tuple[float, ...] = field(default_factory=default_alphas)
    class_weight: str = "none"
    fit_intercept: bool = True

    def __post_init__(self) -> None:
        alphas = tuple(float(a) for a in np.atleast_1d(self.alphas))
        if not alphas:
            raise ValidationError("alphas must not be empty")
        if not all(a > 0 and np.isfinite(a) for a in alphas):
            raise ValidationError("every alpha must be a positive finite number")
        cw = "none" if self.class_weight is None else str(self.class_weight).lower()
        if cw not in CLASS_WEIGHTS:
            raise ValidationError(f"class_weight must be one of {CLASS_WEIGHTS}, got {self.class_weight!r}")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "class_weight", cw)
        object.__setattr__(self, "fit_intercept", bool(self.fit_intercept))

    def describe(self) -> dict:
        alpha = self.alphas[0] if len(self.alphas) == 1 else list(self.alphas)
        return {"alpha": alpha, "class_weight": self.class_weight, "fit_intercept": self.fit_intercept}


@dataclass(frozen=True, eq=False)
class RidgeModel:
    weights: np.ndarray
    intercepts: np.ndarray
    chosen_alpha: float
    label_order: tuple[str, ...]
    config: RidgeConfig = field(default_factory=RidgeConfig)
    alpha_scores: np.ndarray | None = None

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def decision_function(self, features) -> np.ndarray:
        X = _matrix(features)
        if X.shape[1] != self.n_features:
            raise ValidationError(f"model expects {self.n_features} features, got {X.shape[1]}")
        return X @ self.weights.T + self.intercepts

    def predict(self, features) -> np.ndarray:
        # np.argmax returns the first maximum: ties go to the lower class index
        scores = self.decision_function(features)
        return np.asarray(self.label_order)[np.argmax(scores, axis=1)]

    def save(self, path) -> Path:
        meta = {
            "label_order": list(self.label_order),
            "chosen_alpha": self.chosen_alpha,
            "config": {
                "alphas": list(self.config.alphas),
                "class_weight": self.config.class_weight,
                "fit_intercept": self.config.fit_intercept,
            },
        }
        arrays = {"weights": self.weights, "intercepts": self.intercepts}
        if self.alpha_scores is not None:
            arrays["alpha_scores"] = self.alpha_scores
        return save_archive(path, MODEL_FORMAT, meta, arrays)

    @classmethod
    def load(cls, path) -> RidgeModel:
        meta, arrays = load_archive(path, MODEL_FORMAT)
        return cls(
            arrays["weights"],
            arrays["intercepts"],
            float(meta["chosen_alpha"]),
            tuple(meta["label_order"]),
            RidgeConfig(**meta["config"]),
            arrays.get("alpha_scores"),
        )


def _matrix(features) -> np.ndarray:
    X = getattr(features, "values", features)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError(f"features must be a 2-D matrix, got shape {X.shape}")
    return X


def _encode(labels: np.ndarray, label_order: Sequence[str]) -> np.ndarray:
    lookup = {c: i for i, c in enumerate(label_order)}
    try:
        idx = np.array([lookup[v] for v in labels], dtype=np.int64)
    except KeyError as exc:
        raise ValidationError(f"label {exc.args[0]!r} not in label order {tuple(label_order)}") from None
    return idx


def sample_weights(y_idx: np.ndarray, mode: str) -> np.ndarray:
    """Per-row weights; ``balanced`` gives ``N / (K * n_class)``, with K the classes present."""
    if mode == "none":
        return np.ones(len(y_idx))
    counts = np.bincount(y_idx)
    present = np.count_nonzero(counts)
    return len(y_idx) / (present * counts[y_idx])


def _targets(y_idx: np.ndarray, n_classes: int) -> np.ndarray:
    Y = -np.ones((len(y_idx), n_classes))
    Y[np.arange(len(y_idx)), y_idx] = 1.0
    return Y


def solve_path(
    X: np.ndarray, Y: np.ndarray, sw: np.ndarray, alphas: Sequence[float], fit_intercept: bool
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Return ``(W, b)`` for every alpha, ``W`` shaped ``(targets, features)``."""
    w = sw / sw.sum()
    if fit_intercept:
        x_mean = w @ X
        y_mean = w @ Y
        Xc = X - x_mean
        Yc = Y - y_mean
    else:
        x_mean = np.zeros(X.shape[1])
        y_mean = np.zeros(Y.shape[1])
        Xc, Yc = X, Y
    root = np.sqrt(sw)[:, None]
    Xs = Xc * root
    Ys = Yc * root
    n, p = Xs.shape
    primal = p <= n
    gram = Xs.T @ Xs if primal else Xs @ Xs.T
    lam, vecs = np.linalg.eigh(gram)
    lam = np.clip(lam, 0.0, None)
    proj = vecs.T @ (Xs.T @ Ys if primal else Ys)

    path = []
    for alpha in alphas:
        cond = (lam.max() + alpha) / (lam.min() + alpha)
        if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
            raise NumericalError(
                f"ridge system ill-conditioned at alpha={alpha:g}: condition number {cond:.3e} "
                f"(largest eigenvalue {lam.max():.3e})"
            )
        scaled = proj / (lam + alpha)[:, None]
        W = vecs @ scaled if primal else Xs.T @ (vecs @ scaled)
        W = W.T
        b = y_mean - W @ x_mean
        path.append((W, b))
    return path


def _check_folds(folds, n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    checked = []
    for k, (tr, va) in enumerate(folds):
        tr = np.asarray(tr, dtype=np.int64)
        va = np.asarray(va, dtype=np.int64)
        if tr.size == 0 or va.size == 0:
            raise ValidationError(f"fold {k} has an empty side")
        for side in (tr, va):
            if side.min() < 0 or side.max() >= n:
                raise ValidationError(f"fold {k} indexes rows outside [0, {n})")
        if np.intersect1d(tr, va).size:
            raise ValidationError(f"fold {k} puts rows on both sides")
        checked.append((tr, va))
    return checked


def fit(
    features,
    labels,
    config: RidgeConfig = RidgeConfig(),
    folds=None,
    label_order: Sequence[str] | None = None,
) -> RidgeModel:
    """Fit a one-vs-rest ridge classifier.

    With several alphas, each is scored by the mean squared error of the
    decision scores against the +/-1 targets on the validation side of
    every fold (training weights recomputed per fold); the lowest mean
    error wins, ties going to the earlier alpha. The model is then refitted
    on all rows.
    """
    X = _matrix(features)
    labels = np.asarray(labels)
    if X.shape[0] != len(labels):
        raise ValidationError(f"{X.shape[0]} feature rows but {len(labels)} labels")
    if not np.all(np.isfinite(X)):
        raise ValidationError("features contain non-finite values")
    order = tuple(label_order) if label_order is not None else tuple(sorted(set(labels.tolist())))
    y_idx = _encode(labels, order)
    if np.unique(y_idx).size < 2:
        raise ValidationError("ridge classification needs at least 2 classes in the training rows")
    Y = _targets(y_idx, len(order))

    alpha_scores = None
    if len(config.alphas) == 1:
        chosen = config.alphas[0]
    else:
        if not folds:
            raise ValidationError("selecting among several alphas needs validation folds")
        errors = np.zeros(len(config.alphas))
        checked = _check_folds(folds, len(labels))
        for tr, va in checked:
            sw = sample_weights(y_idx[tr], config.class_weight)
            path = solve_path(X[tr], Y[tr], sw, config.alphas, config.fit_intercept)
            for a, (W, b) in enumerate(path):
                errors[a] += np.mean((X[va] @ W.T + b - Y[va]) ** 2)
        alpha_scores = errors / len(checked)
        chosen = config.alphas[int(np.argmin(alpha_scores))]

    sw = sample_weights(y_idx, config.class_weight)
    ((W, b),) = solve_path(X, Y, sw, [chosen], config.fit_intercept)
    return RidgeModel(W, b, chosen, order, config, alpha_scores)


def predict(model: RidgeModel, features) -> np.ndarray:
    return model.predict(features)


def expand_grid(
    alphas: Sequence[float] = default_alphas(),
    class_weights: Sequence[str] = CLASS_WEIGHTS,
    fit_intercepts: Sequence[bool] = (True, False),
) -> list[RidgeConfig]:
    return [
        RidgeConfig((a,), cw, fi)
        for a, cw, fi in itertools.product(alphas, class_weights, fit_intercepts)
    ]


def sample_grid(grid: Sequence[RidgeConfig], n: int, seed: int = 0) -> list[RidgeConfig]:
    """Draw ``n`` distinct combinations, kept in grid order."""
    if n >= len(grid):
        return list(grid)
    picks = np.sort(np.random.default_rng(seed).choice(len(grid), size=n, replace=False))
    return [grid[i] for i in picks]


@dataclass(frozen=True, eq=False)
class GridSearchResult:
    configs: tuple[RidgeConfig, ...]
    fold_scores: np.ndarray  # (combinations, folds)
    best_index: int

    @property
    def mean_scores(self) -> np.ndarray:
        return self.fold_scores.mean(axis=1)

    @property
    def best_config(self) -> RidgeConfig:
        return self.configs[self.best_index]

    def table(self) -> list[dict]:
        rows = []
        for i, (cfg, score) in enumerate(zip(self.configs, self.mean_scores)):
            rows.append({
                "rank_order": i,
                **cfg.describe(),
                "mean_score": float(score),
                **{f"fold{k}": float(s) for k, s in enumerate(self.fold_scores[i])},
                "best": i == self.best_index,
            })
        return rows


def check_group_folds(folds, groups) -> None:
    groups = np.asarray(groups)
    for k, (tr, va) in enumerate(folds):
        shared = np.intersect1d(groups[np.asarray(tr)], groups[np.asarray(va)])
        if shared.size:
            raise LeakageError(f"fold {k} has calves on both sides: {sorted(shared.tolist())}")


def grid_search(
    features,
    labels,
    configs: Sequence[RidgeConfig],
    folds,
    groups,
    scoring: Callable = macro_recall,
    label_order: Sequence[str] | None = None,
) -> GridSearchResult:
    """Score each single-alpha configuration by its mean fold score.

    ``groups`` holds the calf of every row; a fold whose two sides share a
    calf raises :class:`LeakageError`. The highest mean score wins, ties
    going to the earlier configuration.
    """
    configs = list(configs)
    if not configs:
        raise ValidationError("the grid is empty")
    if any(len(c.alphas) != 1 for c in configs):
        raise ValidationError("grid_search expects one alpha per configuration; expand alphas into the grid")
    X = _matrix(features)
    labels = np.asarray(labels)
    if len(groups) != len(labels):
        raise ValidationError("groups must give the calf of every row")
    checked = _check_folds(folds, len(labels))
    check_group_folds(checked, groups)
    order = tuple(label_order) if label_order is not None else tuple(sorted(set(labels.tolist())))
    y_idx = _encode(labels, order)
    Y = _targets(y_idx, len(order))
    classes = np.asarray(order)

    scores = np.zeros((len(configs), len(checked)))
    by_solver: dict[tuple[str, bool], list[int]] = {}
    for i, cfg in enumerate(configs):
        by_solver.setdefault((cfg.class_weight, cfg.fit_intercept), []).append(i)
    for f, (tr, va) in enumerate(checked):
        if np.unique(y_idx[tr]).size < 2:
            raise ValidationError(f"fold {f} training side holds fewer than 2 classes")
        for (cw, fi), members in by_solver.items():
            sw = sample_weights(y_idx[tr], cw)
            path = solve_path(X[tr], Y[tr], sw, [configs[i].alphas[0] for i in members], fi)
            for i, (W, b) in zip(members, path):
                pred = classes[np.argmax(X[va] @ W.T + b, axis=1)]
                scores[i, f] = scoring(labels[va], pred, order)
    best = int(np.argmax(scores.mean(axis=1)))
    return GridSearchResult(tuple(configs), scores, best)
