"""Calf-level stratified test/validation splitting.

A candidate set of held-out calves is scored by comparing, for every class,
the ratio of held-out to remaining data against a target ratio (0.43 for a
30:70 split); the score is the mean absolute deviation over classes. The
best candidate becomes the test set, and the best few candidates among the
remaining calves become the validation folds.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .core import Dataset
from .errors import LeakageError, UnsatisfiableStratificationError, ValidationError

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = "calfrocket.split/1"
UNITS = ("windows", "segments")


@dataclass(frozen=True)
class Search:
    """How candidate calf combinations are generated.

    ``exhaustive`` enumerates every combination unless their number exceeds
    ``budget``, in which case ``n_samples`` seeded draws are scored instead.
    """

    mode: str = "exhaustive"
    n_samples: int = 100_000
    seed: int = 0
    budget: int = 20_000_000

    def __post_init__(self) -> None:
        if self.mode not in ("exhaustive", "sampled"):
            raise ValidationError(f"unknown search mode {self.mode!r}")
        if self.n_samples < 1 or self.budget < 1:
            raise ValidationError("n_samples and budget must be positive")


@dataclass(frozen=True)
class StratificationScore:
    per_class_ratio: dict[str, float]
    deviation: float
    target: float


@dataclass(frozen=True)
class Fold:
    train_calves: tuple[str, ...]
    validation_calves: tuple[str, ...]
    deviation: float


@dataclass(frozen=True)
class SplitPlan:
    test_calves: tuple[str, ...]
    train_calves: tuple[str, ...]
    folds: tuple[Fold, ...]
    test_deviation: float
    target_ratio: float = 0.43
    unit: str = "windows"
    settings: dict = field(default_factory=dict)

    @property
    def deviation_scores(self) -> tuple[float, ...]:
        return (self.test_deviation,) + tuple(f.deviation for f in self.folds)

    def check(self) -> None:
        """Raise :class:`LeakageError` if any calf sits on both sides of a boundary."""
        test, train = set(self.test_calves), set(self.train_calves)
        if test & train:
            raise LeakageError(f"calves in both test and train: {sorted(test & train)}")
        for k, fold in enumerate(self.folds):
            tr, va = set(fold.train_calves), set(fold.validation_calves)
            if tr & va:
                raise LeakageError(f"fold {k}: calves in both train and validation: {sorted(tr & va)}")
            if not va <= train or not tr <= train:
                raise LeakageError(f"fold {k} uses calves outside the training calves: {sorted((tr | va) - train)}")

    def to_dict(self) -> dict:
        return {
            "format": MANIFEST_FORMAT,
            "target_ratio": self.target_ratio,
            "unit": self.unit,
            "settings": self.settings,
            "test": {"calves": list(self.test_calves), "deviation": self.test_deviation},
            "train_calves": list(self.train_calves),
            "folds": [
                {
                    "train_calves": list(f.train_calves),
                    "validation_calves": list(f.validation_calves),
                    "deviation": f.deviation,
                }
                for f in self.folds
            ],
        }

    def write(self, path) -> Path:
        self.check()
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def from_dict(cls, d: dict) -> SplitPlan:
        if d.get("format") != MANIFEST_FORMAT:
            raise ValidationError(f"not a split manifest (format {d.get('format')!r})")
        plan = cls(
            tuple(d["test"]["calves"]),
            tuple(d["train_calves"]),
            tuple(Fold(tuple(f["train_calves"]), tuple(f["validation_calves"]), f["deviation"]) for f in d["folds"]),
            d["test"]["deviation"],
            d["target_ratio"],
            d["unit"],
            d.get("settings", {}),
        )
        plan.check()
        return plan

    @classmethod
    def read(cls, path) -> SplitPlan:
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ValidationError(f"cannot read split manifest {path}: {exc}") from exc


def class_counts(dataset: Dataset, calves: Sequence[str], unit: str = "windows") -> np.ndarray:
    """``(len(calves), len(label_set))`` matrix of per-calf class amounts."""
    if unit not in UNITS:
        raise ValidationError(f"unit must be one of {UNITS}")
    col = {c: i for i, c in enumerate(dataset.label_set)}
    counts = np.zeros((len(calves), len(col)))
    for r, calf in enumerate(calves):
        if calf not in dataset.calf_index:
            raise ValidationError(f"unknown calf {calf!r}")
        if unit == "windows":
            for i in dataset.calf_index[calf]:
                counts[r, col[dataset.windows[i].behaviour_label]] += 1
        else:
            seen = {(dataset.windows[i].segment_id, dataset.windows[i].behaviour_label) for i in dataset.calf_index[calf]}
            for _, label in seen:
                counts[r, col[label]] += 1
    return counts


def held_out_size(n: int, fraction: float) -> int:
    """``fraction * n`` rounded half up."""
    return int(math.floor(fraction * n + 0.5))


@njit(cache=True, nogil=True)
def _deviation(held, total, target):
    acc = 0.0
    for c in range(total.shape[0]):
        rest = total[c] - held[c]
        if rest <= 0.0:
            return np.inf
        acc += abs(held[c] / rest - target)
    return acc / total.shape[0]


@njit(cache=True, nogil=True)
def _score(counts, combo, total, target):
    held = np.zeros(counts.shape[1])
    for j in range(combo.shape[0]):
        held += counts[combo[j]]
    return _deviation(held, total, target)


@njit(cache=True, nogil=True)
def _score_many(counts, combos, total, target):
    out = np.empty(combos.shape[0])
    for r in range(combos.shape[0]):
        out[r] = _score(counts, combos[r], total, target)
    return out


@njit(cache=True, nogil=True)
def _scan(counts, k, total, target, top, first):
    # best `top` combinations (lexicographic order) whose first element is `first`
    n = counts.shape[0]
    best_dev = np.full(top, np.inf)
    best = np.full((top, k), -1, dtype=np.int64)
    idx = np.arange(k) + first
    if first + k > n:
        return best_dev, best
    while idx[0] == first:
        d = _score(counts, idx, total, target)
        if d < best_dev[top - 1]:
            pos = top - 1
            while pos > 0 and best_dev[pos - 1] > d:
                best_dev[pos] = best_dev[pos - 1]
                best[pos] = best[pos - 1]
                pos -= 1
            best_dev[pos] = d
            best[pos] = idx
        i = k - 1
        while i >= 0 and idx[i] == n - k + i:
            i -= 1
        if i < 0:
            break
        idx[i] += 1
        for j in range(i + 1, k):
            idx[j] = idx[j - 1] + 1
    return best_dev, best


def _totals(counts: np.ndarray) -> np.ndarray:
    return counts.sum(axis=0)


def score_combination(
    dataset: Dataset,
    test_calves: Sequence[str],
    target_ratio: float = 0.43,
    unit: str = "windows",
    pool: Sequence[str] | None = None,
) -> StratificationScore:
    """Score holding out ``test_calves`` from ``pool`` (default: every calf).

    A class with nothing left on the training side gets an infinite ratio,
    which makes the whole deviation infinite.
    """
    calves = tuple(sorted(pool if pool is not None else dataset.calves))
    test = set(test_calves)
    if not test or not test < set(calves):
        raise ValidationError("test calves must be a non-empty proper subset of the calf pool")
    counts = class_counts(dataset, calves, unit)
    combo = np.array([i for i, c in enumerate(calves) if c in test], dtype=np.int64)
    total = _totals(counts)
    held = counts[combo].sum(axis=0)
    ratios = {}
    for c, label in enumerate(dataset.label_set):
        rest = total[c] - held[c]
        ratios[label] = float(held[c] / rest) if rest > 0 else math.inf
    return StratificationScore(ratios, float(_score(counts, combo, total, float(target_ratio))), target_ratio)


def _best_combinations(
    counts: np.ndarray, k: int, target: float, top: int, search: Search, workers: int = 1
) -> list[tuple[float, tuple[int, ...]]]:
    n = counts.shape[0]
    total = _totals(counts)
    space = math.comb(n, k)
    mode = search.mode
    if mode == "exhaustive" and space > search.budget:
        logger.warning(
            "!!! %d combinations of %d out of %d calves exceed the enumeration budget of %d; "
            "falling back to %d seeded samples (seed %d) !!!",
            space, k, n, search.budget, search.n_samples, search.seed,
        )
        mode = "sampled"

    if mode == "exhaustive":
        top = min(top, space)

        def run(first):
            return _scan(counts, k, total, target, top, first)

        firsts = range(n - k + 1)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                parts = list(ex.map(run, firsts))
        else:
            parts = [run(f) for f in firsts]
        found = [
            (float(d), tuple(int(i) for i in combo))
            for devs, combos in parts
            for d, combo in zip(devs, combos)
            if np.isfinite(d)
        ]
    else:
        rng = np.random.default_rng(search.seed)
        draws = np.sort(np.argsort(rng.random((search.n_samples, n)), axis=1)[:, :k], axis=1)
        combos = np.unique(draws, axis=0)
        devs = _score_many(counts, combos, total, target)
        found = [(float(d), tuple(int(i) for i in c)) for d, c in zip(devs, combos) if np.isfinite(d)]
    found.sort()
    return found[:top]


def select_test_split(
    dataset: Dataset,
    test_fraction: float = 0.3,
    target_ratio: float = 0.43,
    search: Search = Search(),
    unit: str = "windows",
    workers: int = 1,
) -> tuple[tuple[str, ...], StratificationScore]:
    """Pick the best-stratified set of ``round(test_fraction * calves)`` test calves.

    Ties go to the lexicographically smallest sorted calf-id tuple.
    """
    calves = dataset.calves
    k = held_out_size(len(calves), test_fraction)
    if k < 1 or k >= len(calves):
        raise ValidationError(f"{test_fraction} of {len(calves)} calves gives an unusable test size {k}")
    counts = class_counts(dataset, calves, unit)
    best = _best_combinations(counts, k, target_ratio, 1, search, workers)
    if not best:
        raise UnsatisfiableStratificationError(
            f"every combination of {k} test calves leaves some class without training data"
        )
    test = tuple(calves[i] for i in best[0][1])
    return test, score_combination(dataset, test, target_ratio, unit)


def make_validation_folds(
    train_calves: Sequence[str],
    dataset: Dataset,
    k: int = 10,
    val_fraction: float = 0.3,
    target_ratio: float = 0.43,
    search: Search = Search(),
    unit: str = "windows",
    workers: int = 1,
) -> list[Fold]:
    """The ``k`` best-stratified distinct validation calf sets, best first."""
    pool = tuple(sorted(train_calves))
    if k < 1:
        raise ValidationError("k must be >= 1")
    v = held_out_size(len(pool), val_fraction)
    if v < 1 or v >= len(pool):
        raise ValidationError(f"{val_fraction} of {len(pool)} training calves gives an unusable validation size {v}")
    counts = class_counts(dataset, pool, unit)
    best = _best_combinations(counts, v, target_ratio, k, search, workers)
    if len(best) < k:
        raise UnsatisfiableStratificationError(
            f"asked for {k} validation folds but only {len(best)} qualifying combinations of "
            f"{v} out of {len(pool)} calves exist (short by {k - len(best)})"
        )
    folds = []
    for dev, combo in best:
        val = tuple(pool[i] for i in combo)
        folds.append(Fold(tuple(c for c in pool if c not in set(val)), val, dev))
    return folds


def plan_splits(
    dataset: Dataset,
    test_fraction: float = 0.3,
    val_fraction: float = 0.3,
    target_ratio: float = 0.43,
    k: int = 10,
    search: Search = Search(),
    unit: str = "windows",
    workers: int = 1,
) -> SplitPlan:
    test, score = select_test_split(dataset, test_fraction, target_ratio, search, unit, workers)
    train = tuple(c for c in dataset.calves if c not in set(test))
    folds = make_validation_folds(train, dataset, k, val_fraction, target_ratio, search, unit, workers)
    plan = SplitPlan(
        test, train, tuple(folds), score.deviation, target_ratio, unit,
        {
            "test_fraction": test_fraction,
            "val_fraction": val_fraction,
            "k": k,
            "search": {"mode": search.mode, "n_samples": search.n_samples, "seed": search.seed, "budget": search.budget},
        },
    )
    plan.check()
    return plan
