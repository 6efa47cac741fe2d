"""Experiment configuration: a JSON tree whose keys CLI flags override."""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Any

import numpy as np

from .core import DEFAULT_CHANNELS
from .errors import ValidationError
from .ingest import IngestConfig
from .mlp import MlpConfig, config_from_dict
from .preprocess import PreprocessConfig
from .ridge import RidgeConfig, expand_grid, sample_grid
from .splitter import Search

WORKERS_ENV = "CALFROCKET_WORKERS"

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "workers": 1,
    "out": "run",
    "dataset": {
        "path": None,
        "sample_rate_hz": 25.0,
        "window_seconds": 3.0,
        "max_gap_periods": 2.0,
        "channels": list(DEFAULT_CHANNELS),
        "smoothing_seconds": 1.0,
    },
    "preprocess": {"target_length": 75, "standardize": True, "epsilon": 1e-12, "method": "linear"},
    "split": {
        "test_fraction": 0.3,
        "val_fraction": 0.3,
        "target_ratio": 0.43,
        "k": 10,
        "search": "exhaustive",
        "n_samples": 100000,
        "budget": 20000000,
        "unit": "windows",
    },
    "transform": {
        "kind": "minirocket",
        "features_per_channel": 10000,
        "max_dilations_per_kernel": 32,
        "num_kernels": 10000,
    },
    "classifier": {
        "kind": "ridge",
        "ridge": {
            "alphas": {"start": 0.001, "stop": 1000.0, "num": 100},
            "class_weight": ["none", "balanced"],
            "fit_intercept": [True, False],
            "n_combinations": 50,
        },
        "mlp": {
            "hidden_sizes": [500, 500, 500],
            "dropout_rate": 0.1,
            "epochs": 200,
            "batch_size": 16,
            "optimizer": "adadelta",
            "learning_rate": 1.0,
            "rho": 0.95,
            "epsilon": 1e-6,
            "momentum": 0.0,
            "beta1": 0.9,
            "beta2": 0.999,
            "plateau_patience": 50,
            "plateau_factor": 0.5,
            "min_lr": 0.001,
        },
    },
    "output": {"export_features": False},
}


def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in out:
            raise ValidationError(f"unknown config key {where!r}")
        if isinstance(out[key], dict) and out[key] and isinstance(value, dict) and key != "alphas":
            out[key] = _merge(out[key], value, where + ".")
        else:
            out[key] = value
    return out


def parse_override(text: str) -> tuple[list[str], Any]:
    """``a.b.c=value``; the value is read as JSON and falls back to a plain string."""
    if "=" not in text:
        raise ValidationError(f"override {text!r} must look like key.path=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def load_config(path=None, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if WORKERS_ENV in os.environ:
        try:
            cfg["workers"] = int(os.environ[WORKERS_ENV])
        except ValueError:
            raise ValidationError(f"{WORKERS_ENV} must be an integer") from None
    if path is not None:
        p = Path(path)
        try:
            cfg = _merge(cfg, json.loads(p.read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {p}: {exc}") from exc
    for keys, value in overrides:
        nested: Any = value
        for k in reversed(keys):
            nested = {k: nested}
        cfg = _merge(cfg, nested)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    if int(cfg["workers"]) < 1:
        raise ValidationError("workers must be >= 1")
    if not isinstance(cfg["seed"], int):
        raise ValidationError("seed must be an integer")
    if cfg["transform"]["kind"] not in ("minirocket", "rocket"):
        raise ValidationError("transform.kind must be 'minirocket' or 'rocket'")
    if cfg["classifier"]["kind"] not in ("ridge", "mlp"):
        raise ValidationError("classifier.kind must be 'ridge' or 'mlp'")
    # construct the typed views once so bad values fail before any work starts
    ingest_config(cfg)
    search(cfg)
    ridge_grid(cfg)
    mlp_config(cfg)


def dumps(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


def ingest_config(cfg: dict) -> IngestConfig:
    d, p = cfg["dataset"], cfg["preprocess"]
    try:
        return IngestConfig(
            sample_rate_hz=float(d["sample_rate_hz"]),
            window_seconds=float(d["window_seconds"]),
            max_gap_periods=float(d["max_gap_periods"]),
            channels=tuple(d["channels"]),
            smoothing_seconds=float(d["smoothing_seconds"]),
            preprocess=PreprocessConfig(**p),
        )
    except TypeError as exc:
        raise ValidationError(f"bad dataset/preprocess settings: {exc}") from exc


def search(cfg: dict) -> Search:
    s = cfg["split"]
    return Search(s["search"], int(s["n_samples"]), int(cfg["seed"]), int(s["budget"]))


def alphas(cfg: dict) -> tuple[float, ...]:
    a = cfg["classifier"]["ridge"]["alphas"]
    if isinstance(a, dict):
        return tuple(float(x) for x in np.linspace(float(a["start"]), float(a["stop"]), int(a["num"])))
    return tuple(float(x) for x in np.atleast_1d(a))


def ridge_grid(cfg: dict) -> list[RidgeConfig]:
    r = cfg["classifier"]["ridge"]
    cws = r["class_weight"] if isinstance(r["class_weight"], list) else [r["class_weight"]]
    fis = r["fit_intercept"] if isinstance(r["fit_intercept"], list) else [r["fit_intercept"]]
    grid = expand_grid(alphas(cfg), [("none" if c is None else c) for c in cws], [bool(f) for f in fis])
    n = r.get("n_combinations")
    return sample_grid(grid, int(n), int(cfg["seed"])) if n else grid


def mlp_config(cfg: dict) -> MlpConfig:
    try:
        return config_from_dict({**cfg["classifier"]["mlp"], "seed": int(cfg["seed"])})
    except TypeError as exc:
        raise ValidationError(f"bad mlp settings: {exc}") from exc
