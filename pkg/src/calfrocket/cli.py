"""Batch command line: ingest -> split -> train -> evaluate -> report.

Every command works inside one experiment directory (``--out``), reading
what earlier commands wrote there and leaving a copy of its resolved config.

Exit codes: 0 success, 2 validation error, 3 numerical error, 4 leakage.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import mlp, ridge
from ._archive import save_archive
from .core import Dataset
from .errors import CalfRocketError, EmptyInputError, LeakageError, NumericalError, ValidationError
from .evaluation import Report, report
from .ingest import build_dataset, load_dataset, read_csv, save_dataset, summarize, summary_csv
from .rocket import (
    FeatureMatrix,
    MiniRocketParams,
    fit_minirocket,
    generate_rocket_kernels,
    load_kernels,
    save_kernels,
    transform,
)
from .splitter import SplitPlan, plan_splits

logger = logging.getLogger("calfrocket")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_LEAKAGE = 0, 2, 3, 4

DATASET_FILE = "dataset.npz"
MANIFEST_FILE = "manifest.json"
MODEL_FILE = "model.json"


def _write_config(out: Path, cfg: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfgmod.dumps(cfg), encoding="utf-8")


def _load_inputs(out: Path) -> tuple[Dataset, SplitPlan]:
    if not (out / DATASET_FILE).exists():
        raise ValidationError(f"{out / DATASET_FILE} not found; run `ingest` first")
    if not (out / MANIFEST_FILE).exists():
        raise ValidationError(f"{out / MANIFEST_FILE} not found; run `split` first")
    return load_dataset(out / DATASET_FILE), SplitPlan.read(out / MANIFEST_FILE)


def guard_training_calves(dataset: Dataset, plan: SplitPlan) -> None:
    """Refuse to fit anything on a dataset holding a test calf."""
    touched = set(dataset.calves) & set(plan.test_calves)
    if touched:
        raise LeakageError(f"test calves reached a fit-time operation: {sorted(touched)}")


def cmd_ingest(cfg: dict, csv_path, out: Path) -> list[dict]:
    icfg = cfgmod.ingest_config(cfg)
    segments = read_csv(csv_path)
    dataset = build_dataset(segments, icfg)
    if len(dataset) == 0:
        raise EmptyInputError("no segment is long enough to yield a window")
    rows = summarize(segments, icfg.sample_rate_hz)
    _write_config(out, cfg)
    save_dataset(dataset, out / DATASET_FILE, {"source": str(csv_path)})
    (out / "summary.csv").write_text(summary_csv(rows), encoding="utf-8")
    logger.info("ingested %d segments into %d windows", len(segments), len(dataset))
    return rows


def cmd_split(cfg: dict, out: Path) -> SplitPlan:
    path = out / DATASET_FILE
    if not path.exists():
        raise ValidationError(f"{path} not found; run `ingest` first")
    dataset = load_dataset(path)
    s = cfg["split"]
    plan = plan_splits(
        dataset,
        test_fraction=float(s["test_fraction"]),
        val_fraction=float(s["val_fraction"]),
        target_ratio=float(s["target_ratio"]),
        k=int(s["k"]),
        search=cfgmod.search(cfg),
        unit=s["unit"],
        workers=int(cfg["workers"]),
    )
    _write_config(out, cfg)
    plan.write(out / MANIFEST_FILE)
    return plan


def _fold_indices(train: Dataset, plan: SplitPlan) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(train.indices_for(f.train_calves), train.indices_for(f.validation_calves)) for f in plan.folds]


def _grid_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    keys = list(rows[0])
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _export_features(out: Path, name: str, fm: FeatureMatrix, ds: Dataset) -> None:
    save_archive(
        out / f"features_{name}.npz",
        "calfrocket.features/1",
        {"per_channel_feature_count": fm.per_channel_feature_count, "channel_count": fm.channel_count},
        {"values": fm.values, "keys": np.array(ds.keys, dtype=str)},
    )


def cmd_train(cfg: dict, out: Path) -> dict:
    dataset, plan = _load_inputs(out)
    train = dataset.select_calves(plan.train_calves)
    guard_training_calves(train, plan)
    workers = int(cfg["workers"])
    seed = int(cfg["seed"])
    label_order = dataset.label_set
    summary: dict = {"train_calves": list(plan.train_calves), "label_order": list(label_order)}
    _write_config(out, cfg)

    kind = cfg["classifier"]["kind"]
    if kind == "mlp":
        fold = plan.folds[0]
        fit_part = train.select_calves(fold.train_calves)
        val_part = train.select_calves(fold.validation_calves)
        model = mlp.train(
            fit_part.stack(), fit_part.labels, cfgmod.mlp_config(cfg),
            validation=(val_part.stack(), val_part.labels),
            groups=(fit_part.calf_ids, val_part.calf_ids),
            label_order=label_order,
        )
        model.save(out / "classifier.npz")
        model.history.write_csv(out / "history.csv")
        summary.update({"classifier": "mlp", "transform": None})
        rows = [{"combination": 0, "config": json.dumps(cfg["classifier"]["mlp"], sort_keys=True),
                 "final_val_loss": model.history.val_loss[-1] if model.history.val_loss else float("nan"),
                 "best": True}]
    else:
        t = cfg["transform"]
        if t["kind"] == "minirocket":
            params = fit_minirocket(train, int(t["features_per_channel"]), seed, int(t["max_dilations_per_kernel"]))
            params.save(out / "transform.npz")
        else:
            params = generate_rocket_kernels(int(t["num_kernels"]), train.windows[0].length, seed)
            save_kernels(params, out / "transform.npz", seed)
        features = transform(train, params, workers)
        if cfg["output"]["export_features"]:
            _export_features(out, "train", features, train)
        grid = cfgmod.ridge_grid(cfg)
        if len(grid) == 1:
            best = grid[0]
            rows = [{"combination": 0, **best.describe(), "mean_score": float("nan"), "best": True}]
        else:
            result = ridge.grid_search(
                features, train.labels, grid, _fold_indices(train, plan), train.calf_ids,
                label_order=label_order,
            )
            best = result.best_config
            rows = [{"combination": r.pop("rank_order"), **r} for r in result.table()]
        model = ridge.fit(features, train.labels, best, label_order=label_order)
        model.save(out / "classifier.npz")
        summary.update({"classifier": "ridge", "transform": t["kind"], "best": best.describe()})
    (out / "grid.csv").write_text(_grid_csv(rows), encoding="utf-8")
    (out / MODEL_FILE).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def _predict(out: Path, test: Dataset, workers: int) -> tuple[np.ndarray, FeatureMatrix | None]:
    desc = json.loads((out / MODEL_FILE).read_text(encoding="utf-8"))
    if desc["classifier"] == "mlp":
        model = mlp.MlpModel.load(out / "classifier.npz")
        labels, _ = mlp.mlp_predict(model, test.stack())
        return labels, None
    if desc["transform"] == "minirocket":
        params = MiniRocketParams.load(out / "transform.npz")
    else:
        params = load_kernels(out / "transform.npz")
    features = transform(test, params, workers)
    return ridge.RidgeModel.load(out / "classifier.npz").predict(features), features


def _write_predictions(path: Path, keys, truth, pred) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window", "true", "predicted"])
        w.writerows(zip(keys, truth, pred))


def _read_predictions(path: Path) -> dict[str, str]:
    if not path.exists():
        raise ValidationError(f"{path} not found; run `evaluate` first")
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["window"]: row["predicted"] for row in csv.DictReader(fh)}


def cmd_evaluate(cfg: dict, out: Path) -> Report:
    dataset, plan = _load_inputs(out)
    if not (out / MODEL_FILE).exists():
        raise ValidationError(f"{out / MODEL_FILE} not found; run `train` first")
    desc = json.loads((out / MODEL_FILE).read_text(encoding="utf-8"))
    touched = set(desc["train_calves"]) & set(plan.test_calves)
    if touched:
        raise LeakageError(f"model was trained on test calves {sorted(touched)}")
    test = dataset.select_calves(plan.test_calves)
    pred, features = _predict(out, test, int(cfg["workers"]))
    if features is not None and cfg["output"]["export_features"]:
        _export_features(out, "test", features, test)
    _write_config(out, cfg)
    _write_predictions(out / "predictions.csv", test.keys, test.labels, pred)
    rep = report(dict(zip(test.keys, test.labels)), dict(zip(test.keys, pred)), dataset.label_set,
                 title=f"test calves: {', '.join(plan.test_calves)}")
    rep.write(out)
    return rep


def cmd_report(cfg: dict, out: Path) -> Report:
    dataset, plan = _load_inputs(out)
    predicted = _read_predictions(out / "predictions.csv")
    test = dataset.select_calves(plan.test_calves)
    rep = report(dict(zip(test.keys, test.labels)), predicted, dataset.label_set,
                 title=f"test calves: {', '.join(plan.test_calves)}")
    rep.write(out)
    return rep


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="calfrocket", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="experiment directory (config key `out`)")
    common.add_argument("--workers", type=int, help="worker threads (config key `workers`)")
    common.add_argument("--seed", type=int, help="seed for every stochastic stage (config key `seed`)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. split.k=5 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    ing = sub.add_parser("ingest", parents=[common], help="validate, window and archive a CSV")
    ing.add_argument("csv", nargs="?", help="input CSV (config key `dataset.path`)")
    sub.add_parser("split", parents=[common], help="write the calf-level split manifest")
    sub.add_parser("train", parents=[common], help="fit transform and classifier on training calves")
    sub.add_parser("evaluate", parents=[common], help="score the model on the test calves")
    sub.add_parser("report", parents=[common], help="re-render the report from stored predictions")
    return parser


def _resolve(args) -> dict:
    overrides = [cfgmod.parse_override(s) for s in args.set]
    for key, value in (("out", args.out), ("workers", args.workers), ("seed", args.seed)):
        if value is not None:
            overrides.append(([key], value))
    if getattr(args, "csv", None):
        overrides.append((["dataset", "path"], args.csv))
    config_path = args.config
    if config_path is None and args.command != "ingest":
        out = Path(args.out) if args.out else Path(cfgmod.DEFAULTS["out"])
        if (out / "config.json").exists():
            config_path = out / "config.json"
    return cfgmod.load_config(config_path, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        out = Path(cfg["out"])
        if args.command == "ingest":
            if not cfg["dataset"]["path"]:
                raise ValidationError("no input CSV given")
            print(summary_csv(cmd_ingest(cfg, cfg["dataset"]["path"], out)), end="")
        elif args.command == "split":
            plan = cmd_split(cfg, out)
            print(f"test calves ({len(plan.test_calves)}): {', '.join(plan.test_calves)}  deviation {plan.test_deviation:.6f}")
            for i, f in enumerate(plan.folds):
                print(f"fold {i}: validation {', '.join(f.validation_calves)}  deviation {f.deviation:.6f}")
        elif args.command == "train":
            summary = cmd_train(cfg, out)
            print(json.dumps({k: v for k, v in summary.items() if k != "train_calves"}, sort_keys=True))
        elif args.command == "evaluate":
            print(cmd_evaluate(cfg, out).text(), end="")
        elif args.command == "report":
            print(cmd_report(cfg, out).text(), end="")
    except LeakageError as exc:
        print(f"leakage: {exc}", file=sys.stderr)
        return EXIT_LEAKAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, CalfRocketError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
