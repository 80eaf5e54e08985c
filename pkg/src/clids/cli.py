"""Command-line entry point.

Subcommands: ``train`` (CSV or synthetic data -> run directory),
``evaluate`` (saved run + CSV -> metrics report), ``predict`` (saved run +
CSV -> per-row probabilities), ``gradcheck`` (finite-difference audit of
every gradient), and ``synth`` (write a synthetic CSV).

A run directory always contains weights.bin, norm.json, train_report.json,
metrics.json, and roc.csv, and the train report echoes the full config, so
any run can be reproduced bit-for-bit from its artifacts.  JSON is written
with sorted keys and no timestamps: identical flags give byte-identical
files.

Exit codes: 0 success, 1 failed gradient check, 2 invalid flags or config,
3 data problems (the offending error class name is printed to stderr).
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import gradcheck as gradcheck_mod
from . import metrics as metrics_mod
from . import model as model_mod
from . import optim as optim_mod
from .errors import (
    DATA_ERRORS,
    FeatureCountMismatch,
    InvalidConfig,
    SingleClass,
)

__all__ = ["main", "build_parser"]

SEED_ENV_VAR = "CLIDS_SEED"
PREDICT_BATCH = 1024

WEIGHTS_FILE = "weights.bin"
NORM_FILE = "norm.json"
TRAIN_REPORT_FILE = "train_report.json"
METRICS_FILE = "metrics.json"
ROC_FILE = "roc.csv"


def _resolve_seed(flag_value):
    if flag_value is not None:
        return int(flag_value)
    raw = os.environ.get(SEED_ENV_VAR, "0")
    try:
        return int(raw)
    except ValueError:
        raise InvalidConfig(
            f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from None


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _write_roc_csv(path, points):
    lines = ["fpr,tpr"]
    for fpr, tpr in points:
        lines.append(f"{fpr!r},{tpr!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _scores(graph, features):
    """Infer-mode malicious-class probabilities and hard 0/1 predictions
    (ties go to malicious), computed in bounded batches."""
    probs = []
    for start in range(0, features.shape[0], PREDICT_BATCH):
        final, _, _ = graph.forward(features[start:start + PREDICT_BATCH])
        probs.append(final)
    if probs:
        final = np.concatenate(probs)
    else:
        final = np.zeros((0, 2), dtype=np.float32)
    predicted = (final[:, 1] >= final[:, 0]).astype(np.int64)
    return predicted, final


def _emit_eval(graph, labels, features, out_dir):
    """Writes metrics.json and roc.csv for one labeled dataset."""
    predicted, final = _scores(graph, features)
    report = metrics_mod.classification_report(labels, predicted)
    try:
        roc = metrics_mod.roc_and_auc(labels, final[:, 1].astype(np.float64))
        report["auc"] = roc.auc
        points = roc.points
    except SingleClass:
        # A single-class evaluation set has no ranking to measure; the
        # scalar rates above are still well-defined.
        report["auc"] = None
        points = ()
    _write_json(Path(out_dir) / METRICS_FILE, report)
    _write_roc_csv(Path(out_dir) / ROC_FILE, points)
    return report


def _load_run(run_dir):
    """Rebuilds (graph, norm stats, config echo) from a run directory."""
    run_dir = Path(run_dir)
    echo = json.loads((run_dir / TRAIN_REPORT_FILE).read_text())
    cfg = model_mod.ModelConfig.from_json_obj(echo["config"]["model"])
    graph = model_mod.build_model(cfg, seed=int(echo["seed"]))
    model_mod.load_weights(graph, run_dir / WEIGHTS_FILE)
    stats = data_mod.NormStats.from_json_obj(
        json.loads((run_dir / NORM_FILE).read_text()))
    return graph, stats, echo


def _load_binary_csv(path, label_column, benign_label, match):
    loaded = data_mod.load_csv(path, label_column=label_column)
    ds = data_mod.binarize(loaded.records, benign_label=benign_label, mode=match)
    ds.provenance = loaded.source
    return ds, loaded


# -- commands ------------------------------------------------------------


def cmd_train(args):
    seed = _resolve_seed(args.seed)
    tcfg = optim_mod.TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        seed=seed).validate()

    if args.synth is not None:
        ds = data_mod.synth_generate(args.synth, seed=seed)
        dropped = 0
        source = ds.provenance
    else:
        ds, loaded = _load_binary_csv(
            args.data, args.label_col, args.benign_label, args.match)
        dropped = loaded.dropped_rows
        source = loaded.source

    split_spec = data_mod.SplitSpec(train_fraction=0.8, seed=seed,
                                    stratified=True)
    train_ds, val_ds = data_mod.split(ds, split_spec)
    stats = data_mod.fit_normalizer(train_ds)
    train_ds = data_mod.apply_normalizer(train_ds, stats)
    val_ds = data_mod.apply_normalizer(val_ds, stats)

    mcfg = model_mod.ModelConfig(input_features=ds.feature_count).validate()
    graph = model_mod.build_model(mcfg, seed=seed)
    report = optim_mod.train(graph, train_ds, val_ds, tcfg)
    for row in report.epoch_rows():
        print(f"epoch {row['epoch']}/{tcfg.epochs}  "
              f"train_loss={row['train_loss']:.4f} "
              f"train_acc={row['train_accuracy']:.4f}  "
              f"val_loss={row['val_loss']:.4f} "
              f"val_acc={row['val_accuracy']:.4f}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model_mod.save_weights(graph, out / WEIGHTS_FILE)
    _write_json(out / NORM_FILE, stats.to_json_obj())
    _write_json(out / TRAIN_REPORT_FILE, {
        "config": {
            "model": mcfg.to_json_obj(),
            "train": tcfg.to_json_obj(),
            "split": split_spec.to_json_obj(),
            "data": {
                "source": source,
                "synth": args.synth,
                "label_column": args.label_col,
                "benign_label": args.benign_label,
                "match": args.match,
            },
        },
        "seed": seed,
        "dropped_rows": dropped,
        "dataset": {
            "rows": len(ds),
            "train_rows": len(train_ds),
            "val_rows": len(val_ds),
            "benign": int((ds.labels == 0).sum()),
            "malicious": int((ds.labels == 1).sum()),
        },
        "epochs": report.epoch_rows(),
        "final": {
            "train_loss": report.train_loss[-1],
            "train_accuracy": report.train_accuracy[-1],
            "val_loss": report.val_loss[-1],
            "val_accuracy": report.val_accuracy[-1],
        },
    })
    eval_report = _emit_eval(graph, val_ds.labels, val_ds.features, out)
    print(f"run written to {out}  "
          f"(val accuracy {eval_report['accuracy']:.4f})")
    return 0


def cmd_evaluate(args):
    graph, stats, echo = _load_run(args.model)
    data_echo = echo["config"]["data"]
    ds, _ = _load_binary_csv(
        args.data,
        args.label_col or data_echo["label_column"],
        args.benign_label or data_echo["benign_label"],
        args.match or data_echo["match"])
    if ds.feature_count != graph.config.input_features:
        raise FeatureCountMismatch(
            f"{args.data} has {ds.feature_count} features, model expects "
            f"{graph.config.input_features}")
    ds = data_mod.apply_normalizer(ds, stats)
    out = Path(args.out) if args.out else Path(args.model)
    out.mkdir(parents=True, exist_ok=True)
    report = _emit_eval(graph, ds.labels, ds.features, out)
    auc = report["auc"]
    print(f"accuracy={report['accuracy']:.4f} precision={report['precision']:.4f} "
          f"recall={report['recall']:.4f} f1={report['f1']:.4f} "
          f"fpr={report['fpr']:.4f} "
          f"auc={'n/a' if auc is None else format(auc, '.4f')}")
    return 0


def cmd_predict(args):
    graph, stats, echo = _load_run(args.model)
    label_col = args.label_col or echo["config"]["data"]["label_column"]
    loaded = data_mod.load_csv(args.data, label_column=label_col,
                               require_label=False)
    if loaded.records:
        features = np.stack([r.features for r in loaded.records])
        if features.shape[1] != graph.config.input_features:
            raise FeatureCountMismatch(
                f"{args.data} has {features.shape[1]} features, model expects "
                f"{graph.config.input_features}")
        x = data_mod.apply_normalizer(features, stats)
        predictions = []
        for start in range(0, x.shape[0], PREDICT_BATCH):
            predictions.extend(graph.predict(x[start:start + PREDICT_BATCH]))
    else:
        predictions = []

    lines = ["p_benign,p_malicious,label"]
    for p in predictions:
        lines.append(f"{p.probabilities[0]!r},{p.probabilities[1]!r},{p.label}")
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"{len(predictions)} predictions written to {args.out}")
    return 0


def cmd_gradcheck(args):
    seed = _resolve_seed(args.seed)
    tol = float(args.tolerance)
    results = gradcheck_mod.run_all(seed=seed)
    for r in results:
        print(f"{r.name}: {r.error:.6e}")
    worst = max(results, key=lambda r: r.error)
    failing = [r for r in results if not r.ok(tol)]
    if failing:
        print(f"gradcheck: FAIL — {len(failing)} tensor(s) at or above "
              f"{tol!r}; worst {worst.name} = {worst.error:.6e}")
        return 1
    print(f"gradcheck: PASS — worst {worst.name} = {worst.error:.6e} "
          f"(tolerance {tol!r})")
    return 0


def cmd_synth(args):
    seed = _resolve_seed(args.seed)
    ds = data_mod.synth_generate(args.n, seed=seed, difficulty=args.difficulty)
    header = [f"f{i:02d}" for i in range(ds.feature_count)] + ["label"]
    lines = [",".join(header)]
    for row, label in zip(ds.features, ds.labels):
        cells = [str(v) for v in row]
        cells.append(data_mod.DEFAULT_BENIGN_LABEL if label == 0 else "Malicious")
        lines.append(",".join(cells))
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"{len(ds)} synthetic rows written to {args.out}")
    return 0


# -- wiring --------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="clids",
        description="Train and run a dual-head CNN-LSTM intrusion detector "
                    "on network-flow CSVs.")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model and write run artifacts")
    source = t.add_mutually_exclusive_group(required=True)
    source.add_argument("--data", metavar="CSV", help="labeled flow CSV")
    source.add_argument("--synth", type=int, metavar="N",
                        help="generate N synthetic rows instead of reading a CSV")
    t.add_argument("--label-col", default="label")
    t.add_argument("--benign-label", default=data_mod.DEFAULT_BENIGN_LABEL)
    t.add_argument("--match", choices=("exact", "prefix"), default="exact",
                   help="how raw labels are compared against --benign-label")
    t.add_argument("--epochs", type=int, default=25)
    t.add_argument("--batch-size", type=int, default=256)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--seed", type=int, default=None,
                   help=f"default: ${SEED_ENV_VAR} or 0")
    t.add_argument("--out", default="run", help="run directory (default: run)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a labeled CSV with a saved run")
    e.add_argument("--model", required=True, metavar="DIR")
    e.add_argument("--data", required=True, metavar="CSV")
    e.add_argument("--label-col", default=None,
                   help="default: the value echoed in the run's train report")
    e.add_argument("--benign-label", default=None)
    e.add_argument("--match", choices=("exact", "prefix"), default=None)
    e.add_argument("--out", default=None, metavar="DIR",
                   help="default: the model directory")
    e.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="write per-row probabilities for a CSV")
    p.add_argument("--model", required=True, metavar="DIR")
    p.add_argument("--data", required=True, metavar="CSV")
    p.add_argument("--label-col", default=None,
                   help="column to ignore if present (labels are optional)")
    p.add_argument("--out", required=True, metavar="CSV")
    p.set_defaults(func=cmd_predict)

    g = sub.add_parser("gradcheck",
                       help="finite-difference audit of every gradient")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--tolerance", type=float, default=gradcheck_mod.DEFAULT_TOL)
    g.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("synth", help="write a synthetic flow CSV")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--difficulty", choices=("separable", "noisy"),
                   default="separable")
    s.add_argument("--out", required=True, metavar="CSV")
    s.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits itself: 0 for --help, 2 for usage errors.
        return 0 if exc.code in (0, None) else 2
    try:
        return args.func(args)
    except InvalidConfig as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"FileNotFoundError: {exc}", file=sys.stderr)
        return 3
    except DATA_ERRORS as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
