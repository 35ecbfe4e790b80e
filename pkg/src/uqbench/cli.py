"""Command-line front end: synth, train, evaluate, quantiles.

Exit codes are a stable contract for harnesses: 0 success, 1 usage
error, 2 data/model error, 3 degenerate-evaluation error.  All tunable
quantities accept flag overrides and fall back to a ``--config`` file of
``section.key = value`` lines, then to built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import metrics, model, synth
from .config import parse_config, severity_tables_from_config
from .corruptions import KINDS
from .errors import (
    BadImageFileError,
    CorruptCheckpointError,
    DegenerateInputError,
    DegenerateSlopesError,
    EmptyDatasetError,
    GazeOutOfRangeError,
    InsufficientCleanImagesError,
    InsufficientDataError,
    IoFailureError,
    ShapeMismatchError,
)
from .svg import emit_svg_chart

__all__ = ["main"]

_DATA_ERRORS = (
    EmptyDatasetError,
    CorruptCheckpointError,
    BadImageFileError,
    IoFailureError,
    InsufficientCleanImagesError,
    InsufficientDataError,
    GazeOutOfRangeError,
    ShapeMismatchError,
    FileNotFoundError,
)
_DEGENERATE_ERRORS = (DegenerateSlopesError, DegenerateInputError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's default 2
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="uqbench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: $UQBENCH_THREADS or 1)")
        p.add_argument("--config", default=None, help="key-value override file")

    p = sub.add_parser("synth", help="generate a synthetic eye dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    common(p)

    p = sub.add_parser("train", help="train the confidence-aware model")
    p.add_argument("--data", required=True, help="dataset dir or manifest.csv")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    common(p)

    p = sub.add_parser("evaluate", help="severity sweep + effectiveness report")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--kinds", default="all", help="'all' or comma-separated kinds")
    p.add_argument("--quantile", type=float, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    common(p)

    p = sub.add_parser("quantiles", help="confidence-quantile report")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--out", required=True)
    common(p)

    return parser


def _threads(args) -> int:
    if args.threads is not None:
        if args.threads < 1:
            raise _UsageError("--threads must be >= 1")
        return args.threads
    env = os.environ.get("UQBENCH_THREADS")
    return max(1, int(env)) if env else 1


def _overrides(args) -> dict[str, object]:
    return parse_config(args.config) if args.config else {}


def _pick(flag_value, overrides, key, default):
    if flag_value is not None:
        return flag_value
    return overrides.get(key, default)


def _manifest(data) -> str:
    data = os.fspath(data)
    return data if data.endswith(".csv") else synth.manifest_path(data)


def _fmt(x: float) -> str:
    return "%.9g" % x


def _load_model(path) -> model.GazeNet:
    return model.load_checkpoint(path)


def _cmd_synth(args) -> int:
    if args.n < 1:
        raise _UsageError("--n must be >= 1")
    manifest = synth.generate_dataset(args.n, args.seed, args.out, threads=_threads(args))
    print(synth.manifest_path(manifest.base_dir))
    return 0


def _cmd_train(args) -> int:
    overrides = _overrides(args)
    cfg = model.TrainConfig(
        lr=float(_pick(args.lr, overrides, "train.lr", 1e-4)),
        batch_size=int(_pick(args.batch, overrides, "train.batch_size", 64)),
        epochs=int(_pick(args.epochs, overrides, "train.epochs", 40)),
        lr_decay_epoch=int(overrides.get("train.lr_decay_epoch", 25)),
        lr_decay_factor=float(overrides.get("train.lr_decay_factor", 0.1)),
        seed=args.seed,
    )
    dataset = synth.load_dataset(_manifest(args.data))
    net, history = model.train(dataset, cfg)
    model.save_checkpoint(net, args.out)
    history_path = os.path.splitext(args.out)[0] + "_history.csv"
    with open(history_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for row in history:
            writer.writerow([row.epoch, _fmt(row.train_loss), _fmt(row.val_loss), _fmt(row.lr)])
    final = history[-1].train_loss if history else float("nan")
    print(
        f"trained: epochs={cfg.epochs} lr={cfg.lr:g} batch={cfg.batch_size} "
        f"seed={cfg.seed} final_train_loss={final:.6g}"
    )
    print(args.out)
    print(history_path)
    return 0


def _parse_kinds(spec: str) -> tuple[str, ...]:
    if spec == "all":
        return KINDS
    kinds = tuple(k.strip() for k in spec.split(",") if k.strip())
    unknown = [k for k in kinds if k not in KINDS]
    if unknown or not kinds:
        raise _UsageError(f"unknown corruption kinds: {', '.join(unknown) or '(none given)'}")
    return kinds


def _cmd_evaluate(args) -> int:
    overrides = _overrides(args)
    kinds = _parse_kinds(args.kinds)
    cfg = metrics.SweepConfig(
        quantile=float(_pick(args.quantile, overrides, "evaluate.quantile", 0.20)),
        m=int(_pick(args.m, overrides, "evaluate.m", 100)),
        seed=args.seed,
        kinds=kinds,
    )
    tables = severity_tables_from_config(overrides)
    net = _load_model(args.model)
    dataset = synth.load_dataset(_manifest(args.data))
    sweep = metrics.run_severity_sweep(net, dataset, cfg, tables=tables, threads=_threads(args))
    report = metrics.evaluate_effectiveness(sweep)
    os.makedirs(args.out_dir, exist_ok=True)
    per_path, summary_path = metrics.write_report_csvs(report, args.out_dir)

    sev = list(metrics.SEVERITIES)
    emit_svg_chart(
        [(r.kind, sev, list(r.mean_uncertainty)) for r in report.rows],
        "corruption severity",
        "mean predicted variance",
        os.path.join(args.out_dir, "severity_vs_uncertainty.svg"),
        title="uncertainty response per corruption",
    )
    err_series = []
    for kind in kinds:
        means = [
            float(
                sum(r.angular_error_deg for r in sweep.rows if r.kind == kind and r.severity == s)
                / sum(1 for r in sweep.rows if r.kind == kind and r.severity == s)
            )
            for s in sev
        ]
        err_series.append((kind, sev, means))
    emit_svg_chart(
        err_series,
        "corruption severity",
        "mean angular error (deg)",
        os.path.join(args.out_dir, "severity_vs_error.svg"),
        title="angular error response per corruption",
    )
    corrupted = [r for r in sweep.rows if r.severity > 0]
    emit_svg_chart(
        [("corrupted samples", [r.uncertainty for r in corrupted],
          [r.angular_error_deg for r in corrupted])],
        "predicted variance",
        "angular error (deg)",
        os.path.join(args.out_dir, "uncertainty_vs_error.svg"),
        title="uncertainty vs angular error",
        style="scatter",
    )
    print(f"effectiveness_score={report.score:.6g}")
    print(f"error_severity_score={report.error_severity_score:.6g}")
    print(f"uncertainty_error_rho={report.uncertainty_error_rho:.6g}")
    print(per_path)
    print(summary_path)
    return 0


def _cmd_quantiles(args) -> int:
    if args.k < 2:
        raise _UsageError("--k must be >= 2")
    net = _load_model(args.model)
    dataset = synth.load_dataset(_manifest(args.data))
    rows = metrics.quantile_report(net, dataset, args.k)
    metrics.write_quantile_csv(rows, args.out)
    print(args.out)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "quantiles": _cmd_quantiles,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except _DEGENERATE_ERRORS as exc:
        print(f"degenerate evaluation: {exc}", file=sys.stderr)
        return 3
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
