"""Command-line front door: dataset synthesis, training, evaluation and log
inspection.

Exit codes: 0 success, 1 runtime/data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from gcdlib import trainer
from gcdlib.config import load_config_file
from gcdlib.data import load_embeddings, save_embeddings, synth_generate
from gcdlib.errors import GcdlibError
from gcdlib.model import load_checkpoint, save_checkpoint

INSPECT_COLUMNS = (
    ["epoch"]
    + list(trainer.LOSS_FIELDS)
    + ["acc_all", "acc_old", "acc_new", "auroc", "utilization_old", "utilization_new"]
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcdlib",
        description="Feature-space generalized category discovery engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic embedding dataset")
    p_synth.add_argument("--out", required=True, help="output path prefix")
    p_synth.add_argument("--classes", type=int, default=10)
    p_synth.add_argument("--old", type=int, default=5)
    p_synth.add_argument("--per-class", type=int, default=200)
    p_synth.add_argument("--dim", type=int, default=64)
    p_synth.add_argument("--sigma", type=float, default=0.1)
    p_synth.add_argument("--seed", type=int, default=1)

    p_train = sub.add_parser("train", help="train on an embedding dataset")
    p_train.add_argument("--features", required=True)
    p_train.add_argument("--labels", required=True)
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out-dir", required=True)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--features", required=True)
    p_eval.add_argument("--labels", required=True)

    p_inspect = sub.add_parser("inspect", help="summarize a training log as CSV")
    p_inspect.add_argument("--log", required=True)
    return parser


def _cmd_synth(args) -> int:
    ds = synth_generate(args.classes, args.old, args.per_class, args.dim,
                        args.sigma, args.seed)
    feature_path = args.out + ".dgce"
    label_path = args.out + ".dgcl"
    save_embeddings(feature_path, label_path, ds)
    n_lab = ds.labelled_indices.size
    print(f"wrote {feature_path} and {label_path}: "
          f"{ds.num_rows} rows, dim {ds.dim}, K={ds.num_total_classes}, "
          f"M={ds.num_old_classes}, {n_lab} labelled / {ds.num_rows - n_lab} unlabelled")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config_file(args.config)
    dataset = load_embeddings(args.features, args.labels)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.jsonl"
    with open(log_path, "w", encoding="utf-8") as log_stream:
        state, _ = trainer.train(dataset, cfg, log_stream=log_stream)
    save_checkpoint(out_dir / "model.dgck", state)
    report = trainer.evaluate_model(state, dataset)
    print(json.dumps(report.as_dict()))
    return 0


def _cmd_eval(args) -> int:
    state = load_checkpoint(args.checkpoint)
    dataset = load_embeddings(args.features, args.labels)
    if dataset.dim != state.dim:
        raise GcdlibError(
            f"feature dim {dataset.dim} does not match checkpoint dim {state.dim}")
    report = trainer.evaluate_model(state, dataset)
    print(json.dumps(report.as_dict()))
    return 0


def _cmd_inspect(args) -> int:
    epochs: dict[int, dict] = {}
    sums: dict[int, dict] = {}
    counts: dict[int, int] = {}
    bad_lines = 0
    with open(args.log, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                kind = rec["type"]
                epoch = int(rec["epoch"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                print(f"warning: skipping malformed log line {lineno}", file=sys.stderr)
                bad_lines += 1
                continue
            if kind == "step":
                acc = sums.setdefault(epoch, {k: 0.0 for k in trainer.LOSS_FIELDS})
                for k in trainer.LOSS_FIELDS:
                    acc[k] += float(rec.get(k, 0.0))
                counts[epoch] = counts.get(epoch, 0) + 1
            elif kind == "epoch":
                epochs[epoch] = rec

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(INSPECT_COLUMNS)
    for epoch in sorted(set(epochs) | set(sums)):
        row: list = [epoch]
        n = counts.get(epoch, 0)
        for k in trainer.LOSS_FIELDS:
            row.append(sums[epoch][k] / n if n else "")
        rec = epochs.get(epoch, {})
        for k in ("acc_all", "acc_old", "acc_new", "auroc",
                  "utilization_old", "utilization_new"):
            value = rec.get(k)
            row.append("" if value is None else value)
        writer.writerow(row)
    if bad_lines:
        print(f"warning: {bad_lines} malformed line(s) skipped", file=sys.stderr)
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "inspect": _cmd_inspect,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except GcdlibError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
