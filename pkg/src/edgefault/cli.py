"""Command-line surface.

Subcommands: gen-data (simulate and label a dataset), train (offline
training to a checkpoint), tune (online expert adaptation over a stream),
eval (metric report), dump-embeddings (per-host classification vectors for
external analysis).

Exit codes: 0 success, 2 usage/config, 3 data/schema, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import shutil
import sys

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config_file, model_config, train_config, tune_config
from .errors import ConfigError, DataError, NumericError, ValidationError
from .model import FaultModel
from .sim import Dataset, build_dataset, distribution_report, label_features, run_simulation, sim_config
from .training import (
    EpochStats,
    OfflineTrainer,
    collect_embeddings,
    evaluate_model,
    fit_scaler,
)
from .tuning import STREAM_FIELDS, OnlineTuner, export_routing_records


def _load_config(path) -> dict:
    return load_config_file(path) if path else {}


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _split_records(dataset: Dataset, tcfg, which: str):
    if which == "all":
        return dataset.records
    train, val, test = dataset.split(tcfg.train_fraction, tcfg.val_fraction)
    return {"train": train, "val": val, "test": test}[which].records


# --- subcommands ---------------------------------------------------------------


def cmd_gen_data(args) -> int:
    data = _load_config(args.config)
    cfg = sim_config(data, n_hosts=args.hosts, seed=args.seed)
    result = run_simulation(cfg, args.intervals)
    labels = label_features(result.features, cfg.util_threshold,
                            cfg.throughput_percentile, cfg.warmup_intervals,
                            cfg.persistence)
    dataset = build_dataset(result.features, result.decisions, labels,
                            cfg.seed, cfg.interval_seconds)
    dataset.save(args.out)
    report = {
        "dataset": str(args.out),
        "intervals": args.intervals,
        "hosts": len(cfg.hosts),
        "seed": cfg.seed,
        **distribution_report(dataset),
        "qos": result.qos.summary(),
    }
    _write_json(args.report or f"{args.out}.report.json", report)
    shares = report["shares"]
    print(f"wrote {report['host_rows']} host rows to {args.out}")
    print("class shares: " + ", ".join(f"{k}={100 * v:.1f}%" for k, v in shares.items()))
    return 0


def cmd_train(args) -> int:
    data = _load_config(args.config)
    mcfg = model_config(data)
    tcfg = train_config(data)
    if args.epochs is not None:
        tcfg.epochs = args.epochs
    if args.seed is not None:
        tcfg.seed = args.seed
    if args.loss_mode is not None:
        tcfg.loss.mode = args.loss_mode

    dataset = Dataset.load(args.data)
    if mcfg.n_features != dataset.meta.n_features:
        raise DataError(f"model expects {mcfg.n_features} features, dataset has "
                        f"{dataset.meta.n_features}")
    train, val, test = dataset.split(tcfg.train_fraction, tcfg.val_fraction)
    if not train.records or not val.records:
        raise ValidationError("dataset too small to split into train/val")

    model = FaultModel.init(mcfg, seed=tcfg.seed)
    fit_scaler(model, train.records)
    trainer = OfflineTrainer(model, tcfg)
    log = trainer.run(train.records, val.records)

    save_checkpoint(args.out, model, trainer.stage,
                    seeds={"train_seed": tcfg.seed, "data_seed": dataset.meta.seed})
    _write_csv(args.log or f"{args.out}.log.csv", EpochStats.LOG_FIELDS,
               [s.log_row() for s in log])
    last = log[-1]
    print(f"trained {tcfg.epochs} epochs; final val detection accuracy "
          f"{last.val_detection_accuracy:.4f}, classification accuracy "
          f"{last.val_classification_accuracy:.4f}; stage {last.stage}")
    print(f"checkpoint: {args.out}")
    return 0


def cmd_tune(args) -> int:
    data = _load_config(args.config)
    ucfg = tune_config(data)
    loss_weights = train_config(data).loss
    if args.interval_threshold is not None:
        ucfg.epoch_threshold = args.interval_threshold
    if args.seed is not None:
        ucfg.seed = args.seed

    model, stage, seeds = load_checkpoint(args.ckpt)
    stream = Dataset.load(args.stream)
    if stream.meta.n_features != model.config.n_features:
        raise DataError("stream feature width does not match checkpoint")

    if len(stream.records) < 2:
        shutil.copyfile(args.ckpt, args.out)
        print("stream too short to tune; checkpoint copied unchanged")
        return 0

    tuner = OnlineTuner(model, ucfg, loss_weights=loss_weights)
    log = tuner.run(stream.records)
    save_checkpoint(args.out, model, stage,
                    seeds={**seeds, "tune_seed": ucfg.seed})
    _write_csv(args.log or f"{args.out}.log.csv", STREAM_FIELDS,
               [entry.log_row() for entry in log])
    if args.routing_log:
        rows = []
        for step, rec in enumerate(stream.records[:-1]):
            fp = model.forward(rec.features, rec.migrations)
            for host, decision in enumerate(fp.trace.decisions):
                rows.append((rec.t, host, decision, fp.trace.expert_ids))
        export_routing_records(args.routing_log, rows)
    adds = sum(len(entry.added) for entry in log)
    removes = sum(len(entry.removed) for entry in log)
    print(f"tuned over {len(log)} stream steps; experts {log[-1].expert_count} "
          f"(+{adds}/-{removes})")
    return 0


def cmd_eval(args) -> int:
    data = _load_config(args.config)
    tcfg = train_config(data)
    model, stage, _ = load_checkpoint(args.ckpt)
    dataset = Dataset.load(args.data)
    records = _split_records(dataset, tcfg, args.split)
    if not records:
        raise ValidationError(f"split {args.split!r} of {args.data} is empty")
    report = evaluate_model(model, records, hr_k=args.hr_k)
    payload = {
        "metrics": report.as_dict(),
        "flags": report.flags,
        "counts": {
            "host_rows": sum(len(r.labels) for r in records),
            "intervals": len(records),
            "faulty_hosts": int(sum(int(np.sum(r.labels > 0)) for r in records)),
        },
        "split": args.split,
        "stage": stage,
    }
    _write_json(args.report, payload)
    printable = {k: (round(v, 4) if isinstance(v, float) else v)
                 for k, v in report.as_dict().items()}
    print(f"metrics ({args.split}): {printable}")
    return 0


def cmd_dump_embeddings(args) -> int:
    model, _, _ = load_checkpoint(args.ckpt)
    dataset = Dataset.load(args.data)
    rows = collect_embeddings(model, dataset.records)
    width = model.config.class_feature_width
    header = ["t", "host", "label"] + [f"c{i}" for i in range(width)]
    _write_csv(args.out, header,
               [[t, host, label, *vec.tolist()] for t, host, label, vec in rows])
    print(f"wrote {len(rows)} embedding rows to {args.out}")
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgefault",
        description="Edge-cluster host-fault prediction pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="simulate a cluster and write a labeled dataset")
    p.add_argument("--hosts", type=int, default=None)
    p.add_argument("--intervals", type=int, default=10000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="offline-train a model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--loss-mode", choices=["hinge", "literal"], default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="online-tune the expert mixture over a stream")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--stream", required=True)
    p.add_argument("--interval-threshold", type=int, default=None,
                   help="expert add/remove boundary, in stream steps")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None)
    p.add_argument("--routing-log", default=None,
                   help="also write a line-delimited routing audit")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("eval", help="compute the metric report for a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--split", choices=["all", "train", "val", "test"], default="all")
    p.add_argument("--hr-k", type=int, default=1)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dump-embeddings",
                       help="write per-host classification vectors with labels")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_embeddings)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValidationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
