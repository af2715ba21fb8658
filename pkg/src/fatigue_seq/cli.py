"""Command-line entry point: ``fatigue-seq <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import bench, kernels
from .errors import InputError, StateError
from .lstm import (
    TrainConfig, config_dict, evaluate, load_checkpoint, save_checkpoint, split_dataset,
    stream_infer, train,
)
from .sequence import DEFAULT_STRIDE, SequenceDataset, read_dataset_csv, slide_dataset, write_dataset_csv
from .synthetic import ScenarioConfig, class_ratio, generate_stream, read_stream_jsonl, write_stream_jsonl

log = logging.getLogger("fatigue_seq")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads() -> int:
    raw = os.environ.get("FATIGUE_SEQ_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"FATIGUE_SEQ_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("FATIGUE_SEQ_THREADS must be at least 1")
    return n


def write_report(rows: dict, path=None) -> None:
    """key,value CSV; floats use repr so reruns compare exactly."""
    fh = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in rows.items():
            w.writerow([k, repr(v) if isinstance(v, float) else ("" if v is None else v)])
    finally:
        if path:
            fh.close()


def read_report(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        return {k: v for k, v in reader}


def _positive(name, value, minimum=1):
    if value is not None and value < minimum:
        raise UsageError(f"--{name} must be at least {minimum}, got {value}")


# --------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    _positive("fps", args.fps)
    if args.duration <= 0:
        raise UsageError("--duration must be positive")
    if not 0.0 <= args.prior < 1.0:
        raise UsageError("--prior must lie in [0, 1)")
    cfg = ScenarioConfig(duration=args.duration, fps=args.fps, fatigue_prior=args.prior, seed=args.seed)
    _, stream = generate_stream(cfg)
    write_stream_jsonl(args.out, stream, include_features=args.with_features)
    log.info("wrote %d frames to %s (%.1f%% fatigue frames)", len(stream), args.out,
             100.0 * float(np.mean(stream.labels)) if len(stream) else 0.0)
    return EXIT_OK


def _stream_fps(stream, override):
    if override is not None:
        return float(override)
    if len(stream.t) < 2:
        return 30.0
    # timestamps are stored rounded, so average over the whole stream
    return round((len(stream.t) - 1) / float(stream.t[-1] - stream.t[0]), 3)


def cmd_encode(args) -> int:
    _positive("window", args.window)
    _positive("skip", args.skip, 0)
    _positive("stride", args.stride)

    def one(item):
        group, path = item
        stream = read_stream_jsonl(path)
        samples = slide_dataset(stream.features, stream.labels, args.window, args.skip, args.stride, group)
        return SequenceDataset.from_samples(samples, args.window, args.skip, args.stride,
                                            _stream_fps(stream, args.fps))

    items = list(enumerate(args.streams))
    workers = min(_threads(), len(items))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, items))
    else:
        parts = [one(it) for it in items]
    ds = SequenceDataset.concat(parts)
    write_dataset_csv(args.out, ds)
    n_f, n_n = ds.class_counts()
    log.info("wrote %d samples (%d fatigue, %d normal) to %s", len(ds), n_f, n_n, args.out)
    return EXIT_OK


def _eval_rows(prefix, ev):
    return {f"{prefix}_{k}": v for k, v in ev.items()}


def cmd_train(args) -> int:
    _positive("epochs", args.epochs, 0)
    _positive("hidden", args.hidden)
    _positive("batch", args.batch)
    if args.lr < 0:
        raise UsageError("--lr must be nonnegative")
    ds = read_dataset_csv(args.dataset)
    cfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch, epochs=args.epochs, seed=args.seed,
                      val_fraction=args.val_fraction, hidden_size=args.hidden,
                      class_weighting=not args.no_class_weights)
    tr, va = split_dataset(ds, cfg.val_fraction, cfg.seed)
    if len(va) == 0 or len(tr) == 0:
        raise InputError("dataset too small to hold out a validation split")
    t0 = time.perf_counter()
    model, history = train(tr, cfg, val=va)
    elapsed = time.perf_counter() - t0
    save_checkpoint(model, args.out, extra={"seed": cfg.seed})
    rows = {"command": "train", "dataset": os.path.basename(args.dataset), "backend": kernels.BACKEND}
    rows.update({f"config_{k}": v for k, v in config_dict(cfg).items()})
    rows.update({"window_len": ds.window_len, "skip": ds.skip, "seq_len": ds.seq_len, "stride": ds.stride,
                 "samples": len(ds), "train_samples": len(tr), "val_samples": len(va),
                 "train_fatigue_to_normal": class_ratio(tr), "val_fatigue_to_normal": class_ratio(va),
                 "threshold": args.threshold})
    rows.update(_eval_rows("val", evaluate(model, va, args.threshold)))
    for rec in history:
        e = rec["epoch"]
        rows[f"epoch_{e}_train_loss"] = rec["train_loss"]
        if "val_accuracy" in rec:
            rows[f"epoch_{e}_val_accuracy"] = rec["val_accuracy"]
    rows["train_seconds"] = elapsed
    write_report(rows, args.report)
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    ds = read_dataset_csv(args.dataset)
    if len(ds) == 0:
        raise InputError(f"{args.dataset} holds no samples")
    if ds.X.shape[2] != ds.seq_len:
        raise InputError("dataset columns do not match its window metadata")
    rows = {"command": "eval", "dataset": os.path.basename(args.dataset), "window_len": ds.window_len,
            "skip": ds.skip, "threshold": args.threshold}
    rows.update(_eval_rows("eval", evaluate(model, ds, args.threshold)))
    write_report(rows, args.out)
    return EXIT_OK


def cmd_stream_infer(args) -> int:
    model = load_checkpoint(args.checkpoint)
    stream = read_stream_jsonl(args.stream)
    window = args.window if args.window is not None else model.window_len
    skip = args.skip if args.skip is not None else model.skip
    _positive("window", window)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "probability", "fatigue"])
        for t, p in zip(stream.t, stream_infer(model, stream.features, window, skip)):
            if p is None:
                w.writerow([repr(float(t)), "", ""])
            else:
                w.writerow([repr(float(t)), repr(p), int(p >= args.threshold)])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def cmd_bench_gap_fc(args) -> int:
    for name in ("height", "width", "channels", "units", "iterations"):
        _positive(name, getattr(args, name))
    rows = {"command": "bench-gap-fc"}
    rows.update(bench.gap_fc_report(args.height, args.width, args.channels, args.units, args.iterations,
                                    args.seed))
    write_report(rows, args.out)
    return EXIT_OK


def cmd_bench_kernels(args) -> int:
    rows = {"command": "bench-kernels", "backend": kernels.BACKEND}
    for r in bench.kernel_report(args.batch, args.seq_len, args.hidden, args.repeats, args.seed):
        for k in ("python_seconds", "compiled_seconds", "speedup"):
            rows[f"{r['kernel']}_{k}"] = r[k]
    write_report(rows, args.out)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log progress to stderr")
    p = _Parser(prog="fatigue-seq", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="render a synthetic landmark stream (JSONL)")
    g.add_argument("--duration", type=float, default=600.0, help="seconds (default 600)")
    g.add_argument("--fps", type=float, default=30.0)
    g.add_argument("--prior", type=float, default=ScenarioConfig.fatigue_prior,
                   help="target fraction of fatigue time")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--with-features", action="store_true", help="also store the 4-vector per frame")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("encode", parents=[common], help="cut streams into labelled window samples (CSV)")
    e.add_argument("streams", nargs="+", help="JSONL stream files; each becomes one group")
    e.add_argument("-N", "--window", type=int, default=150)
    e.add_argument("-k", "--skip", type=int, default=0)
    e.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    e.add_argument("--fps", type=float, default=None, help="override the rate inferred from timestamps")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_encode)

    t = sub.add_parser("train", parents=[common], help="train on a dataset, evaluate on a held-out split")
    t.add_argument("dataset")
    t.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    t.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    t.add_argument("--hidden", type=int, default=TrainConfig.hidden_size)
    t.add_argument("--batch", type=int, default=TrainConfig.batch_size)
    t.add_argument("--val-fraction", type=float, default=TrainConfig.val_fraction)
    t.add_argument("--no-class-weights", action="store_true")
    t.add_argument("--threshold", type=float, default=0.5)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--report", default=None, help="report CSV (default stdout)")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("eval", parents=[common], help="score a dataset with a checkpoint")
    v.add_argument("checkpoint")
    v.add_argument("dataset")
    v.add_argument("--threshold", type=float, default=0.5)
    v.add_argument("--out", default=None, help="report CSV (default stdout)")
    v.set_defaults(func=cmd_eval)

    s = sub.add_parser("stream-infer", parents=[common], help="per-frame fatigue probability over a stream")
    s.add_argument("checkpoint")
    s.add_argument("stream")
    s.add_argument("-N", "--window", type=int, default=None, help="default: stored in the checkpoint")
    s.add_argument("-k", "--skip", type=int, default=None)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_stream_infer)

    b = sub.add_parser("bench-gap-fc", parents=[common], help="FC head vs global-average-pool head accounting")
    b.add_argument("--height", type=int, default=3)
    b.add_argument("--width", type=int, default=3)
    b.add_argument("--channels", type=int, default=32)
    b.add_argument("--units", type=int, default=128)
    b.add_argument("--iterations", type=int, default=10_000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_bench_gap_fc)

    k = sub.add_parser("bench-kernels", parents=[common], help="time the compiled and pure-Python kernels")
    k.add_argument("--batch", type=int, default=32)
    k.add_argument("--seq-len", type=int, default=60)
    k.add_argument("--hidden", type=int, default=32)
    k.add_argument("--repeats", type=int, default=20)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--out", default=None)
    k.set_defaults(func=cmd_bench_kernels)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"fatigue-seq {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, StateError, ValueError, OSError, KeyError) as exc:
        print(f"fatigue-seq {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
