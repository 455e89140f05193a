"""Command-line entry point.

Subcommands: ``train``, ``eval``, ``analyze-adjacency``, ``analyze-features``,
``calibration``, ``synth``. Exit codes: 0 success, 2 configuration error,
3 data/artifact error, 4 numerical failure. Diagnostics go to stderr; stdout
carries only the final metric lines.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import data as dio
from . import metrics as mx
from . import model as md
from . import training as tr
from .autodiff import load_matrix_csv, save_matrix_csv
from .exceptions import ConfigError, DataError, GcnJemError, NumericalError
from .graph import spectrum
from .training import EPOCH_LOG_HEADER, epoch_log_row

GENERATED_FEATURES_FILE = "generated_features.csv"
EPOCH_LOG_FILE = "epoch_log.csv"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gcnjem")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, dataset=True, out=True, config=False):
        if dataset:
            sp.add_argument("--dataset", required=True, help="dataset directory")
        if out:
            sp.add_argument("--out", required=True, help="output directory")
        if config:
            sp.add_argument("--config", help="flat key=value config file")
            sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                            help="config override (repeatable)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--normalize-features", action="store_true")

    t = sub.add_parser("train", help="run the training loop")
    common(t, config=True)
    t.add_argument("--mode", choices=("gcn", "jem", "jemo"), default=None)
    t.add_argument("--repeats", type=int, default=1)

    e = sub.add_parser("eval", help="accuracy of a stored checkpoint")
    common(e)
    e.add_argument("--split", choices=("train", "val", "test"), default="test")

    c = sub.add_parser("calibration", help="expected calibration error report")
    common(c)
    c.add_argument("--split", choices=("train", "val", "test"), default="test")
    c.add_argument("--buckets", type=int, default=20)

    aa = sub.add_parser("analyze-adjacency", help="adjacency spectra before/after training")
    common(aa)
    aa.add_argument("--bins", type=int, default=100)

    af = sub.add_parser("analyze-features", help="feature covariance spectra before/after")
    common(af)
    af.add_argument("--bins", type=int, default=100)

    s = sub.add_parser("synth", help="write a synthetic block-model dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--num-blocks", type=int, default=2)
    s.add_argument("--block-size", type=int, default=30)
    s.add_argument("--p-in", type=float, default=0.2)
    s.add_argument("--p-out", type=float, default=0.02)
    s.add_argument("--feature-dim", type=int, default=8)
    s.add_argument("--noise-scale", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=0)
    return p


def _load_config(args) -> tr.TrainConfig:
    values = {}
    if args.config:
        if not os.path.isfile(args.config):
            raise ConfigError(f"config file {args.config} not found")
        values = tr.parse_config_file(args.config)
    values = tr.apply_overrides(values, args.set)
    if args.mode is not None:
        values["mode"] = args.mode
    mode = values.setdefault("mode", "jem")
    if mode in ("gcn", "jem"):
        values["jemo_weight"] = 0.0
    elif values.get("jemo_weight", 0.0) == 0.0:
        values["jemo_weight"] = 1e-3
    if args.seed is not None:
        values["seed"] = args.seed
    return tr.build_config(values)


def _dataset(args) -> dio.Dataset:
    return dio.load_dataset(args.dataset, normalize_features=args.normalize_features)


def _split_mask(dataset: dio.Dataset, name: str) -> np.ndarray:
    return {"train": dataset.train_mask, "val": dataset.val_mask,
            "test": dataset.test_mask}[name]


def _run_train(args) -> int:
    config = _load_config(args)
    dataset = _dataset(args)
    repeats = max(1, args.repeats)
    accuracies = []
    for r in range(repeats):
        run_cfg = replace(config, seed=config.seed + r)
        out_dir = args.out if repeats == 1 else os.path.join(args.out, f"seed{run_cfg.seed}")
        os.makedirs(out_dir, exist_ok=True)
        log_path = os.path.join(out_dir, EPOCH_LOG_FILE)
        with open(log_path, "w", newline="\n") as log_file:
            log_file.write(EPOCH_LOG_HEADER + "\n")

            def stream(log, f=log_file):
                f.write(epoch_log_row(log) + "\n")

            result = tr.train(dataset, run_cfg, on_epoch=stream)
        dio.save_checkpoint(result.params, result.adjacency, out_dir)
        save_matrix_csv(result.x_hat, os.path.join(out_dir, GENERATED_FEATURES_FILE))
        acc = tr.evaluate_accuracy(result.params, result.adjacency, dataset.features,
                                   dataset.labels, dataset.test_mask)
        accuracies.append(acc)
        print(f"test_accuracy,seed={run_cfg.seed},{_fmt(acc)}")
    if repeats > 1:
        print(f"mean_test_accuracy,{_fmt(float(np.mean(accuracies)))}")
        print(f"std_test_accuracy,{_fmt(float(np.std(accuracies)))}")
    return 0


def _run_eval(args) -> int:
    dataset = _dataset(args)
    params, adjacency = dio.load_checkpoint(args.out)
    acc = tr.evaluate_accuracy(params, adjacency, dataset.features, dataset.labels,
                               _split_mask(dataset, args.split))
    print(f"accuracy,{args.split},{_fmt(acc)}")
    return 0


def _run_calibration(args) -> int:
    dataset = _dataset(args)
    params, adjacency = dio.load_checkpoint(args.out)
    logits = md.forward(tr._renormalize(adjacency), dataset.features, params)
    classes, confidence = md.predict(logits)
    mask = _split_mask(dataset, args.split)
    idx = np.nonzero(mask)[0]
    correct = classes[idx] == dataset.labels[idx]
    report = mx.expected_calibration_error(confidence[idx], correct,
                                           buckets=args.buckets)
    report.to_csv(os.path.join(args.out, f"calibration_{args.split}.csv"))
    hist = mx.confidence_histogram(confidence[idx])
    hist.to_csv(os.path.join(args.out, f"confidence_histogram_{args.split}.csv"))
    print(f"ece,{args.split},{_fmt(report.ece)}")
    # bucket-count sensitivity alongside the headline number
    for m in (10, 100):
        if m != args.buckets:
            alt = mx.expected_calibration_error(confidence[idx], correct, buckets=m)
            print(f"ece_sensitivity,{args.split},buckets={m},{_fmt(alt.ece)}")
    return 0


def _spectra_pair(args, before_report, after_report, prefix: str) -> int:
    os.makedirs(args.out, exist_ok=True)
    before_report.to_csv(os.path.join(args.out, f"{prefix}_before.csv"))
    after_report.to_csv(os.path.join(args.out, f"{prefix}_after.csv"))
    comparison = mx.compare_spectra(before_report, after_report)
    comparison.to_csv(os.path.join(args.out, f"{prefix}_compare.csv"))
    for n, b, a, d in zip(comparison.lengths, comparison.before_counts,
                          comparison.after_counts, comparison.deltas):
        print(f"closed_paths,{n},{_fmt(b)},{_fmt(a)},{_fmt(d)}")
    return 0


def _run_analyze_adjacency(args) -> int:
    dataset = _dataset(args)
    before = spectrum(dataset.adjacency, bins=args.bins)
    adjacency_path = os.path.join(args.out, dio.ADJACENCY_FILE)
    if os.path.isfile(adjacency_path):
        after = spectrum(dio.load_adjacency_csv(adjacency_path), bins=args.bins)
    else:
        after = before
    return _spectra_pair(args, before, after, "adjacency_spectrum")


def _run_analyze_features(args) -> int:
    dataset = _dataset(args)
    before = mx.covariance_spectrum(dataset.features, bins=args.bins)
    gen_path = os.path.join(args.out, GENERATED_FEATURES_FILE)
    if os.path.isfile(gen_path):
        after = mx.covariance_spectrum(load_matrix_csv(gen_path), bins=args.bins)
    else:
        after = before
    return _spectra_pair(args, before, after, "covariance_spectrum")


def _run_synth(args) -> int:
    blocks = tuple((args.block_size, y) for y in range(args.num_blocks))
    spec = dio.SbmSpec(blocks=blocks, p_in=args.p_in, p_out=args.p_out,
                       feature_dim=args.feature_dim, noise_scale=args.noise_scale,
                       seed=args.seed)
    dataset = dio.generate_sbm(spec)
    dio.save_dataset(dataset, args.out)
    print(f"synth,nodes={dataset.n},edges={len(dataset.adjacency.edge_set())}")
    return 0


_HANDLERS = {
    "train": _run_train,
    "eval": _run_eval,
    "calibration": _run_calibration,
    "analyze-adjacency": _run_analyze_adjacency,
    "analyze-features": _run_analyze_features,
    "synth": _run_synth,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 4
    except GcnJemError as e:  # pragma: no cover - unplanned family
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
