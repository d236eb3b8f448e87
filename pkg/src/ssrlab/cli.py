"""Experiment runner CLI.

Verbs: ``synth`` (generate dataset files), ``inject`` (apply noise to an
embedding file), ``run`` (single experiment), ``grid`` (hyperparameter
sweep), ``compare-modes`` (selector comparison). Flags override config keys.
Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ParsedConfig, parse_config
from .errors import ConfigError, DataError, NumericError
from .noise import apply_noise, make_gaussian_dataset
from .pipeline import ExperimentRecord, compare_selection_modes, run_experiment
from .ssrd import load_embeddings, load_pool, write_dataset, write_pool

log = logging.getLogger("ssrlab")

CSV_COLUMNS = ["epoch", "relabelled_fraction", "relabel_accuracy",
               "sel_precision", "sel_recall", "sel_fscore", "selected_count",
               "test_acc", "t_train_s", "t_feat_s", "t_select_s", "t_relabel_s"]

_INT_COLUMNS = {"epoch", "selected_count"}

# flags mirroring the most common config keys; flags win over the file
_OVERRIDE_FLAGS = {
    "theta_s": float, "theta_r": float, "k_neighbours": int,
    "lambda_fc": float, "mixup_alpha": float, "learning_rate": float,
    "epochs": int, "batch_size": int, "seed": int,
}


def _fmt(column: str, value) -> str:
    if column in _INT_COLUMNS:
        return str(int(value))
    return repr(float(value))


def emit_metrics(record: ExperimentRecord, out_dir) -> None:
    """Write metrics.csv, record.json, and per-metric plot data files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [dataclasses.asdict(e) for e in record.epochs]
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(c, row[c]) for c in CSV_COLUMNS))
    (out / "metrics.csv").write_text("\n".join(lines) + "\n")
    payload = {"config": record.config, "epochs": rows,
               "best_test_acc": record.best_test_acc,
               "last_test_acc": record.last_test_acc}
    (out / "record.json").write_text(json.dumps(payload, indent=2) + "\n")
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    for col in CSV_COLUMNS[1:]:
        data = "\n".join(f"{row['epoch']} {_fmt(col, row[col])}" for row in rows)
        (plots / f"{col}.dat").write_text(data + "\n")


def _write_manifest(out_dir: Path, config_path, seed: int, started: float) -> None:
    manifest = {
        "config_path": str(config_path) if config_path else None,
        "output_dir": str(out_dir),
        "seed": seed,
        "artifact_version": __version__,
        "started": started,
        "finished": time.time(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _run_dir(root: Path, seed: int) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = root / f"run_{stamp}_s{seed}"
    out = base
    suffix = 1
    while out.exists():
        out = Path(f"{base}_{suffix}")
        suffix += 1
    out.mkdir(parents=True)
    return out


def _prepare_data(parsed: ParsedConfig, data_path=None, test_path=None,
                  ood_path=None):
    """Dataset either from SSRD files or generated from the synth/noise spec."""
    if data_path is not None:
        dataset = load_embeddings(data_path)
        test = load_embeddings(test_path) if test_path else None
        return dataset, test
    if parsed.synth is None:
        raise ConfigError("RANGE_ERROR",
                          "no input file given and no synth section in config")
    synth = make_gaussian_dataset(parsed.synth)
    dataset = synth.train
    if parsed.noise is not None:
        pool = load_pool(ood_path) if ood_path else synth.ood_pool
        dataset = apply_noise(dataset, parsed.noise, pool)
    return dataset, synth.test


def _apply_overrides(parsed: ParsedConfig, args) -> ParsedConfig:
    updates = {}
    for key in _OVERRIDE_FLAGS:
        val = getattr(args, key, None)
        if val is not None:
            updates[key] = val
    if not updates:
        return parsed
    return dataclasses.replace(parsed,
                               train=dataclasses.replace(parsed.train, **updates))


def _cmd_synth(args) -> int:
    parsed = parse_config(args.config)
    if parsed.synth is None:
        raise ConfigError("RANGE_ERROR", "config has no synth section")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    synth = make_gaussian_dataset(parsed.synth)
    write_dataset(out / "train.ssrd", synth.train)
    write_dataset(out / "test.ssrd", synth.test)
    if synth.ood_pool.shape[0]:
        write_pool(out / "ood.ssrd", synth.ood_pool)
    (out / "synth.json").write_text(
        json.dumps(parsed.echo(), indent=2) + "\n")
    log.info("wrote synthetic dataset to %s", out)
    return 0


def _cmd_inject(args) -> int:
    parsed = parse_config(args.config)
    if parsed.noise is None:
        raise ConfigError("RANGE_ERROR", "config has no noise section")
    dataset = load_embeddings(args.input)
    pool = load_pool(args.ood) if args.ood else np.zeros((0, dataset.dim))
    noisy = apply_noise(dataset, parsed.noise, pool)
    write_dataset(args.out, noisy)
    log.info("wrote noisy dataset to %s", args.out)
    return 0


def _cmd_run(args) -> int:
    started = time.time()
    parsed = _apply_overrides(parse_config(args.config), args)
    dataset, test = _prepare_data(parsed, args.input, args.test, args.ood)
    out = _run_dir(Path(args.out), parsed.train.seed)
    outcome = run_experiment(dataset, parsed.train, test=test)
    record = outcome.record
    record.config = parsed.echo()
    emit_metrics(record, out)
    _write_manifest(out, args.config, parsed.train.seed, started)
    log.info("run finished: best=%.4f last=%.4f -> %s",
             record.best_test_acc, record.last_test_acc, out)
    return 0


_SWEEPABLE = {"theta_s": float, "theta_r": float, "k_neighbours": int}


def run_grid(parsed: ParsedConfig, param: str, values, out_root,
             data=None, test=None) -> list:
    """One independent run per sweep value, plus an aggregated summary CSV."""
    if param not in _SWEEPABLE:
        raise ConfigError("RANGE_ERROR",
                          f"sweep parameter must be one of {sorted(_SWEEPABLE)}")
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    if data is None:
        data, test = _prepare_data(parsed)
    summary = []
    for value in values:
        cfg = dataclasses.replace(parsed.train, **{param: value})
        point = dataclasses.replace(parsed, train=cfg)
        out = out_root / f"{param}_{value}"
        out.mkdir(parents=True, exist_ok=True)
        record = run_experiment(data, cfg, test=test).record
        record.config = point.echo()
        emit_metrics(record, out)
        summary.append((value, record.best_test_acc, record.last_test_acc))
    lines = [f"{param},best_test_acc,last_test_acc"]
    for value, best, last in summary:
        lines.append(f"{value},{best!r},{last!r}")
    (out_root / "summary.csv").write_text("\n".join(lines) + "\n")
    return summary


def _cmd_grid(args) -> int:
    started = time.time()
    parsed = _apply_overrides(parse_config(args.config), args)
    caster = _SWEEPABLE.get(args.param, float)
    try:
        values = [caster(v) for v in args.values.split(",")]
    except ValueError as exc:
        raise ConfigError("RANGE_ERROR",
                          f"bad sweep values {args.values!r}: {exc}") from exc
    data, test = _prepare_data(parsed, args.input, args.test, args.ood)
    run_grid(parsed, args.param, values, args.out, data=data, test=test)
    _write_manifest(Path(args.out), args.config, parsed.train.seed, started)
    log.info("grid finished: %d points -> %s", len(values), args.out)
    return 0


def _cmd_compare_modes(args) -> int:
    started = time.time()
    parsed = _apply_overrides(parse_config(args.config), args)
    data, test = _prepare_data(parsed, args.input, args.test, args.ood)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = compare_selection_modes(data, parsed.train, test=test)
    lines = ["mode,best_test_acc,last_test_acc"]
    for name, record in runs.items():
        record.config = parsed.echo()
        emit_metrics(record, out / name)
        lines.append(f"{name},{record.best_test_acc!r},{record.last_test_acc!r}")
    (out / "comparison.csv").write_text("\n".join(lines) + "\n")
    _write_manifest(out, args.config, parsed.train.seed, started)
    log.info("mode comparison -> %s", out)
    return 0


def _add_common(p, with_input=True):
    p.add_argument("-c", "--config", required=True, help="JSON config file")
    p.add_argument("-o", "--out", required=True, help="output directory")
    if with_input:
        p.add_argument("-i", "--input", help="SSRD dataset file")
        p.add_argument("--test", help="SSRD holdout dataset file")
        p.add_argument("--ood", help="SSRD open-set pool file")
    for key, caster in _OVERRIDE_FLAGS.items():
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=caster,
                       default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssrlab")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("inject", help="apply noise to an embedding file")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--ood", help="SSRD open-set pool file")
    p.set_defaults(func=_cmd_inject)

    p = sub.add_parser("run", help="run a single experiment")
    _add_common(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("grid", help="sweep one hyperparameter")
    _add_common(p)
    p.add_argument("--param", required=True,
                   choices=sorted(_SWEEPABLE))
    p.add_argument("--values", required=True,
                   help="comma-separated sweep values")
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("compare-modes", help="compare selection mechanisms")
    _add_common(p)
    p.set_defaults(func=_cmd_compare_modes)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return 2
    except DataError as exc:
        log.error("%s", exc)
        return 3
    except NumericError as exc:
        log.error("%s", exc)
        return 4


if __name__ == "__main__":
    sys.exit(main())
