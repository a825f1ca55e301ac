"""Command-line interface: generate, train, evaluate, sweep-delta, sweep-T,
select-pmu, noise-study.

Every command reads an optional JSON config (flags override it), derives all
randomness from the master seed, and writes comma-delimited tables plus PNG
renders into the output directory. TSAKIT_WORKERS bounds the generation
worker pool.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import assess, cases, experiments, figures, lstm, report

log = logging.getLogger("tsakit")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON experiment config file")
    parser.add_argument("--grid", help="built-in grid name or grid file path")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--delta", type=float, help="stability threshold in (0, 0.5)")
    parser.add_argument("--T", type=int, dest="window", help="training observation window")
    parser.add_argument("--tmax", type=int, help="maximum decision-making time, cycles")
    parser.add_argument("--tve", type=float, help="total vector error bound for noise")
    parser.add_argument("--out", default="tsakit-out", help="output directory")
    parser.add_argument("--workers", type=int, help="generation worker count")


def _config_from_args(args) -> experiments.ExperimentConfig:
    cfg = experiments.load_config(args.config) if args.config else experiments.ExperimentConfig()
    overrides = {}
    if args.grid is not None:
        overrides["grid"] = args.grid
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.delta is not None:
        overrides["delta"] = args.delta
    if args.window is not None:
        overrides["window"] = args.window
    if args.tmax is not None:
        overrides["t_max"] = args.tmax
    if args.tve is not None:
        overrides["tve"] = args.tve
    return replace(cfg, **overrides) if overrides else cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_grid(config: experiments.ExperimentConfig):
    from .grid import load_grid
    from .grids import builtin_names, builtin_grid
    if config.grid in builtin_names():
        return builtin_grid(config.grid)
    return load_grid(config.grid)


def _dataset_path(args, out: Path, attr: str, default_name: str) -> Path:
    explicit = getattr(args, attr, None)
    return Path(explicit) if explicit else out / default_name


def cmd_generate(args) -> int:
    config = _config_from_args(args)
    out = _outdir(args)
    grid = _load_grid(config)
    train, test = experiments.generate_and_split(config, grid, workers=args.workers)
    cases.save_dataset(train, out / "dataset_train.jsonl")
    cases.save_dataset(test, out / "dataset_test.jsonl")
    experiments.save_config(config, out / "config.json")
    for ds in (train, test):
        stable, unstable = ds.label_counts()
        log.info("%s: %d cases (%d stable / %d unstable)",
                 ds.dataset_id, len(ds.cases), stable, unstable)
    return 0


def cmd_train(args) -> int:
    config = _config_from_args(args)
    out = _outdir(args)
    chash = experiments.config_hash(config)
    train = cases.load_dataset(_dataset_path(args, out, "data", "dataset_train.jsonl"))
    times = []
    params = history = None
    for rep in range(max(1, args.time_repeats)):
        p, h, seconds = experiments.train_from_config(config, train)
        times.append(seconds)
        if rep == 0:
            params, history = p, h
    lstm.save_model(params, out / "model.json")
    report.write_history_csv(history, out / "history.csv", chash)
    figures.save_history_figure(history, out / "history.png")
    report.write_train_time_csv(times, out / "train_time.csv", chash)
    log.info("trained to epoch %d (best %d); %.1fs mean over %d run(s)",
             history.stopped_epoch, history.best_epoch,
             sum(times) / len(times), len(times))
    return 0


def cmd_evaluate(args) -> int:
    config = _config_from_args(args)
    out = _outdir(args)
    chash = experiments.config_hash(config)
    params = lstm.load_model(_dataset_path(args, out, "model", "model.json"))
    dataset = cases.load_dataset(_dataset_path(args, out, "data", "dataset_test.jsonl"))
    rep = assess.evaluate_dataset(params, dataset, config.delta, config.t_max)
    stem = f"report_{dataset.split_tag}"
    report.write_metrics_csv(rep, out / f"{stem}.csv", chash, config.window)
    figures.save_metrics_figure(rep, out / f"{stem}.png")
    log.info("%s: accuracy=%.4f ART=%.3f cycles fallback=%.3f",
             rep.dataset_id, rep.accuracy, rep.art, rep.fallback_rate)
    return 0


def cmd_sweep_delta(args) -> int:
    config = _config_from_args(args)
    out = _outdir(args)
    chash = experiments.config_hash(config)
    params = lstm.load_model(_dataset_path(args, out, "model", "model.json"))
    test = cases.load_dataset(_dataset_path(args, out, "data", "dataset_test.jsonl"))
    result = experiments.run_delta_sweep(config, params, test)
    report.write_sweep_csv(result, out / "sweep_delta.csv", chash)
    figures.save_sweep_figure(result, out / "sweep_delta.png")
    log.info("delta sweep: %d rows written", len(result.rows))
    return 0


def _parse_t_values(expr: str) -> list[int]:
    values = []
    for part in expr.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-")
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    return values


def cmd_sweep_t(args) -> int:
    config = _config_from_args(args)
    out = _outdir(args)
    chash = experiments.config_hash(config)
    train = cases.load_dataset(_dataset_path(args, out, "train_data", "dataset_train.jsonl"))
    test = cases.load_dataset(_dataset_path(args, out, "test_data", "dataset_test.jsonl"))
    result = experiments.run_t_sweep(config, train, test, _parse_t_values(args.t_values))
    report.write_sweep_csv(result, out / "sweep_T.csv", chash)
    figures.save_sweep_figure(result, out / "sweep_T.png")
    log.info("T sweep: %d rows written", len(result.rows))
    return 0


def cmd_select_pmu(args) -> int:
    config = _config_from_args(args)
    out = _outdir(args)
    chash = experiments.config_hash(config)
    train = cases.load_dataset(_dataset_path(args, out, "train_data", "dataset_train.jsonl"))
    test = cases.load_dataset(_dataset_path(args, out, "test_data", "dataset_test.jsonl"))
    result = experiments.run_feature_selection(config, train, test, args.direction)
    stem = f"pmu_{args.direction}"
    report.write_selection_csv(result, out / f"{stem}.csv", chash)
    figures.save_selection_figure(result, out / f"{stem}.png")
    log.info("%s selection: %d bus sets evaluated", args.direction, len(result.rows))
    return 0


def cmd_noise_study(args) -> int:
    config = _config_from_args(args)
    out = _outdir(args)
    chash = experiments.config_hash(config)
    train = cases.load_dataset(_dataset_path(args, out, "train_data", "dataset_train.jsonl"))
    test = cases.load_dataset(_dataset_path(args, out, "test_data", "dataset_test.jsonl"))
    clean_model = None
    if args.model:
        clean_model = lstm.load_model(args.model)
    clean, noisy, _, _ = experiments.run_noise_study(config, train, test, clean_model)
    report.write_metrics_csv(clean, out / "noise_clean.csv", chash, config.window)
    report.write_metrics_csv(noisy, out / "noise_noisy.csv", chash, config.window)
    figures.save_metrics_figure(clean, out / "noise_clean.png")
    figures.save_metrics_figure(noisy, out / "noise_noisy.png")
    log.info("noise study tve=%g: clean accuracy=%.4f/ART=%.3f, noisy accuracy=%.4f/ART=%.3f",
             config.tve, clean.accuracy, clean.art, noisy.accuracy, noisy.art)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsakit",
        description="Transient stability assessment experiments: simulate, train, assess.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate the contingency protocol into datasets")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the classifier on a dataset")
    _add_common(p)
    p.add_argument("--data", help="training dataset path")
    p.add_argument("--time-repeats", type=int, default=1, dest="time_repeats",
                   help="seeded training repetitions for the timing summary")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="time-adaptive assessment of a dataset")
    _add_common(p)
    p.add_argument("--model", help="model file path")
    p.add_argument("--data", help="dataset path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-delta", help="evaluate one model across the threshold grid")
    _add_common(p)
    p.add_argument("--model", help="model file path")
    p.add_argument("--data", help="test dataset path")
    p.set_defaults(func=cmd_sweep_delta)

    p = sub.add_parser("sweep-T", help="train and evaluate per observation window")
    _add_common(p)
    p.add_argument("--train-data", dest="train_data", help="training dataset path")
    p.add_argument("--test-data", dest="test_data", help="test dataset path")
    p.add_argument("--T-values", dest="t_values", default="1-10",
                   help="windows to sweep, e.g. '1-10' or '1,2,5'")
    p.set_defaults(func=cmd_sweep_t)

    p = sub.add_parser("select-pmu", help="greedy wrapper PMU placement")
    _add_common(p)
    p.add_argument("--direction", choices=("forward", "backward"), default="forward")
    p.add_argument("--train-data", dest="train_data", help="training dataset path")
    p.add_argument("--test-data", dest="test_data", help="test dataset path")
    p.set_defaults(func=cmd_select_pmu)

    p = sub.add_parser("noise-study", help="paired clean/noisy reports under a TVE bound")
    _add_common(p)
    p.add_argument("--model", help="clean baseline model (trained fresh if omitted)")
    p.add_argument("--train-data", dest="train_data", help="training dataset path")
    p.add_argument("--test-data", dest="test_data", help="test dataset path")
    p.set_defaults(func=cmd_noise_study)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
