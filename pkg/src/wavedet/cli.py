"""Command-line entry point: ``wavedet {gen,train,eval,corr}``."""
from __future__ import annotations

import argparse
import logging
import math
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from . import _jsonio
from .config import ExperimentConfig
from .detector import (IntegrationPipeline, calibrate_threshold, load_bundle, save_bundle, train_bank,
                       train_integrator)
from .errors import (CalibrationError, ConfigurationError, DegenerateInputError, InvariantError,
                     ParameterError, TrainingError)
from .evaluation import (complexity_report, correlation_study, estimate_rates, format_complexity,
                         performance_curve, simulate_margins)
from .signal import Dataset, Domain, build_dataset

log = logging.getLogger("wavedet")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INVARIANT = 4


def _dataset_path(cfg: ExperimentConfig, arg) -> Path:
    return Path(arg) if arg else cfg.output_dir / "dataset"


def _bundle_path(cfg: ExperimentConfig, arg) -> Path:
    return Path(arg) if arg else cfg.output_dir / "pipeline"


def cmd_gen(cfg: ExperimentConfig, args) -> int:
    ds = build_dataset(cfg.pulse, cfg.shifts, cfg.snr_grid, cfg.counts["pulse"], cfg.counts["noise"],
                       cfg.seed, cfg.noise.sigma, cfg.partition_fractions)
    path = _dataset_path(cfg, args.dataset)
    path.parent.mkdir(parents=True, exist_ok=True)
    bin_path, json_path = ds.save(path)
    print(f"wrote {bin_path} and {json_path} ({len(ds)} windows)")
    for key, n in ds.partition_counts().items():
        print(f"  {key:<24} {n:>8}")
    return EXIT_OK


def _calibration_scores(cfg, ds, pipelines, workers):
    """Noise scores from the dataset's calibration partition plus fresh calibration groups."""
    bank = pipelines[0].bank
    parts = []
    groups, _, _ = ds.groups(is_pulse=False, partition="calibration")
    if len(groups):
        parts.append(bank.margins(groups))
    extra = cfg.counts["calibration_noise"]
    if extra:
        parts.append(simulate_margins(bank, cfg.pulse, None, extra, cfg.seed, Domain.CALIBRATION,
                                      sigma=cfg.noise.sigma, workers=workers))
    margins = np.concatenate(parts) if parts else np.zeros((0, bank.size))
    return {p.name: p.scores_from_margins(margins) for p in pipelines}


def _require_scores(available: int, targets) -> None:
    need = math.ceil(10 / min(targets))
    if available < need:
        raise CalibrationError(need, available, min(targets))


def cmd_train(cfg: ExperimentConfig, args) -> int:
    bundle = _bundle_path(cfg, args.bundle)
    if bundle.exists() and not args.force:
        print(f"error: {bundle} exists; pass --force to overwrite", file=sys.stderr)
        return EXIT_DATA
    ds_path = _dataset_path(cfg, args.dataset)
    if not ds_path.with_suffix(".json").exists():
        print(f"error: dataset {ds_path.with_suffix('.json')} not found; run `wavedet gen` first",
              file=sys.stderr)
        return EXIT_DATA
    ds = Dataset.load(ds_path)
    if tuple(ds.shifts) != cfg.shifts:
        raise ConfigurationError(f"dataset shifts {list(ds.shifts)} differ from config {list(cfg.shifts)}")
    n_calib = int(ds.select(shift=0, is_pulse=False, partition="calibration").sum())
    _require_scores(n_calib + cfg.counts["calibration_noise"], cfg.pfa_targets)
    bank = train_bank(ds, cfg.shifts, cfg.bank_svm, cfg.wavelet, scale=cfg.scale)
    pipelines = [IntegrationPipeline.single(bank, i) for i in range(bank.size)]
    for group in cfg.integrators:
        if len(group) < 2:
            continue
        inputs = tuple(cfg.shifts.index(s) for s in group)
        pipelines.append(train_integrator(bank, ds, inputs, cfg.integrator_kernel, cfg.integrator_svm))
    used = [p.train_trials for p in pipelines if len(p.train_trials)]
    calib_trials = np.unique(ds.trial[ds.select(partition="calibration")])
    for trials in [bank.train_trials] + used:
        if len(np.intersect1d(trials, calib_trials)):
            raise ConfigurationError("calibration partition overlaps training data")
    scores = _calibration_scores(cfg, ds, pipelines, cfg.workers)
    for p in pipelines:
        for target in sorted(cfg.pfa_targets, reverse=True):
            calibrate_threshold(p, scores[p.name], target)
    if bundle.exists():
        shutil.rmtree(bundle)
    save_bundle(bundle, bank, pipelines, {
        "dataset": str(ds_path.with_suffix(".json")),
        "dataset_seed": int(ds.noise.seed),
        "pfa_targets": list(cfg.pfa_targets),
        "config": cfg.to_dict(),
    })
    print(f"wrote {bundle}: {bank.size} linear detectors, "
          f"{sum(p.integrator is not None for p in pipelines)} integrators")
    for p in pipelines:
        print(f"  {p.name:<24} threshold {p.threshold:.6g} at P_fa={min(cfg.pfa_targets):g}")
    return EXIT_OK


def _load_bundle(cfg, args):
    bundle = _bundle_path(cfg, args.bundle)
    if not (bundle / "manifest.json").exists():
        raise FileNotFoundError(f"pipeline bundle {bundle} not found; run `wavedet train` first")
    return load_bundle(bundle)


def cmd_eval(cfg: ExperimentConfig, args) -> int:
    _require_scores(cfg.counts["eval_noise"], cfg.pfa_targets)
    bank, pipelines, _ = _load_bundle(cfg, args)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    curve = performance_curve(pipelines, cfg.pulse, cfg.snr_grid, cfg.pfa_targets, cfg.counts["eval_noise"],
                              cfg.counts["eval_pulse_per_snr"], cfg.seed, cfg.noise.sigma, cfg.workers)
    curve.save_csv(out / "curves.csv")
    print(f"wrote {out / 'curves.csv'} ({len(curve.schemes)} schemes)")

    corr = correlation_study(bank, cfg.pulse, cfg.correlation_snr_db, cfg.counts["correlation"], cfg.seed,
                             cfg.noise.sigma, cfg.workers)
    corr.check()
    corr.save_csv(out / "corr.csv")
    print(f"wrote {out / 'corr.csv'}")

    fused = [p for p in pipelines if p.integrator is not None]
    target = fused[-1] if fused else pipelines[0]
    rates = estimate_rates(target, cfg.pulse, cfg.rates_snr_db, cfg.counts["rates_pulse"],
                           cfg.counts["rates_noise"], cfg.seed, cfg.noise.sigma, cfg.workers)
    doc = rates.to_dict()
    doc["scheme"] = target.name
    (out / "rates.json").write_text(_jsonio.dumps(doc), encoding="utf-8")
    print(f"wrote {out / 'rates.json'}")

    h = bank.feature_dim << bank.scale
    rows = complexity_report(bank.wavelet, sorted({256, 512, 1024, 2048, h}), bank,
                             target if target.integrator is not None else None)
    (out / "complexity.txt").write_text(format_complexity(rows, bank.wavelet), encoding="utf-8")
    print(f"wrote {out / 'complexity.txt'}")
    return EXIT_OK


def cmd_corr(cfg: ExperimentConfig, args) -> int:
    bank, _, _ = _load_bundle(cfg, args)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    corr = correlation_study(bank, cfg.pulse, cfg.correlation_snr_db, cfg.counts["correlation"], cfg.seed,
                             cfg.noise.sigma, cfg.workers)
    corr.check()
    corr.save_csv(cfg.output_dir / "corr.csv")
    print(",".join(corr.labels))
    for row in corr.entries:
        print(",".join(f"{v:.4f}" for v in row))
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "corr": cmd_corr}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wavedet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "gen": "generate the labelled window dataset",
        "train": "train the shift bank and integrators, calibrate thresholds",
        "eval": "write curves.csv, corr.csv, rates.json and complexity.txt",
        "corr": "run only the shift-projection correlation study",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry by dotted path (repeatable)")
        p.add_argument("--workers", type=int, help="cap on Monte Carlo worker processes")
        p.add_argument("--output-dir", help="override output_dir")
        p.add_argument("--dataset", help="dataset path prefix (default: OUTPUT_DIR/dataset)")
        p.add_argument("--bundle", help="pipeline bundle directory (default: OUTPUT_DIR/pipeline)")
        if name == "train":
            p.add_argument("--force", action="store_true", help="overwrite an existing bundle")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    if args.output_dir is not None:
        overrides.append(f"output_dir={_json_str(args.output_dir)}")
    try:
        cfg = ExperimentConfig.load(args.config, overrides, os.environ.get("WAVEDET_SEED"))
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args)
    except InvariantError as exc:
        print(f"invariant failed: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigurationError, CalibrationError, TrainingError, DegenerateInputError,
            FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA


def _json_str(s: str) -> str:
    import json
    return json.dumps(s)


if __name__ == "__main__":
    sys.exit(main())
