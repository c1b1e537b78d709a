"""Command-line front end for the detection pipeline.

Subcommands: extract (manifest -> feature matrix), evaluate (matrix ->
report JSON), decision (report -> decision-time curve + majority-vote
sweep), synth (write a synthetic study), report (pretty-print a report).

A single JSON config file (--config) supplies defaults; per-subcommand
flags override individual values.  The GAZESENSE_SEED environment
variable overrides the config seed, and an explicit --seed flag
overrides both.  Every subcommand is deterministic for fixed inputs and
seed, and none of the emitted artifacts embeds a timestamp.

Exit codes: 0 success, 1 I/O error, 2 data/validation error,
3 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import synthgen
from .config import PipelineConfig, load_config
from .decision import decision_time_curve, group_size_sweep, series_from_report
from .errors import ConfigError, DataError
from .evaluation import TASKS, evaluate, load_report, save_report
from .signals import load_manifest, load_study_trip
from .windows import (
    concat_tables,
    feature_names,
    read_matrix_csv,
    trip_feature_table,
    write_matrix_binary,
    write_matrix_csv,
)

__all__ = ["main"]


def _resolve_seed(cfg: PipelineConfig, flag_seed: int | None) -> int:
    """Seed precedence: --seed flag, then GAZESENSE_SEED, then config."""
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get("GAZESENSE_SEED")
    if env is not None and env != "":
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"GAZESENSE_SEED must be an integer, got {env!r}")
    return cfg.seed


# ------------------------------------------------------------------ extract

_WORKER_STATE: dict = {}


def _extract_one(job: tuple) -> object:
    """Extract one trip's feature table; runs in a worker process."""
    manifest_path, idx, source, window_doc, detector_doc = job
    state = _WORKER_STATE.get(manifest_path)
    if state is None:
        state = load_manifest(manifest_path)
        _WORKER_STATE[manifest_path] = state
    manifest = state
    from .events import EventDetectorParams
    from .windows import WindowSpec

    entry = manifest.entries[idx]
    trip = load_study_trip(manifest, entry)
    use_can = source in ("can", "both")
    return trip_feature_table(
        trip, WindowSpec(**window_doc), source,
        EventDetectorParams(**detector_doc),
        can_channels=manifest.can_channels if use_can else None,
        can_derivatives=manifest.can_derivatives if use_can else None,
    )


def cmd_extract(args, cfg: PipelineConfig) -> int:
    from dataclasses import asdict

    manifest_path = args.manifest or cfg.paths.manifest
    manifest = load_manifest(manifest_path)
    source = args.source or cfg.source
    if source in ("can", "both") and not manifest.can_channels:
        raise DataError("manifest declares no CAN channels")

    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    window_doc = asdict(cfg.window)
    detector_doc = asdict(cfg.detector)
    work = [(str(manifest_path), i, source, window_doc, detector_doc)
            for i in range(len(manifest.entries))]
    if jobs <= 1 or len(work) <= 1:
        tables = [_extract_one(job) for job in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            tables = list(pool.map(_extract_one, work))

    use_can = source in ("can", "both")
    names = feature_names(
        source,
        manifest.can_channels if use_can else None,
        manifest.can_derivatives if use_can else None)
    matrix = concat_tables(tables, names)

    csv_path = args.out_csv or cfg.paths.features_csv
    bin_path = args.out_bin or cfg.paths.features_bin
    write_matrix_csv(matrix, csv_path)
    write_matrix_binary(matrix, bin_path)
    print(f"rows={matrix.n_rows} columns={matrix.n_features} "
          f"dropped={matrix.n_dropped}")
    print(f"wrote {csv_path} and {bin_path}")
    return 0


# ----------------------------------------------------------------- evaluate

def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    matrix = read_matrix_csv(args.features or cfg.paths.features_csv)
    seed = _resolve_seed(cfg, args.seed)
    report = evaluate(
        matrix,
        task=args.task or cfg.task,
        scheme=args.scheme or cfg.scheme,
        C=cfg.train.C,
        class_weight=None if cfg.train.class_weight == "none" else "balanced",
        tol=cfg.train.tol,
        max_iter=cfg.train.max_iter,
        permute_labels=args.permute_labels,
        seed=seed,
    )
    out = args.out or cfg.paths.report
    save_report(report, out)
    macro = report["macro"]
    bits = [f"{name}={m['mean']:.3f}±{m['sd']:.3f}"
            for name, m in macro.items() if m["mean"] is not None]
    print(f"task={report['task']} scheme={report['scheme']} "
          f"folds={len(report['folds'])} " + " ".join(bits))
    print(f"wrote {out}")
    return 0


# ----------------------------------------------------------------- decision

def cmd_decision(args, cfg: PipelineConfig) -> int:
    report = load_report(args.report or cfg.paths.report)
    try:
        series = series_from_report(report)
    except KeyError as exc:
        raise DataError(f"report lacks per-window scores ({exc})") from exc
    seed = _resolve_seed(cfg, args.seed)
    curve = decision_time_curve(series, seed=seed)
    sweep = group_size_sweep(series)

    curve_path = args.curve_out or cfg.paths.curve_csv
    with open(curve_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "balanced_accuracy", "ci_low", "ci_high", "n_trips"])
        for row in zip(curve["times"], curve["balanced_accuracy"],
                       curve["ci_low"], curve["ci_high"], curve["n_trips"]):
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])

    sweep_path = args.sweep_out or cfg.paths.sweep_csv
    with open(sweep_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group_size", "n_groups", "auroc", "balanced_accuracy"])
        for row in zip(sweep["group_size"], sweep["n_groups"],
                       sweep["auroc"], sweep["balanced_accuracy"]):
            w.writerow([row[0], row[1], repr(row[2]), repr(row[3])])

    print(f"curve: {len(curve['times'])} points from t={curve['times'][0]:g}s, "
          f"final balanced accuracy {curve['balanced_accuracy'][-1]:.3f}")
    print("group_size  n_groups    auroc  balanced_accuracy")
    for g, n, a, b in zip(sweep["group_size"], sweep["n_groups"],
                          sweep["auroc"], sweep["balanced_accuracy"]):
        print(f"{g:10d}  {n:8d}  {a:.4f}  {b:.4f}")
    print(f"wrote {curve_path} and {sweep_path}")
    return 0


# -------------------------------------------------------------------- synth

_PROFILE_SETS = {
    "default": synthgen.default_profiles,
    "strong": synthgen.strong_profiles,
    "event_only": synthgen.event_only_profiles,
}


def cmd_synth(args, cfg: PipelineConfig) -> int:
    seed = _resolve_seed(cfg, args.seed)
    synth_cfg = synthgen.SynthConfig(
        n_participants=args.participants,
        trips_per_block=args.trips_per_block,
        duration_s=args.duration,
        trait_spread=args.trait_spread,
        master_seed=seed,
        with_can=args.with_can,
    )
    out_dir = args.out or cfg.paths.study_dir
    profiles = _PROFILE_SETS[args.profiles]()
    manifest, files = synthgen.generate_study(
        synth_cfg, out_dir, profiles=profiles, write_truth=args.truth)
    print(f"wrote {len(manifest.entries)} trips ({len(files)} files) to {out_dir}")
    return 0


# ------------------------------------------------------------------- report

def cmd_report(args, cfg: PipelineConfig) -> int:
    report = load_report(args.report or cfg.paths.report)
    if args.format == "json":
        import json

        json.dump(report, sys.stdout, indent=1, sort_keys=True)
        sys.stdout.write("\n")
        return 0
    print(f"task: {report['task']}   scheme: {report['scheme']}")
    print(f"windows: {report['n_windows']}   features: {report['n_features']}"
          f"   participants: {report['n_participants']}   "
          f"folds: {len(report['folds'])}")
    print("macro metrics (mean ± sd over folds):")
    for name, m in report["macro"].items():
        if m["mean"] is None:
            continue
        sd = 0.0 if m["sd"] is None else m["sd"]
        print(f"  {name:18s} {m['mean']:.2f} ± {sd:.2f}")
    pooled = report.get("pooled") or {}
    if pooled.get("auroc") is not None:
        print(f"pooled: auroc {pooled['auroc']:.3f}  auprc {pooled['auprc']:.3f}")
    per_scn = report.get("per_scenario") or {}
    if per_scn:
        print("per scenario:")
        for name in sorted(per_scn):
            row = per_scn[name]
            extra = ("" if row.get("auroc") is None
                     else f"  auroc {row['auroc']:.3f}")
            print(f"  {name:10s} n={row['n_windows']:6d}  "
                  f"balanced_accuracy {row['balanced_accuracy']:.3f}{extra}")
    full = report.get("full_model") or {}
    gi = full.get("group_importance") or {}
    if gi:
        print("feature-group importance (full-data fit):")
        for name, share in sorted(gi.items(), key=lambda kv: -kv[1]):
            print(f"  {name:12s} {share:.3f}")
        print(f"nonzero coefficients: {full.get('n_nonzero')}")
    return 0


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazesense",
        description="Camera-based driver impairment detection pipeline.")
    parser.add_argument("--config", help="JSON config file (flags override it)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="manifest -> feature matrix (CSV + binary)")
    p.add_argument("--manifest", help="study manifest JSON")
    p.add_argument("--source", choices=("camera", "can", "both"))
    p.add_argument("--out-csv", help="feature matrix CSV path")
    p.add_argument("--out-bin", help="feature matrix binary path")
    p.add_argument("--jobs", type=int, help="parallel workers (default: cores)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", help="feature matrix -> cross-validated report")
    p.add_argument("--features", help="feature matrix CSV")
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--scheme", choices=("loso", "loso_lodso"))
    p.add_argument("--out", help="report JSON path")
    p.add_argument("--permute-labels", action="store_true",
                   help="shuffle labels first (null-distribution check)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("decision", help="report -> decision-time curve + vote sweep")
    p.add_argument("--report", help="evaluation report JSON")
    p.add_argument("--curve-out", help="decision-time curve CSV path")
    p.add_argument("--sweep-out", help="group-size sweep CSV path")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_decision)

    p = sub.add_parser("synth", help="generate a synthetic study")
    p.add_argument("--out", help="output directory")
    p.add_argument("--participants", type=int, default=10)
    p.add_argument("--trips-per-block", type=int, default=3)
    p.add_argument("--duration", type=float, default=600.0,
                   help="trip duration in seconds")
    p.add_argument("--trait-spread", type=float, default=0.2)
    p.add_argument("--profiles", choices=sorted(_PROFILE_SETS),
                   default="default")
    p.add_argument("--with-can", action="store_true",
                   help="also synthesize the lane-position CAN channel")
    p.add_argument("--truth", action="store_true",
                   help="write ground-truth event lists")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="pretty-print an evaluation report")
    p.add_argument("--report", help="evaluation report JSON")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else PipelineConfig()
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        path = getattr(exc, "filename", None)
        where = f" ({path})" if path else ""
        print(f"i/o error: {exc}{where}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
