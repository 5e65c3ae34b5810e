"""Command-line entry point: ``capslab {train,sweep,spectrum,report,schema,tune-filters}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, MetricError, ParseError
from .filters import tune_filters_on_pid
from .harness import (
    MODES,
    ablation_sweep,
    build_report,
    collect_results,
    config_schema,
    load_config,
    new_run_dir,
    parse_config,
    report_render,
    run_experiment,
    spectrum_export,
    write_report,
)


def _load(args):
    cfg = load_config(args.config)
    updates = {}
    if args.seeds:
        updates["seeds"] = [int(s) for s in args.seeds.split(",")]
    if args.steps is not None:
        updates["steps"] = args.steps
    if args.workers is not None:
        updates["workers"] = args.workers
    if updates:
        cfg = parse_config({**cfg.model_dump(mode="json"), **updates})
    return cfg


def _prepare(cfg, args) -> Path:
    run_dir = Path(args.run_dir) if args.run_dir else new_run_dir(cfg, Path(args.out) if args.out else None)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.yaml").write_text(cfg.to_yaml())
    return run_dir


def cmd_train(args) -> int:
    cfg = _load(args)
    run_dir = _prepare(cfg, args)
    label = "vanilla" if cfg.caps.build().is_vanilla else "caps"
    results = run_experiment(cfg.model_copy(update={"name": f"{cfg.name}/{label}"}), run_dir)
    report = build_report({label: results})
    write_report(report, run_dir)
    print(report_render(report), end="")
    print(f"results in {run_dir}")
    return 1 if all(r.failed for r in results) else 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    modes = args.modes.split(",") if args.modes else None
    run_dir = _prepare(cfg, args)
    groups = ablation_sweep(cfg, modes, run_dir)
    report = build_report(groups)
    write_report(report, run_dir)
    print(report_render(report), end="")
    print(f"results in {run_dir}")
    return 0


def cmd_spectrum(args) -> int:
    out = Path(args.out) if args.out else Path(args.log).parent
    report = spectrum_export(args.log, args.fs, out, window=args.window)
    print(report.to_json())
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    report = build_report(collect_results(run_dir), baseline=args.baseline)
    if args.write:
        write_report(report, run_dir)
    print(report.to_json() if args.json else report_render(report), end="")
    return 0


def cmd_schema(args) -> int:
    print(config_schema())
    return 0


def cmd_tune_filters(args) -> int:
    tuned = tune_filters_on_pid(overshoot_bound=args.bound, gain=args.gain)
    print(json.dumps({k: v.to_dict() for k, v in tuned.items()}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="capslab", description="Smooth-action policy experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def run_opts(sp):
        sp.add_argument("config", help="experiment YAML file")
        sp.add_argument("--out", help="output root (default: $CAPSLAB_OUTPUT or ./runs)")
        sp.add_argument("--run-dir", help="exact run directory instead of a timestamped one")
        sp.add_argument("--seeds", help="comma-separated seed list overriding the config")
        sp.add_argument("--steps", type=int, help="training steps overriding the config")
        sp.add_argument("--workers", type=int, help="parallel seed workers")

    t = sub.add_parser("train", help="train every seed of one config")
    run_opts(t)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="ablation sweep over vanilla/temporal/spatial/caps")
    run_opts(s)
    s.add_argument("--modes", help=f"comma-separated subset of {','.join(MODES)}")
    s.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("spectrum", help="amplitude spectrum and Sm of an action log")
    sp.add_argument("log", help="trajectory CSV with action_* columns")
    sp.add_argument("--fs", type=float, required=True, help="sampling rate in Hz")
    sp.add_argument("--out", help="output directory (default: next to the log)")
    sp.add_argument("--window", choices=["hann"], help="optional analysis window")
    sp.set_defaults(func=cmd_spectrum)

    r = sub.add_parser("report", help="aggregate persisted results of a run or sweep")
    r.add_argument("run_dir")
    r.add_argument("--baseline", default="vanilla")
    r.add_argument("--json", action="store_true", help="print JSON instead of the table")
    r.add_argument("--write", action="store_true", help="rewrite report.json/report.txt")
    r.set_defaults(func=cmd_report)

    sc = sub.add_parser("schema", help="print the experiment config JSON schema")
    sc.set_defaults(func=cmd_schema)

    tf = sub.add_parser("tune-filters", help="tune output filters on the reference P controller")
    tf.add_argument("--bound", type=float, default=0.05, help="overshoot bound (fraction of the step)")
    tf.add_argument("--gain", type=float, default=1.0)
    tf.set_defaults(func=cmd_tune_filters)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParseError, MetricError) as exc:
        print(f"capslab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
