"""Command-line entry point: ``hierkick {train,eval,ablate,replay,plot-data}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .coach import Variant
from .config import PROFILES, load_config
from .harness import (DEFAULT_TRIALS, MissingCheckpointError, TrainedPolicy, comparison_table, emit_plot_data,
                      load_reports, run_ablation_suite, run_campaign, run_trial, save_reports)
from .train import METRICS_NAME, load_run, read_metrics, train


def _cmd_train(args) -> int:
    cfg = load_config(args.profile, args.config)
    train(cfg, Variant(args.variant), args.out_dir, iterations=args.iterations, seed=args.seed)
    print(f"checkpoint written to {Path(args.out_dir) / 'checkpoint.bin'}")
    return 0


def _cmd_eval(args) -> int:
    ck, cfg = load_run(args.checkpoint)
    policy = TrainedPolicy(ck.params, not args.deterministic)
    report = run_campaign(policy, ck.variant, args.trials, args.seed_base, cfg)
    print(comparison_table([report]))
    if args.out:
        save_reports([report], args.out)
    return 0


def _reward_logs(ckpt_dir: Path) -> dict[str, list[dict]]:
    logs = {}
    for v in Variant:
        path = ckpt_dir / v.value / METRICS_NAME
        if path.exists():
            logs[v.value] = read_metrics(path)
    return logs


def _cmd_ablate(args) -> int:
    ckpt_dir = Path(args.checkpoint_dir)
    try:
        reports = run_ablation_suite(ckpt_dir, args.trials, args.seed_base)
    except MissingCheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out_dir or ckpt_dir / "ablation")
    save_reports(reports, out / "reports")
    emit_plot_data(reports, _reward_logs(ckpt_dir), out / "plot_data")
    print(comparison_table(reports))
    print(f"reports and plot data written under {out}")
    return 0


def _cmd_replay(args) -> int:
    ck, cfg = load_run(args.checkpoint)
    result = run_trial(TrainedPolicy(ck.params, not args.deterministic), ck.variant, args.seed, cfg)
    print(json.dumps(asdict(result)))
    return 0


def _cmd_plot_data(args) -> int:
    reports = load_reports(args.reports_dir)
    logs = _reward_logs(Path(args.logs_dir)) if args.logs_dir else {}
    for path in emit_plot_data(reports, logs, args.out_dir):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hierkick", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log every training iteration")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one variant")
    p.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.HIERKICK.value)
    p.add_argument("--profile", choices=PROFILES, default="small")
    p.add_argument("--config", help="YAML file merged over the profile")
    p.add_argument("--seed", type=int, help="master seed (default from config)")
    p.add_argument("--iterations", type=int, help="PPO iterations (default from config)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluation campaign for one checkpoint")
    p.add_argument("--checkpoint", required=True, help="run directory or checkpoint file")
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--deterministic", action="store_true", help="use the action mean instead of sampling")
    p.add_argument("--out", help="directory for the JSON report")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="evaluate all four variants on shared seeds")
    p.add_argument("--checkpoint-dir", required=True, help="directory with one run per variant")
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("replay", help="re-run one trial seed")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("plot-data", help="write plot data from saved reports")
    p.add_argument("--reports-dir", required=True)
    p.add_argument("--logs-dir", help="checkpoint directory holding per-variant metrics logs")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_plot_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
