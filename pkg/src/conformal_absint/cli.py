"""Command line entry point: ``confab run | oracle-check | demo``.

Exit codes: 0 on success, 1 when any program row (or oracle suite) failed,
2 on a configuration error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .bench import ConfigError, ExperimentConfig, compare_abstract_modes, emit_report, report_to_text, run_suite
from .demo import fig1_walkthrough, fig7_walkthrough, format_fig1, format_fig7
from .oracles import property_suites, soundness_suite

FORMATS = ("json", "csv", "text")
SUFFIX = {"json": "json", "csv": "csv", "text": "txt"}


def _cmd_run(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.trials is not None:
            cfg.trials = args.trials
        cfg.validate()
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    report = compare_abstract_modes(cfg) if args.compare_modes else run_suite(cfg)
    formats = FORMATS if args.format == "all" else (args.format,)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        stem = Path(args.config).stem if args.config else f"{cfg.suite}"
        for fmt in formats:
            path = out / f"{stem}.{SUFFIX[fmt]}"
            emit_report(report, fmt, path)
            print(f"wrote {path}")
    if not args.out or args.format == "text":
        print(report_to_text(report))
    for r in report.rows:
        if r.failure:
            print(f"row failed: {r.program} / {r.semantics}: {r.failure}", file=sys.stderr)
    return 1 if report.failed else 0


def _cmd_oracle_check(args) -> int:
    failed = False
    suites = [("soundness", lambda: soundness_suite(args.n, args.seed)), ("properties", lambda: property_suites(args.n, args.seed))]
    for label, fn in suites:
        if args.only and args.only != label:
            continue
        t0 = time.perf_counter()
        results = fn()
        for r in results:
            status = "ok" if r.ok else "FAIL"
            print(f"{status:4}  {r.name:<40} {r.cases:>8} cases  {r.failures} failures")
            for ex in r.examples[:3]:
                print(f"      {ex}")
            failed |= not r.ok
        print(f"{label}: {time.perf_counter() - t0:.1f}s")
    return 1 if failed else 0


def _cmd_demo(args) -> int:
    if args.which in ("fig1", "all"):
        print("counting query over detections")
        print(format_fig1(fig1_walkthrough()))
    if args.which == "all":
        print()
    if args.which in ("fig7", "all"):
        print("while loop with mocked conformal outputs")
        print(format_fig7(fig7_walkthrough()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="confab", description="Conformal abstract interpretation benchmarks")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmark configuration")
    run.add_argument("--config", help="JSON experiment config (defaults when omitted)")
    run.add_argument("--out", help="directory for report files")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--trials", type=int, help="override the number of trials")
    run.add_argument("--format", choices=FORMATS + ("all",), default="all")
    run.add_argument("--compare-modes", action="store_true", help="interval vs set mode on the digit suite")
    run.set_defaults(fn=_cmd_run)

    oc = sub.add_parser("oracle-check", help="brute-force soundness and lattice property suites")
    oc.add_argument("--n", type=int, default=10_000, help="cases per suite")
    oc.add_argument("--seed", type=int, default=0)
    oc.add_argument("--only", choices=("soundness", "properties"))
    oc.set_defaults(fn=_cmd_oracle_check)

    demo = sub.add_parser("demo", help="golden walkthroughs")
    demo.add_argument("which", nargs="?", choices=("fig1", "fig7", "all"), default="all")
    demo.set_defaults(fn=_cmd_demo)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
