"""Command line entry point: ``ota generate | run | sweep | report``.

Exit codes: 0 success, 2 validation failure (bad query, spec or config),
3 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ota.harness import (
    ExperimentConfig,
    RunReport,
    SyntheticSpec,
    generate_traffic,
    replay,
    sweep,
    write_report,
)
from ota.model import write_query_log

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3

log = logging.getLogger("ota")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=default(None),
                        help="override the seed from the spec/config file")
    parser.add_argument("--threads", type=int, default=default(1),
                        help="worker threads for stateless allocators")
    parser.add_argument("--log-level", default=default("WARNING"),
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ota", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic query log (JSONL)")
    _global_flags(p, suppress=True)
    p.add_argument("--spec", required=True, help="SyntheticSpec JSON file")
    p.add_argument("--out", required=True)

    for name, help_ in (("run", "replay one experiment"),
                        ("sweep", "replay the cross product of parameter grids")):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--out", help="report CSV (defaults to the config's output)")

    p = sub.add_parser("report", help="convert a report CSV")
    _global_flags(p, suppress=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--format", choices=["csv", "json", "plot-data"], default="csv")
    p.add_argument("--out", help="write here instead of stdout")
    return parser


def _cmd_generate(args) -> int:
    with open(args.spec) as fh:
        spec = SyntheticSpec.from_dict(json.load(fh))
    if args.seed is not None:
        spec = SyntheticSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    with open(args.out, "w") as fh:
        n = write_query_log(generate_traffic(spec), fh)
    log.info("wrote %d queries to %s", n, args.out)
    return EXIT_OK


def _cmd_replay(args, fn) -> int:
    config = ExperimentConfig.load(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    out = args.out or config.output
    if out is None:
        raise ValueError("no output path: pass --out or set 'output' in the config")
    report = fn(config, threads=max(1, args.threads))
    write_report(report, out)
    log.info("wrote %d rows to %s", len(report.rows), out)
    return EXIT_OK


def _cmd_report(args) -> int:
    with open(args.inp, newline="") as fh:
        report = RunReport.read_csv(fh)
    if args.format == "csv":
        text = report.to_csv()
    elif args.format == "json":
        text = report.to_json() + "\n"
    else:
        text = json.dumps(report.plot_data(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "run":
            return _cmd_replay(args, replay)
        if args.command == "sweep":
            return _cmd_replay(args, sweep)
        return _cmd_report(args)
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO
    except (ValueError, KeyError, TypeError) as exc:
        log.error("validation failure: %s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
