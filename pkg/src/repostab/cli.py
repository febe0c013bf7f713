"""Command-line interface.

Exit codes: 0 stable, 2 analysed but unstable, 1 other error, 64 usage error,
66 input file missing or unreadable, 77 fetch authentication failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields, replace
from typing import Sequence

from . import __version__
from .fetch import AuthFailed, FetchError, FetchSpec, RateLimited, fetch_repository
from .ingest import (
    EmptyInput,
    IngestError,
    InputUnreadable,
    bot_filter,
    emit_jsonl,
    exclude_actors,
    read_events,
)
from .metrics import SpanTooShort, WindowTooShort
from .model import LogError, StabilityConfig, parse_timestamp, validate_log
from .report import analyze, emit_csv, emit_json, render_summary
from .simulate import SCENARIOS, UnknownScenario, scenario, simulate

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNSTABLE = 2
EXIT_USAGE = 64
EXIT_NOINPUT = 66
EXIT_AUTH = 77

CONFIG_KEYS = tuple(f.name for f in fields(StabilityConfig))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0 or value != value or value == float("inf"):
        raise argparse.ArgumentTypeError(f"must be a positive number: {text!r}")
    return value


def _fraction(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 <= value < 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1): {text!r}")
    return value


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {text!r}")
    return value


def _timestamp(text: str) -> int:
    try:
        return parse_timestamp(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an RFC3339 timestamp: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="repostab", description="Repository stability analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="compute metrics, criteria and CSI for an event history")
    a.add_argument("--input", required=True, help="event JSONL file, git log file or forge export directory")
    a.add_argument("--format", choices=("jsonl", "gitlog", "forge"), default="jsonl")
    a.add_argument("--window-days", type=_positive)
    a.add_argument("--stride-days", type=_positive)
    a.add_argument("--violation-tolerance", type=_fraction, help="fraction of windows allowed to violate a criterion")
    a.add_argument("--config", help="key=value file overriding the default configuration")
    a.add_argument("--out", choices=("csv", "json", "summary"), default="summary")
    a.add_argument("--out-file", help="write the report here instead of stdout")
    a.add_argument("--exclude-bots", action="store_true", help="drop activity by bot accounts")

    s = sub.add_parser("simulate", help="write a synthetic event history as JSONL")
    s.add_argument("--scenario", required=True, choices=[n.replace("_", "-") for n in SCENARIOS])
    s.add_argument("--days", type=_nonneg_int, default=365)
    s.add_argument("--seed", type=_nonneg_int, default=0)
    s.add_argument("--out", default="-", help="output path, '-' for stdout")

    f = sub.add_parser("fetch", help="download a repository's history from a forge API")
    f.add_argument("--owner", required=True)
    f.add_argument("--repo", required=True)
    f.add_argument("--since", type=_timestamp)
    f.add_argument("--token-env", help="name of the environment variable holding the API token")
    f.add_argument("--out", required=True, help="output directory")
    f.add_argument("--page-size", type=int, default=100)
    f.add_argument("--base-url", default=None, help=argparse.SUPPRESS)
    f.add_argument("--wait-on-rate-limit", action="store_true")

    v = sub.add_parser("validate", help="check referential integrity of an event JSONL file")
    v.add_argument("--input", required=True)
    return parser


def load_config_file(path: str) -> dict[str, object]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values: dict[str, object] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputUnreadable(f"{path}: {exc}") from exc
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or not key:
            raise UsageError(f"{path}:{n}: expected key=value")
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        if key == "dampening_mode":
            values[key] = value
            continue
        try:
            values[key] = float(value)
        except ValueError:
            raise UsageError(f"{path}:{n}: {key} is not a number: {value!r}") from None
    return values


def effective_config(args) -> StabilityConfig:
    values = load_config_file(args.config) if args.config else {}
    overrides = {
        "window_days": args.window_days,
        "stride_days": args.stride_days,
        "violation_tolerance": args.violation_tolerance,
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return StabilityConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_analyze(args) -> int:
    config = effective_config(args)
    if not os.path.exists(args.input):
        raise InputUnreadable(f"{args.input}: no such file or directory")
    events, report = read_events(args.input, args.format)
    for where, reason in report.warnings:
        print(f"warning: {args.input} {where}: {reason}", file=sys.stderr)
    if args.exclude_bots:
        events = exclude_actors(events, bot_filter())
    log = validate_log(events)
    provenance = {"input": args.input, "format": args.format, "exclude_bots": bool(args.exclude_bots)}
    bundle = analyze(log, config, provenance)
    render = {"csv": emit_csv, "json": emit_json, "summary": render_summary}[args.out]
    _write(render(bundle), args.out_file)
    latest_ok = bundle.csi.entries[-1].stable
    return EXIT_OK if bundle.verdict.overall and latest_ok else EXIT_UNSTABLE


def cmd_simulate(args) -> int:
    if args.days < 1:
        raise UsageError("--days must be at least 1")
    try:
        config = scenario(args.scenario, days=args.days, seed=args.seed)
    except UnknownScenario as exc:
        raise UsageError(str(exc)) from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _write(emit_jsonl(simulate(config).events), args.out)
    return EXIT_OK


def cmd_fetch(args, transport=None, sleep=None) -> int:
    token = None
    if args.token_env:
        token = os.environ.get(args.token_env)
        if not token:
            raise UsageError(f"environment variable {args.token_env} is not set")
    try:
        spec = FetchSpec(
            args.owner,
            args.repo,
            since=args.since,
            auth_token=token,
            page_size=args.page_size,
            **({"base_url": args.base_url} if args.base_url else {}),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    options = {"wait_on_rate_limit": args.wait_on_rate_limit}
    if transport is not None:
        options["transport"] = transport
    if sleep is not None:
        options["sleep"] = sleep
    export = fetch_repository(spec, args.out, **options)
    counts = ", ".join(f"{len(v)} {k}" for k, v in export.items())
    print(f"fetched {counts} into {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    events, report = read_events(args.input, "jsonl")
    for where, reason in report.warnings:
        print(f"warning: {where}: {reason}", file=sys.stderr)
    log = validate_log(events)
    print(f"{len(log)} events valid; {report.events_dropped} malformed lines dropped")
    return EXIT_ERROR if report.events_dropped else EXIT_OK


def run(argv: Sequence[str] | None = None, *, transport=None, sleep=None) -> int:
    """Execute one command and return its exit code (never raises SystemExit
    except through argparse's own --help/--version)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.command == "analyze":
            return cmd_analyze(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "fetch":
            return cmd_fetch(args, transport=transport, sleep=sleep)
        return cmd_validate(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"repostab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputUnreadable, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"repostab: cannot read input: {exc}", file=sys.stderr)
        return EXIT_NOINPUT
    except AuthFailed as exc:
        print(f"repostab: authentication failed: {exc}", file=sys.stderr)
        return EXIT_AUTH
    except RateLimited as exc:
        print(f"repostab: {exc}; progress saved, rerun to resume", file=sys.stderr)
        return EXIT_ERROR
    except (EmptyInput, IngestError, LogError, SpanTooShort, WindowTooShort, FetchError) as exc:
        print(f"repostab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"repostab: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
