"""Command-line entry point.

Exit codes: 0 success (maturity at or above the gate), 1 below the gate,
2 unreadable/unparsable input, 3 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import ConfigError, config_to_dict, load_config
from .detectors import LEVEL_NAMES, analyze_suite, list_rules
from .history import (LogError, detect_slow_poke, detect_success_against_all_odds,
                      four_key_metrics, load_history, parse_ts, trend)
from .ingest import ParseError, SchemaError, load_path
from .maturity import assess
from .model import AnalysisConfig, Finding
from .report import TOOL_NAME, build_report, render, render_json

EXIT_OK, EXIT_GATE, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2, 3


class InputError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"{TOOL_NAME}: {msg}", file=sys.stderr)


def _use_color(stream) -> bool:
    return "NO_COLOR" not in os.environ and hasattr(stream, "isatty") and stream.isatty()


def expand_paths(paths: Sequence[str]) -> list[str]:
    """Files as given; directories contribute their ``.xt`` and ``.json`` files."""
    out = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            out += [str(f) for f in sorted(path.rglob("*")) if f.suffix in (".xt", ".json") and f.is_file()]
        elif path.is_file():
            out.append(p)
        else:
            raise InputError(f"{p}: no such file or directory")
    return sorted(dict.fromkeys(out))


def _read_config(path: Optional[str]) -> AnalysisConfig:
    if path is None:
        return AnalysisConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from None
    return load_config(text)


def _load(path: str):
    try:
        return load_path(path)
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from None
    except SchemaError as exc:
        raise InputError(f"{path}: {exc}") from None


def analyze_paths(paths: Sequence[str], config: AnalysisConfig, jobs: int = 1) -> dict:
    """Parse and analyze *paths*; the report is identical for every *jobs* value."""
    files = expand_paths(paths)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        parsed = list(pool.map(_load, files))
        suites = [s for group in parsed for s in group]
        per_suite = list(pool.map(lambda s: analyze_suite(s, config), suites))
    findings = [f for group in per_suite for f in group]
    maturity = assess(findings, sum(len(s.tests) for s in suites), config)
    return build_report(suites, dict(enumerate(per_suite)), maturity, config)


def cmd_analyze(args) -> int:
    try:
        config = _read_config(args.config)
        if args.gate is not None:
            config = replace(config, gate=args.gate)
    except (ConfigError, ValueError) as exc:
        _err(f"invalid config: {exc}")
        return EXIT_CONFIG
    try:
        report = analyze_paths(args.paths, config, jobs=args.jobs)
    except (ParseError, InputError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    sys.stdout.write(render(report, args.format, color=_use_color(sys.stdout)))
    return EXIT_OK if report["maturity"]["level"] >= config.gate else EXIT_GATE


def history_report(text: str, source: str, config: AnalysisConfig,
                   since: Optional[str] = None, until: Optional[str] = None) -> dict:
    history = load_history(text, source)
    window = None
    if since or until:
        if history.events:
            lo, hi = history.events[0].ts, history.events[-1].ts
        else:
            lo = hi = parse_ts(since or until)
        window = (parse_ts(since) if since else lo, parse_ts(until) if until else hi)
    findings = detect_success_against_all_odds(history) + detect_slow_poke(history, config)
    findings.sort(key=lambda f: f.sort_key)
    return {
        "tool": {"name": TOOL_NAME, "version": __version__},
        "config": config_to_dict(config),
        "suites": _group(findings),
        "history": {
            "source": source,
            "events": len(history.events),
            "metrics": four_key_metrics(history, window).to_dict(),
        },
    }


def _group(findings: list[Finding]) -> list[dict]:
    groups: dict[tuple[str, str], list[Finding]] = {}
    for f in findings:
        groups.setdefault((f.file, f.suite), []).append(f)
    return [
        {"file": file, "name": suite, "findings": [f.to_dict() for f in fs]}
        for (file, suite), fs in sorted(groups.items())
    ]


def cmd_history(args) -> int:
    try:
        config = _read_config(args.config)
    except ConfigError as exc:
        _err(f"invalid config: {exc}")
        return EXIT_CONFIG
    try:
        text = Path(args.log).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        _err(f"{args.log}: {exc}")
        return EXIT_INPUT
    try:
        report = history_report(text, args.log, config, args.since, args.until)
    except LogError as exc:
        _err(f"{args.log}: {exc}")
        return EXIT_INPUT
    except ValueError as exc:
        _err(f"invalid window: {exc}")
        return EXIT_INPUT
    sys.stdout.write(render(report, args.format, color=_use_color(sys.stdout)))
    return EXIT_OK


def cmd_rules(args) -> int:
    rules = list_rules()
    for level in (1, 2, 3, 4):
        print(LEVEL_NAMES[level])
        for r in (r for r in rules if r.level == level):
            defaults = ", ".join(f"{k}={v}" for k, v in r.defaults)
            suffix = f" [{defaults}]" if defaults else ""
            print(f"  {r.rule_id:<28} {r.mode:<8} {r.title}: {r.trigger}{suffix}")
    return EXIT_OK


def _findings_from_report(doc: dict) -> tuple[list[Finding], int]:
    findings = []
    for suite in doc.get("suites", []):
        for f in suite["findings"]:
            findings.append(Finding(
                rule_id=f["rule_id"], level=f["level"], suite=f["suite"], test=f["test"],
                file=f["location"]["file"], line=f["location"]["line"], message=f["message"],
                evidence=tuple(sorted(f["evidence"].items())),
            ))
    return findings, doc.get("maturity", {}).get("test_count", 0)


def cmd_trend(args) -> int:
    snapshots = []
    for ts, path in args.snapshot:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
            findings, tests = _findings_from_report(doc)
            snapshots.append((parse_ts(ts), findings, tests))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            _err(f"{path}: {exc}")
            return EXIT_INPUT
    try:
        series = trend(snapshots)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_INPUT
    sys.stdout.write(render_json({"tool": {"name": TOOL_NAME, "version": __version__},
                                  "trend": series.to_dict()}))
    return EXIT_OK


def _gate(value: str) -> int:
    n = int(value)
    if not 0 <= n <= 4:
        raise argparse.ArgumentTypeError("gate must be in 0..4")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL_NAME, description="Detect TDD anti-patterns and rate TDD maturity.")
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="analyze xTest (.xt) or IR (.json) files")
    p.add_argument("paths", nargs="+")
    p.add_argument("--config")
    p.add_argument("--format", choices=("text", "json", "sarif"), default="text")
    p.add_argument("--gate", type=_gate, help="minimum maturity level (0-4) for exit code 0")
    p.add_argument("--jobs", type=int, default=1, help="parallel parse/analyze workers")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("history", help="dynamic findings and delivery metrics from a run log")
    p.add_argument("log")
    p.add_argument("--since")
    p.add_argument("--until")
    p.add_argument("--config")
    p.add_argument("--format", choices=("text", "json"), default="json")
    p.set_defaults(func=cmd_history)

    p = sub.add_parser("rules", help="list the rule catalog")
    p.set_defaults(func=cmd_rules)

    p = sub.add_parser("trend", help="per-level finding slopes across saved JSON reports")
    p.add_argument("--snapshot", nargs=2, action="append", metavar=("TIMESTAMP", "REPORT"), required=True)
    p.set_defaults(func=cmd_trend)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
