"""Run-history analysis: dynamic anti-patterns, lifetime trends, delivery metrics.

The input is a newline-delimited JSON run log, one event per line::

    {"ts": "2024-01-01T10:00:00Z", "kind": "test_run", "suite": "CartTest",
     "test": "adds_item", "outcome": "fail", "duration_ms": 12}
    {"ts": "...", "kind": "commit", "id": "c1"}
    {"ts": "...", "kind": "deploy", "id": "d1", "outcome": "success", "commits": ["c1"]}
    {"ts": "...", "kind": "restore", "id": "d1"}
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from itertools import groupby
from typing import Iterable, Optional, Sequence, Union

from .detectors import rule_level
from .model import AnalysisConfig, Finding

DAY = timedelta(days=1)


class LogError(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass(frozen=True)
class TestRun:
    ts: datetime
    suite: str
    test: str
    outcome: str  # pass | fail
    duration_ms: int
    line: int = 0

    __test__ = False


@dataclass(frozen=True)
class Commit:
    ts: datetime
    id: str
    line: int = 0


@dataclass(frozen=True)
class Deploy:
    ts: datetime
    id: str
    outcome: str  # success | failure
    commits: tuple[str, ...] = ()
    line: int = 0


@dataclass(frozen=True)
class Restore:
    ts: datetime
    id: str
    line: int = 0


Event = Union[TestRun, Commit, Deploy, Restore]


@dataclass(frozen=True)
class SessionHistory:
    events: tuple[Event, ...] = ()
    source: str = "<history>"

    def __post_init__(self) -> None:
        # a restore needs a failure strictly earlier, so same-timestamp order never matters
        failed: dict[str, datetime] = {}
        prev = None
        for i, ev in enumerate(self.events):
            where = ev.line or i + 1
            if ev.ts.tzinfo is None:
                raise LogError(where, "timestamp must carry a UTC offset")
            if prev is not None and ev.ts < prev:
                raise LogError(where, "timestamps must be non-decreasing")
            prev = ev.ts
            if isinstance(ev, Deploy) and ev.outcome == "failure":
                failed.setdefault(ev.id, ev.ts)
            elif isinstance(ev, Restore) and not (ev.id in failed and failed[ev.id] < ev.ts):
                raise LogError(where, f"restore references no earlier failed deploy {ev.id!r}")

    def of(self, cls) -> list:
        return [e for e in self.events if isinstance(e, cls)]


# ---------------------------------------------------------------- run-log I/O

def parse_ts(text: str) -> datetime:
    if not isinstance(text, str):
        raise ValueError("timestamp must be a string")
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError(f"timestamp {text!r} has no UTC offset")
    return ts.astimezone(timezone.utc)


def format_ts(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


_FIELDS = {
    "test_run": ({"suite", "test", "outcome", "duration_ms"}, set()),
    "commit": ({"id"}, set()),
    "deploy": ({"id", "outcome"}, {"commits"}),
    "restore": ({"id"}, set()),
}


def _event_from(obj, line: int) -> Event:
    if not isinstance(obj, dict):
        raise LogError(line, "expected a JSON object")
    kind = obj.get("kind")
    if kind not in _FIELDS:
        raise LogError(line, f"unknown or missing kind {kind!r}")
    required, optional = _FIELDS[kind]
    required = required | {"ts", "kind"}
    for key in sorted(obj):
        if key not in required and key not in optional:
            raise LogError(line, f"unknown field {key!r} for {kind}")
    for key in sorted(required):
        if key not in obj:
            raise LogError(line, f"missing field {key!r} for {kind}")
    try:
        ts = parse_ts(obj["ts"])
    except ValueError as exc:
        raise LogError(line, str(exc)) from None

    def text(key):
        v = obj[key]
        if not isinstance(v, str) or not v:
            raise LogError(line, f"field {key!r} must be a non-empty string")
        return v

    def choice(key, options):
        v = text(key)
        if v not in options:
            raise LogError(line, f"field {key!r} must be one of {', '.join(options)}")
        return v

    if kind == "test_run":
        dur = obj["duration_ms"]
        if isinstance(dur, bool) or not isinstance(dur, int) or dur < 0:
            raise LogError(line, "field 'duration_ms' must be an integer >= 0")
        return TestRun(ts, text("suite"), text("test"), choice("outcome", ("pass", "fail")), dur, line)
    if kind == "commit":
        return Commit(ts, text("id"), line)
    if kind == "deploy":
        commits = obj.get("commits", [])
        if not isinstance(commits, list) or not all(isinstance(c, str) for c in commits):
            raise LogError(line, "field 'commits' must be a list of strings")
        return Deploy(ts, text("id"), choice("outcome", ("success", "failure")), tuple(commits), line)
    return Restore(ts, text("id"), line)


def load_history(text: str, source: str = "<history>") -> SessionHistory:
    """Parse a run log; blank lines are skipped, anything malformed raises :class:`LogError`."""
    events = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise LogError(lineno, f"invalid JSON ({exc.msg})") from None
        events.append(_event_from(obj, lineno))
    return SessionHistory(tuple(events), source)


def dump_event(ev: Event) -> str:
    obj: dict = {"ts": format_ts(ev.ts)}
    if isinstance(ev, TestRun):
        obj.update(kind="test_run", suite=ev.suite, test=ev.test, outcome=ev.outcome,
                   duration_ms=ev.duration_ms)
    elif isinstance(ev, Commit):
        obj.update(kind="commit", id=ev.id)
    elif isinstance(ev, Deploy):
        obj.update(kind="deploy", id=ev.id, outcome=ev.outcome)
        if ev.commits:
            obj["commits"] = list(ev.commits)
    else:
        obj.update(kind="restore", id=ev.id)
    return json.dumps(obj, sort_keys=True)


# ---------------------------------------------------------------- dynamic rules

def _finding(rule_id, history, suite, test, line, message, **evidence) -> Finding:
    return Finding(
        rule_id=rule_id,
        level=rule_level(rule_id),
        suite=suite,
        test=test,
        file=history.source,
        line=line,
        message=message,
        evidence=tuple(sorted((k, str(v)) for k, v in evidence.items())),
    )


def _runs_by_test(history: SessionHistory) -> dict[tuple[str, str], list[tuple[int, TestRun]]]:
    runs: dict[tuple[str, str], list[tuple[int, TestRun]]] = {}
    for i, ev in enumerate(history.events):
        if isinstance(ev, TestRun):
            runs.setdefault((ev.suite, ev.test), []).append((ev.line or i + 1, ev))
    return runs


def detect_success_against_all_odds(history: SessionHistory) -> list[Finding]:
    """Flag tests whose earliest recorded run already passed."""
    out = []
    for (suite, test), runs in _runs_by_test(history).items():
        # events are time-ordered and ties keep input order, so runs[0] is the earliest
        line, first = runs[0]
        if first.outcome == "pass":
            out.append(_finding("success-against-all-odds", history, suite, test, line,
                                "first recorded run passed; the test never failed first",
                                first_run=format_ts(first.ts)))
    return sorted(out, key=lambda f: f.sort_key)


def _fmt_ms(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def detect_slow_poke(history: SessionHistory, config: AnalysisConfig) -> list[Finding]:
    th = config.thresholds
    out = []
    suite_total: dict[str, float] = {}
    suite_line: dict[str, int] = {}
    for (suite, test), runs in _runs_by_test(history).items():
        med = statistics.median(r.duration_ms for _, r in runs)
        suite_total[suite] = suite_total.get(suite, 0) + med
        suite_line.setdefault(suite, runs[0][0])
        if med > th.slow_poke_test_ms:
            out.append(_finding("slow-poke", history, suite, test, runs[0][0],
                                f"median run takes {_fmt_ms(med)} ms (max {th.slow_poke_test_ms})",
                                median=_fmt_ms(med), runs=len(runs), threshold=th.slow_poke_test_ms))
    for suite, total in suite_total.items():
        if total > th.slow_poke_suite_ms:
            out.append(_finding("slow-poke", history, suite, None, suite_line[suite],
                                f"suite medians sum to {_fmt_ms(total)} ms (max {th.slow_poke_suite_ms})",
                                total_ms=_fmt_ms(total), threshold=th.slow_poke_suite_ms))
    return sorted(out, key=lambda f: f.sort_key)


# ---------------------------------------------------------------- trend

@dataclass(frozen=True)
class Snapshot:
    ts: datetime
    findings_per_level: tuple[int, int, int, int]
    test_count: int


@dataclass(frozen=True)
class TrendSeries:
    snapshots: tuple[Snapshot, ...]
    slopes: tuple[float, float, float, float]  # findings per day, per level

    def to_dict(self) -> dict:
        return {
            "snapshots": [
                {"ts": format_ts(s.ts), "findings_per_level": list(s.findings_per_level),
                 "test_count": s.test_count}
                for s in self.snapshots
            ],
            "slopes_per_day": list(self.slopes),
        }


def least_squares_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    n = len(xs)
    if n < 2:
        return 0.0
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    if sxx == 0:
        return 0.0
    return math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sxx


def trend(snapshots: Iterable[tuple[datetime, Iterable[Finding], int]]) -> TrendSeries:
    snaps = []
    for ts, findings, test_count in snapshots:
        counts = [0, 0, 0, 0]
        for f in findings:
            counts[f.level - 1] += 1
        snaps.append(Snapshot(ts, tuple(counts), test_count))
    if not snaps:
        raise ValueError("trend needs at least one snapshot")
    if any(b.ts < a.ts for a, b in zip(snaps, snaps[1:])):
        raise ValueError("snapshots must be time-ordered")
    origin = snaps[0].ts
    xs = [(s.ts - origin) / DAY for s in snaps]
    slopes = tuple(least_squares_slope(xs, [s.findings_per_level[i] for s in snaps]) for i in range(4))
    return TrendSeries(tuple(snaps), slopes)


# ---------------------------------------------------------------- four key metrics

@dataclass(frozen=True)
class DeliveryMetrics:
    window_start: Optional[datetime]
    window_end: Optional[datetime]
    deploys: int
    successful_deploys: int
    failed_deploys: int
    deployment_frequency: Optional[float]  # deploys per day, failed ones included
    lead_time_p50: Optional[timedelta]
    change_failure_rate: Optional[float]
    mttr: Optional[timedelta]

    def to_dict(self) -> dict:
        def secs(td):
            return None if td is None else td.total_seconds()

        return {
            "window": {
                "start": None if self.window_start is None else format_ts(self.window_start),
                "end": None if self.window_end is None else format_ts(self.window_end),
            },
            "deploys": self.deploys,
            "successful_deploys": self.successful_deploys,
            "failed_deploys": self.failed_deploys,
            "deployment_frequency_per_day": self.deployment_frequency,
            "lead_time_p50_seconds": secs(self.lead_time_p50),
            "change_failure_rate": self.change_failure_rate,
            "mttr_seconds": secs(self.mttr),
        }


def lower_median(values: Sequence):
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def four_key_metrics(history: SessionHistory,
                     window: Optional[tuple[datetime, datetime]] = None) -> DeliveryMetrics:
    """Delivery metrics over the closed interval ``[start, end]``.

    Without a window the span of the history is used. A metric whose
    denominator is zero comes back as ``None``.
    """
    if window is None:
        if not history.events:
            return DeliveryMetrics(None, None, 0, 0, 0, None, None, None, None)
        window = (history.events[0].ts, history.events[-1].ts)
    start, end = window
    if start > end:
        raise ValueError("window start must not be after its end")

    def inside(ev) -> bool:
        return start <= ev.ts <= end

    deploys = [d for d in history.of(Deploy) if inside(d)]
    ok = [d for d in deploys if d.outcome == "success"]
    failed = [d for d in deploys if d.outcome == "failure"]
    days = (end - start) / DAY

    commit_ts: dict[str, datetime] = {}
    for c in history.of(Commit):
        commit_ts.setdefault(c.id, c.ts)
    leads = [d.ts - commit_ts[cid] for d in ok for cid in d.commits
             if cid in commit_ts and commit_ts[cid] <= d.ts]

    # a restore closes the most recent still-open failure of the same deploy id
    # that happened strictly before it; restores of a timestamp go before its failures
    open_failures: dict[str, Deploy] = {}
    restores: list[timedelta] = []
    for _, group in groupby(history.events, key=lambda e: e.ts):
        group = list(group)
        for ev in group:
            if isinstance(ev, Restore) and ev.id in open_failures:
                fd = open_failures.pop(ev.id)
                if inside(fd):
                    restores.append(ev.ts - fd.ts)
        for ev in group:
            if isinstance(ev, Deploy) and ev.outcome == "failure":
                open_failures[ev.id] = ev

    return DeliveryMetrics(
        window_start=start,
        window_end=end,
        deploys=len(deploys),
        successful_deploys=len(ok),
        failed_deploys=len(failed),
        deployment_frequency=len(deploys) / days if days > 0 else None,
        lead_time_p50=lower_median(leads) if leads else None,
        change_failure_rate=len(failed) / len(deploys) if deploys else None,
        mttr=sum(restores, timedelta()) / len(restores) if restores else None,
    )
