"""The anti-pattern rule catalog.

Every rule is a pure function ``(suite, config) -> list[Finding]`` over the
IR. Rules register themselves with :func:`_rule`; :func:`list_rules`
exposes the descriptors and :func:`analyze_suite` runs the enabled set.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from . import model as m
from .model import AnalysisConfig, Finding, TestCase, TestSuiteModel, infer_subject, walk

LEVEL_NAMES = {1: "Level I", 2: "Level II", 3: "Level III", 4: "Level IV"}


class UnknownRuleError(KeyError):
    pass


@dataclass(frozen=True)
class RuleDescriptor:
    rule_id: str
    level: int
    title: str
    mode: str  # static | dynamic | hybrid
    trigger: str
    defaults: tuple[tuple[str, int], ...] = ()


RuleFn = Callable[[TestSuiteModel, AnalysisConfig], list[Finding]]

_REGISTRY: dict[str, tuple[RuleDescriptor, Optional[RuleFn]]] = {}


def _rule(rule_id: str, level: int, title: str, trigger: str, mode: str = "static",
          defaults: tuple[tuple[str, int], ...] = ()):
    def register(fn: Optional[RuleFn]):
        _REGISTRY[rule_id] = (RuleDescriptor(rule_id, level, title, mode, trigger, defaults), fn)
        return fn
    return register


def list_rules() -> list[RuleDescriptor]:
    return sorted((d for d, _ in _REGISTRY.values()), key=lambda d: (d.level, d.rule_id))


def describe(rule_id: str) -> RuleDescriptor:
    try:
        return _REGISTRY[rule_id][0]
    except KeyError:
        raise UnknownRuleError(rule_id) from None


def rule_level(rule_id: str) -> int:
    return describe(rule_id).level


# ---------------------------------------------------------------- helpers

def _finding(rule_id: str, suite: TestSuiteModel, test: Optional[TestCase], line: int,
             message: str, **evidence) -> Finding:
    return Finding(
        rule_id=rule_id,
        level=rule_level(rule_id),
        suite=suite.name,
        test=test.name if test else None,
        file=suite.source_path,
        line=line,
        message=message,
        evidence=tuple(sorted((k, str(v)) for k, v in evidence.items())),
    )


def _first_hit(test: TestCase, pred) -> Optional[m.Statement]:
    return next((s for s in walk(test.statements) if pred(s)), None)


def _per_test(rule_id: str, suite: TestSuiteModel, pred, message: str) -> list[Finding]:
    out = []
    for test in suite.tests:
        hits = [s for s in walk(test.statements) if pred(s)]
        if hits:
            out.append(_finding(rule_id, suite, test, hits[0].line, message,
                                count=len(hits), kinds=",".join(sorted({h.kind for h in hits}))))
    return out


def _count(statements, cls) -> int:
    return sum(1 for s in walk(statements) if isinstance(s, cls))


def _scan_types(prelude, statements):
    """Yield ``(stmt, types)`` where *types* maps variables introduced so far to type names."""
    types: dict[str, str] = {}
    for stmt in walk(prelude):
        if isinstance(stmt, (m.NewObject, m.MockNew)):
            types[stmt.var] = stmt.type_name
    for stmt in walk(statements):
        if isinstance(stmt, (m.NewObject, m.MockNew)):
            types[stmt.var] = stmt.type_name
        yield stmt, types


def _is_private_reach(stmt) -> bool:
    return isinstance(stmt, m.PrivateAccess) or (
        isinstance(stmt, m.Invocation) and stmt.visibility == "private"
    )


# ---------------------------------------------------------------- Level I

@_rule("operating-system-evangelist", 1, "The Operating System Evangelist",
       "test touches the platform or spawns a process (os platform / os exec)")
def _os_evangelist(suite, config):
    return _per_test("operating-system-evangelist", suite,
                     lambda s: isinstance(s, m.OsAccess) and s.api in ("platform", "exec"),
                     "test depends on the operating system")


def _is_local(stmt) -> bool:
    if isinstance(stmt, m.FsAccess):
        return stmt.absolute
    if isinstance(stmt, m.OsAccess):
        return stmt.api == "env"
    if isinstance(stmt, m.NetAccess):
        return "localhost" in stmt.endpoint or "127.0.0.1" in stmt.endpoint
    return False


@_rule("local-hero", 1, "The Local Hero",
       "absolute file path, environment variable, or localhost endpoint")
def _local_hero(suite, config):
    return _per_test("local-hero", suite, _is_local,
                     "test depends on the local machine's environment")


_ENUMERATED = re.compile(r"^test_?[0-9]+$", re.IGNORECASE)


@_rule("enumerator", 1, "The Enumerator",
       "test name like test1/test_2, or shorter than the minimum length",
       defaults=(("min_name_length", 4),))
def _enumerator(suite, config):
    min_len = config.thresholds.enumerator_min_name_length
    out = []
    for test in suite.tests:
        if _ENUMERATED.match(test.name) or len(test.name) < min_len:
            out.append(_finding("enumerator", suite, test, test.line,
                                f"test name {test.name!r} says nothing about behavior",
                                name=test.name))
    return out


@_rule("free-ride", 1, "The Free Ride", "more assertions in one test than the threshold",
       defaults=(("max_assertions", 3),))
def _free_ride(suite, config):
    limit = config.thresholds.free_ride_max_assertions
    out = []
    for test in suite.tests:
        asserts = [s for s in walk(test.statements) if isinstance(s, m.Assertion)]
        if len(asserts) > limit:
            out.append(_finding("free-ride", suite, test, asserts[limit].line,
                                f"{len(asserts)} assertions in one test (max {limit})",
                                assertion_count=len(asserts), threshold=limit))
    return out


@_rule("sequencer", 1, "The Sequencer",
       "explicit test order, or reading a global written only by earlier tests")
def _sequencer(suite, config):
    setup_writes = {s.name for s in walk(suite.setup) if isinstance(s, m.GlobalWrite)}
    writers: dict[str, set[int]] = {}
    for test in suite.tests:
        for s in walk(test.statements):
            if isinstance(s, m.GlobalWrite):
                writers.setdefault(s.name, set()).add(test.order_index)
    out = []
    for test in suite.tests:
        if test.explicit_order is not None:
            out.append(_finding("sequencer", suite, test, test.line,
                                f"test pinned to position {test.explicit_order}",
                                explicit_order=test.explicit_order))
            continue
        for s in walk(test.statements):
            if not isinstance(s, m.GlobalRead) or s.name in setup_writes:
                continue
            w = writers.get(s.name)
            if w and max(w) < test.order_index:
                out.append(_finding("sequencer", suite, test, s.line,
                                    f"reads global {s.name!r} written only by earlier tests",
                                    **{"global": s.name}))
                break
    return out


@_rule("nitpicker", 1, "The Nitpicker", "deep equality assertion on a production object")
def _nitpicker(suite, config):
    return _per_test("nitpicker", suite,
                     lambda s: isinstance(s, m.Assertion) and s.assert_kind == "deep"
                     and s.target_class == "production",
                     "compares an entire object instead of the relevant properties")


@_rule("dodger", 1, "The Dodger",
       "asserts only after accessor/query calls (db queries included), never a behavior call")
def _dodger(suite, config):
    out = []
    for test in suite.tests:
        stmts = list(walk(test.statements))
        asserts = sum(isinstance(s, m.Assertion) for s in stmts)
        queries = [s for s in stmts
                   if (isinstance(s, m.Invocation) and s.call_kind != "behavior")
                   or (isinstance(s, m.DbAccess) and s.op == "query")]
        behaviors = sum(
            (isinstance(s, m.Invocation) and s.call_kind == "behavior")
            or (isinstance(s, m.DbAccess) and s.op == "exec")
            for s in stmts
        )
        if asserts and queries and not behaviors:
            out.append(_finding("dodger", suite, test, queries[0].line,
                                "exercises only simple accessors or queries",
                                query_calls=len(queries)))
    return out


@_rule("liar", 1, "The Liar", "sleep, wall-clock read, or unsynchronized await")
def _liar(suite, config):
    return _per_test("liar", suite,
                     lambda s: isinstance(s, (m.Sleep, m.TimeRead))
                     or (isinstance(s, m.AsyncWait) and not s.synchronized),
                     "test outcome depends on timing")


@_rule("loudmouth", 1, "The Loudmouth", "prints or logs from setup, teardown, or a test")
def _loudmouth(suite, config):
    out = []
    noisy = [s for s in walk(suite.setup + suite.teardown) if isinstance(s, m.Output)]
    if noisy:
        out.append(_finding("loudmouth", suite, None, min(s.line for s in noisy),
                            "fixture code writes to the test output", count=len(noisy)))
    out += _per_test("loudmouth", suite, lambda s: isinstance(s, m.Output),
                     "test writes to the test output")
    return out


# ---------------------------------------------------------------- Level II

# Observable only from run history; see tddlint.history.
_rule("success-against-all-odds", 2, "Success Against All Odds",
      "the first recorded run of a test passed", mode="dynamic")(None)


@_rule("stranger", 2, "The Stranger",
       "private access into a type other than the subject, in setup or a test")
def _stranger(suite, config):
    subject = infer_subject(suite)
    out = []

    def foreign(stmts, prelude):
        for stmt, types in _scan_types(prelude, stmts):
            if _is_private_reach(stmt):
                owner = types.get(stmt.receiver, stmt.receiver)
                if owner != subject:
                    return stmt, owner
        return None

    hit = foreign(suite.setup, ())
    if hit:
        out.append(_finding("stranger", suite, None, hit[0].line,
                            f"setup reaches into {hit[1]}, not the subject {subject}",
                            receiver_type=hit[1], subject=subject))
    for test in suite.tests:
        hit = foreign(test.statements, suite.setup)
        if hit:
            out.append(_finding("stranger", suite, test, hit[0].line,
                                f"reaches into {hit[1]}, not the subject {subject}",
                                receiver_type=hit[1], subject=subject))
    return out


@_rule("hidden-dependency", 2, "Hidden Dependency",
       "reads a global not written in setup or earlier in the same test")
def _hidden_dependency(suite, config):
    setup_writes = {s.name for s in walk(suite.setup) if isinstance(s, m.GlobalWrite)}
    out = []
    for test in suite.tests:
        written = set(setup_writes)
        for s in walk(test.statements):
            if isinstance(s, m.GlobalWrite):
                written.add(s.name)
            elif isinstance(s, m.GlobalRead) and s.name not in written:
                out.append(_finding("hidden-dependency", suite, test, s.line,
                                    f"depends on global {s.name!r} it never sets up",
                                    **{"global": s.name}))
                break
    return out


@_rule("greedy-catcher", 2, "The Greedy Catcher", "a catch block that swallows the exception")
def _greedy_catcher(suite, config):
    return _per_test("greedy-catcher", suite,
                     lambda s: isinstance(s, m.CatchBlock) and s.disposition == "swallow",
                     "swallows an exception so the test passes")


@_rule("peeping-tom", 2, "The Peeping Tom",
       "a global written by one test and read by another test of the suite")
def _peeping_tom(suite, config):
    writers: dict[str, set[str]] = {}
    for test in suite.tests:
        for s in walk(test.statements):
            if isinstance(s, m.GlobalWrite):
                writers.setdefault(s.name, set()).add(test.name)
    out = []
    for test in suite.tests:
        for s in walk(test.statements):
            if isinstance(s, m.GlobalRead) and writers.get(s.name, set()) - {test.name}:
                others = sorted(writers[s.name] - {test.name})
                out.append(_finding("peeping-tom", suite, test, s.line,
                                    f"shares global {s.name!r} with {', '.join(others)}",
                                    writers=",".join(others), **{"global": s.name}))
                break
    return out


@_rule("secret-catcher", 2, "The Secret Catcher",
       "calls code but asserts nothing and declares no expected exception")
def _secret_catcher(suite, config):
    out = []
    for test in suite.tests:
        if test.expects_exception or _count(test.statements, m.Assertion):
            continue
        call = _first_hit(test, lambda s: isinstance(s, m.Invocation))
        if call:
            out.append(_finding("secret-catcher", suite, test, call.line,
                                "passes only because nothing throws",
                                invocation_count=_count(test.statements, m.Invocation)))
    return out


# ---------------------------------------------------------------- Level III

@_rule("giant", 3, "The Giant", "more statements in one test than the threshold",
       defaults=(("max_statements", 30),))
def _giant(suite, config):
    limit = config.thresholds.giant_max_statements
    out = []
    for test in suite.tests:
        n = sum(1 for _ in walk(test.statements))
        if n > limit:
            out.append(_finding("giant", suite, test, test.line,
                                f"{n} statements in one test (max {limit})",
                                statement_count=n, threshold=limit))
    return out


@_rule("excessive-setup", 3, "Excessive Setup",
       "setup longer than the threshold or creating too many mocks",
       defaults=(("max_statements", 15), ("max_mocks", 5)))
def _excessive_setup(suite, config):
    th = config.thresholds
    n = sum(1 for _ in walk(suite.setup))
    mocks = _count(suite.setup, m.MockNew)
    if n > th.excessive_setup_max_statements or mocks > th.excessive_setup_max_mocks:
        line = suite.setup[0].line if suite.setup else suite.line
        return [_finding("excessive-setup", suite, None, line,
                         f"setup has {n} statements and {mocks} mocks",
                         statement_count=n, mock_count=mocks)]
    return []


@_rule("inspector", 3, "The Inspector",
       "private access on the subject, or asserting on a privately read value")
def _inspector(suite, config):
    subject = infer_subject(suite)
    out = []
    for test in suite.tests:
        peeked: set[str] = set()
        for stmt, types in _scan_types(suite.setup, test.statements):
            if isinstance(stmt, m.PrivateAccess):
                peeked.add(stmt.ref)
                if types.get(stmt.receiver, stmt.receiver) == subject:
                    out.append(_finding("inspector", suite, test, stmt.line,
                                        f"reads private state of {subject}",
                                        ref=stmt.ref, via=stmt.via))
                    break
            elif isinstance(stmt, m.Assertion) and stmt.target_ref in peeked:
                out.append(_finding("inspector", suite, test, stmt.line,
                                    f"asserts on privately read {stmt.target_ref}",
                                    ref=stmt.target_ref))
                break
    return out


# ---------------------------------------------------------------- Level IV

@_rule("mockery", 4, "The Mockery", "more assertions on test doubles than on production objects")
def _mockery(suite, config):
    out = []
    for test in suite.tests:
        classes = Counter(s.target_class for s in walk(test.statements) if isinstance(s, m.Assertion))
        if classes["double"] and classes["double"] > classes["production"]:
            first = _first_hit(test, lambda s: isinstance(s, m.Assertion) and s.target_class == "double")
            out.append(_finding("mockery", suite, test, first.line,
                                "tests the test double rather than production code",
                                double_assertions=classes["double"],
                                production_assertions=classes["production"]))
    return out


@_rule("the-one", 4, "The One", "a test flagged by at least K other rules",
       defaults=(("k", 3),))
def _the_one(suite, config):
    return _the_one_from(suite, config, _run_others(suite, config))


def _the_one_from(suite, config, others: Iterable[Finding]) -> list[Finding]:
    per_test: dict[str, set[str]] = {}
    for f in others:
        if f.test is not None and f.rule_id != "the-one":
            per_test.setdefault(f.test, set()).add(f.rule_id)
    out = []
    for test in suite.tests:
        rules = per_test.get(test.name, set())
        if len(rules) >= config.the_one_k:
            out.append(_finding("the-one", suite, test, test.line,
                                f"{len(rules)} anti-patterns in one test",
                                rule_count=len(rules), rules=",".join(sorted(rules))))
    return out


@_rule("generous-leftovers", 4, "Generous Leftovers",
       "resource created in a test and released neither there nor in teardown")
def _generous_leftovers(suite, config):
    torn_down = {s.id for s in walk(suite.teardown) if isinstance(s, m.ResourceRelease)}
    out = []
    for test in suite.tests:
        stmts = list(walk(test.statements))
        released = torn_down | {s.id for s in stmts if isinstance(s, m.ResourceRelease)}
        leaked = [s for s in stmts if isinstance(s, m.ResourceCreate) and s.id not in released]
        if leaked:
            ids = sorted({s.id for s in leaked})
            out.append(_finding("generous-leftovers", suite, test, leaked[0].line,
                                f"never cleans up {', '.join(ids)}", resources=",".join(ids)))
    return out


def _test_duration(test: TestCase) -> tuple[int, str]:
    slept = sum(s.ms for s in walk(test.statements) if isinstance(s, m.Sleep))
    declared = test.declared_duration_ms
    if declared is not None and declared >= slept:
        return declared, "declared"
    return slept, "sleep"


@_rule("slow-poke", 4, "The Slow Poke",
       "test duration (declared, measured, or summed sleeps) over the per-test or suite budget",
       mode="hybrid", defaults=(("test_ms", 1000), ("suite_ms", 60000)))
def _slow_poke(suite, config):
    th = config.thresholds
    out = []
    total = 0
    for test in suite.tests:
        ms, source = _test_duration(test)
        total += ms
        if ms > th.slow_poke_test_ms:
            out.append(_finding("slow-poke", suite, test, test.line,
                                f"takes {ms} ms (max {th.slow_poke_test_ms})",
                                duration_ms=ms, source=source, threshold=th.slow_poke_test_ms))
    if total > th.slow_poke_suite_ms:
        out.append(_finding("slow-poke", suite, None, suite.line,
                            f"suite takes {total} ms (max {th.slow_poke_suite_ms})",
                            total_ms=total, threshold=th.slow_poke_suite_ms))
    return out


# ---------------------------------------------------------------- drivers

def _run_others(suite: TestSuiteModel, config: AnalysisConfig) -> list[Finding]:
    out = []
    for rule_id, (_, fn) in _REGISTRY.items():
        if fn is not None and rule_id != "the-one" and config.is_enabled(rule_id):
            out += fn(suite, config)
    return out


def evaluate_rule(rule_id: str, suite: TestSuiteModel, config: AnalysisConfig) -> list[Finding]:
    """Findings of one rule on one suite, sorted; dynamic-only rules yield nothing."""
    _, fn = _REGISTRY.get(rule_id, (None, None))
    if rule_id not in _REGISTRY:
        raise UnknownRuleError(rule_id)
    if fn is None:
        return []
    return sorted(fn(suite, config), key=lambda f: f.sort_key)


def analyze_suite(suite: TestSuiteModel, config: AnalysisConfig) -> list[Finding]:
    findings = _run_others(suite, config)
    if config.is_enabled("the-one"):
        findings += _the_one_from(suite, config, findings)
    return sorted(dict.fromkeys(findings), key=lambda f: f.sort_key)
