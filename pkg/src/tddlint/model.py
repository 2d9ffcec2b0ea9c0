"""Normalized representation of test code shared by every analysis.

Detectors never see source text; they see :class:`TestSuiteModel` values
built by :mod:`tddlint.ingest`. All types here are frozen and hold tuples,
so a parsed model can be shared freely between threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields
from typing import Iterator, Optional

CALL_KINDS = ("behavior", "accessor", "query")
VISIBILITIES = ("public", "private")
ASSERT_KINDS = ("eq", "deep", "bool", "throws", "mock_verify")
TARGET_CLASSES = ("production", "double")
CHANNELS = ("stdout", "log")
FS_OPS = ("read", "write")
OS_APIS = ("env", "platform", "exec")
DB_OPS = ("query", "exec")
VIA = ("direct", "reflection")
DISPOSITIONS = ("swallow", "assert", "rethrow")
RESOURCE_KINDS = ("file", "db", "global")


@dataclass(frozen=True, kw_only=True)
class Statement:
    line: int
    column: int = 1

    @property
    def kind(self) -> str:
        return type(self).__name__


@dataclass(frozen=True, kw_only=True)
class NewObject(Statement):
    var: str
    type_name: str


@dataclass(frozen=True, kw_only=True)
class Invocation(Statement):
    receiver: str
    member: Optional[str] = None
    call_kind: str = "behavior"
    visibility: str = "public"


@dataclass(frozen=True, kw_only=True)
class Assertion(Statement):
    assert_kind: str
    target_ref: str
    target_class: str = "production"


@dataclass(frozen=True, kw_only=True)
class Output(Statement):
    channel: str
    text: str


@dataclass(frozen=True, kw_only=True)
class Sleep(Statement):
    ms: int


@dataclass(frozen=True, kw_only=True)
class TimeRead(Statement):
    pass


@dataclass(frozen=True, kw_only=True)
class AsyncWait(Statement):
    synchronized: bool = False


@dataclass(frozen=True, kw_only=True)
class FsAccess(Statement):
    op: str
    path: str
    absolute: bool


@dataclass(frozen=True, kw_only=True)
class OsAccess(Statement):
    api: str
    # variable name for env, command line for exec, None for platform
    arg: Optional[str] = None


@dataclass(frozen=True, kw_only=True)
class NetAccess(Statement):
    endpoint: str


@dataclass(frozen=True, kw_only=True)
class GlobalRead(Statement):
    name: str


@dataclass(frozen=True, kw_only=True)
class GlobalWrite(Statement):
    name: str


@dataclass(frozen=True, kw_only=True)
class DbAccess(Statement):
    op: str
    text: str


@dataclass(frozen=True, kw_only=True)
class MockNew(Statement):
    var: str
    type_name: str


@dataclass(frozen=True, kw_only=True)
class MockStub(Statement):
    var: str
    member: Optional[str] = None


@dataclass(frozen=True, kw_only=True)
class PrivateAccess(Statement):
    receiver: str
    member: Optional[str] = None
    via: str = "direct"

    @property
    def ref(self) -> str:
        return self.receiver if self.member is None else f"{self.receiver}.{self.member}"


@dataclass(frozen=True, kw_only=True)
class CatchBlock(Statement):
    disposition: str
    body: tuple[Statement, ...] = ()


@dataclass(frozen=True, kw_only=True)
class ResourceCreate(Statement):
    res_kind: str
    id: str


@dataclass(frozen=True, kw_only=True)
class ResourceRelease(Statement):
    id: str


STATEMENT_KINDS: dict[str, type[Statement]] = {
    cls.__name__: cls
    for cls in (
        NewObject, Invocation, Assertion, Output, Sleep, TimeRead, AsyncWait,
        FsAccess, OsAccess, NetAccess, GlobalRead, GlobalWrite, DbAccess,
        MockNew, MockStub, PrivateAccess, CatchBlock, ResourceCreate,
        ResourceRelease,
    )
}


def payload_fields(cls: type[Statement]) -> list[str]:
    """Kind-specific field names, excluding the location."""
    return [f.name for f in fields(cls) if f.name not in ("line", "column")]


def walk(statements: tuple[Statement, ...]) -> Iterator[Statement]:
    """Yield statements in source order, descending into catch bodies."""
    for stmt in statements:
        yield stmt
        if isinstance(stmt, CatchBlock):
            yield from walk(stmt.body)


@dataclass(frozen=True)
class TestCase:
    name: str
    order_index: int
    statements: tuple[Statement, ...] = ()
    explicit_order: Optional[int] = None
    expects_exception: bool = False
    declared_duration_ms: Optional[int] = None
    line: int = 1

    __test__ = False  # keep pytest from collecting this class


@dataclass(frozen=True)
class TestSuiteModel:
    name: str
    source_path: str
    tests: tuple[TestCase, ...] = ()
    setup: tuple[Statement, ...] = ()
    teardown: tuple[Statement, ...] = ()
    subject_hint: Optional[str] = None
    line: int = 1

    __test__ = False

    def test_named(self, name: str) -> TestCase:
        for t in self.tests:
            if t.name == name:
                return t
        raise KeyError(name)


@dataclass(frozen=True)
class Thresholds:
    free_ride_max_assertions: int = 3
    giant_max_statements: int = 30
    excessive_setup_max_statements: int = 15
    excessive_setup_max_mocks: int = 5
    slow_poke_test_ms: int = 1000
    slow_poke_suite_ms: int = 60000
    enumerator_min_name_length: int = 4


@dataclass(frozen=True)
class AnalysisConfig:
    thresholds: Thresholds = field(default_factory=Thresholds)
    # None means every registered rule
    enabled: Optional[frozenset[str]] = None
    the_one_k: int = 3
    tolerances: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    weights: tuple[float, float, float, float] = (8, 4, 2, 1)
    gate: int = 0

    def __post_init__(self) -> None:
        for f in fields(self.thresholds):
            if getattr(self.thresholds, f.name) < 0:
                raise ValueError(f"threshold {f.name} must be >= 0")
        if self.the_one_k < 2:
            raise ValueError("the-one multiplicity must be >= 2")
        if len(self.tolerances) != 4 or any(not 0 <= t <= 1 for t in self.tolerances):
            raise ValueError("tolerances must be four values in [0, 1]")
        if len(self.weights) != 4 or any(w <= 0 for w in self.weights):
            raise ValueError("weights must be four positive values")
        if not 0 <= self.gate <= 4:
            raise ValueError("gate must be in 0..4")

    def is_enabled(self, rule_id: str) -> bool:
        return self.enabled is None or rule_id in self.enabled


@dataclass(frozen=True)
class Finding:
    rule_id: str
    level: int
    suite: str
    file: str
    line: int
    message: str
    test: Optional[str] = None
    evidence: tuple[tuple[str, str], ...] = ()

    @property
    def sort_key(self) -> tuple:
        # message/evidence only break ties between otherwise identical keys
        return (self.file, self.suite, self.test or "", self.rule_id, self.line,
                self.message, self.evidence)

    def to_dict(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "level": self.level,
            "suite": self.suite,
            "test": self.test,
            "location": {"file": self.file, "line": self.line},
            "message": self.message,
            "evidence": {k: v for k, v in self.evidence},
        }


_TRAILING = re.compile(r"^(?P<rest>.+?)(?:(?<=[A-Za-z0-9])|_)(?:Tests|Test|Spec)$|^(?P<snake>.+?)_(?:tests|test|spec)$")
_LEADING = re.compile(r"^(?:Tests|Test|Spec)(?:_(?P<a>.+)|(?P<b>[A-Z].*))$|^(?:tests|test|spec)_(?P<c>.+)$")


def infer_subject(suite: TestSuiteModel) -> str:
    """Best guess at the production type a suite exercises.

    An explicit ``subject_hint`` always wins. Otherwise a trailing, then a
    leading ``Test``/``Tests``/``Spec`` token is stripped from the suite
    name (``CartTest`` -> ``Cart``, ``test_cart`` -> ``cart``). Names
    without such a token come back unchanged.
    """
    if suite.subject_hint:
        return suite.subject_hint
    name = suite.name
    m = _TRAILING.match(name)
    if m:
        return (m.group("rest") or m.group("snake")).rstrip("_") or name
    m = _LEADING.match(name)
    if m:
        return (m.group("a") or m.group("b") or m.group("c")).lstrip("_") or name
    return name
