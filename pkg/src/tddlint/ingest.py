"""xTest DSL parser and canonical JSON IR (de)serialization."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from typing import Any, Optional

from . import model as m
from .model import Statement, TestCase, TestSuiteModel

IR_VERSION = 1


class ParseError(Exception):
    def __init__(self, path: str, line: int, column: int, expected: str, found: str):
        self.path = path
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found
        super().__init__(f"{path}:{line}:{column}: expected {expected}, found {found}")


class SchemaError(ValueError):
    """Raised by :func:`load_ir` with a JSON path such as ``$.suites[0].tests``."""

    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------- lexer

@dataclass(frozen=True)
class Token:
    kind: str  # WORD, INT, STRING, PUNCT, EOF
    text: str
    line: int
    column: int

    def describe(self) -> str:
        if self.kind == "EOF":
            return "end of input"
        if self.kind == "STRING":
            return f'"{self.text}"'
        return f"`{self.text}`"


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"[^"\n]*")
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)?(?![A-Za-z0-9_.]))
  | (?P<int>[0-9]+(?![A-Za-z0-9_.]))
  | (?P<punct>[{}\[\],=:])
    """,
    re.VERBOSE,
)


def tokenize(source: str, path: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        mo = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if mo is None:
            ch = source[pos]
            if ch == '"':
                raise ParseError(path, line, col, "closing `\"` on the same line", "unterminated string")
            bad = re.match(r"\S+", source[pos:]).group(0)
            raise ParseError(path, line, col, "a token", f"`{bad}`")
        group = mo.lastgroup
        text = mo.group(group)
        if group == "nl":
            line += 1
            line_start = mo.end()
        elif group == "string":
            tokens.append(Token("STRING", text[1:-1], line, col))
        elif group == "word":
            tokens.append(Token("WORD", text, line, col))
        elif group == "int":
            tokens.append(Token("INT", text, line, col))
        elif group == "punct":
            tokens.append(Token("PUNCT", text, line, col))
        pos = mo.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


# ---------------------------------------------------------------- parser

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class _Parser:
    def __init__(self, tokens: list[Token], path: str):
        self.tokens = tokens
        self.pos = 0
        self.path = path

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def fail(self, expected: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        raise ParseError(self.path, tok.line, tok.column, expected, tok.describe())

    def at(self, *words: str) -> bool:
        return self.tok.kind in ("WORD", "PUNCT") and self.tok.text in words

    def advance(self) -> Token:
        tok = self.tok
        self.pos += 1
        return tok

    def keyword(self, *words: str) -> Token:
        if not self.at(*words):
            self.fail(" or ".join(f"`{w}`" for w in words))
        return self.advance()

    def ident(self, what: str = "identifier") -> Token:
        if self.tok.kind != "WORD" or not _IDENT_RE.match(self.tok.text):
            self.fail(what)
        return self.advance()

    def ref(self) -> tuple[str, Optional[str], Token]:
        if self.tok.kind != "WORD":
            self.fail("reference")
        tok = self.advance()
        base, _, member = tok.text.partition(".")
        return base, member or None, tok

    def integer(self) -> int:
        if self.tok.kind != "INT":
            self.fail("integer")
        return int(self.advance().text)

    def string(self) -> str:
        if self.tok.kind != "STRING":
            self.fail("string")
        return self.advance().text

    # file := suite+
    def parse_file(self) -> list[TestSuiteModel]:
        suites = [self.parse_suite()]
        while self.tok.kind != "EOF":
            suites.append(self.parse_suite())
        return suites

    def parse_suite(self) -> TestSuiteModel:
        start = self.keyword("suite")
        name = self.ident("suite name").text
        self.keyword("{")
        setup: Optional[tuple] = None
        teardown: Optional[tuple] = None
        tests: list[TestCase] = []
        names: set[str] = set()
        while not self.at("}"):
            if self.at("setup"):
                tok = self.advance()
                if setup is not None:
                    self.fail("at most one `setup` block", tok)
                setup = self.block()
            elif self.at("teardown"):
                tok = self.advance()
                if teardown is not None:
                    self.fail("at most one `teardown` block", tok)
                teardown = self.block()
            elif self.at("test"):
                tests.append(self.parse_test(len(tests), names))
            else:
                self.fail("`setup`, `teardown`, `test` or `}`")
        self.advance()
        setup = setup or ()
        tests = [replace(t, statements=_classify(t.statements, _Scope(setup))) for t in tests]
        return TestSuiteModel(
            name=name,
            source_path=self.path,
            tests=tuple(tests),
            setup=_classify(setup, _Scope()),
            teardown=_classify(teardown or (), _Scope(setup)),
            line=start.line,
        )

    def parse_test(self, index: int, names: set) -> TestCase:
        start = self.keyword("test")
        name_tok = self.ident("test name")
        if name_tok.text in names:
            self.fail(f"unique test name (`{name_tok.text}` already defined)", name_tok)
        names.add(name_tok.text)
        attrs: dict[str, Any] = {}
        if self.at("["):
            self.advance()
            while True:
                tok = self.keyword("order", "expects_exception", "duration_ms")
                if tok.text in attrs:
                    self.fail(f"each attribute at most once (`{tok.text}` repeated)", tok)
                if tok.text == "expects_exception":
                    attrs[tok.text] = True
                else:
                    self.keyword("=")
                    attrs[tok.text] = self.integer()
                if self.at(","):
                    self.advance()
                    continue
                self.keyword("]")
                break
        body = self.block()
        return TestCase(
            name=name_tok.text,
            order_index=index,
            statements=body,
            explicit_order=attrs.get("order"),
            expects_exception=attrs.get("expects_exception", False),
            declared_duration_ms=attrs.get("duration_ms"),
            line=start.line,
        )

    def block(self) -> tuple[Statement, ...]:
        self.keyword("{")
        out = []
        while not self.at("}"):
            out.append(self.statement())
        self.advance()
        return tuple(out)

    def same_line(self, start: Token, *words: str) -> bool:
        return self.at(*words) and self.tok.line == start.line

    def statement(self) -> Statement:
        tok = self.tok
        loc = {"line": tok.line, "column": tok.column}
        if tok.kind != "WORD":
            self.fail("statement or `}`")
        word = tok.text
        if word == "new":
            self.advance()
            var = self.ident("variable name").text
            self.keyword(":")
            type_name = self.ident("type name").text
            return m.NewObject(var=var, type_name=type_name, **loc)
        if word == "call":
            self.advance()
            receiver, member, _ = self.ref()
            call_kind = "behavior"
            if self.at("behavior", "accessor", "query"):
                call_kind = self.advance().text
            visibility = "public"
            # `private` on the next line starts a PrivateAccess statement instead
            if self.same_line(tok, "private"):
                self.advance()
                visibility = "private"
            return m.Invocation(receiver=receiver, member=member, call_kind=call_kind,
                                visibility=visibility, **loc)
        if word == "assert":
            self.advance()
            kind = self.keyword("eq", "deep", "bool", "throws").text
            _, _, ref_tok = self.ref()
            # target_class is settled by _classify once the whole suite is known
            return m.Assertion(assert_kind=kind, target_ref=ref_tok.text, **loc)
        if word == "mock":
            self.advance()
            sub = self.keyword("new", "stub", "verify").text
            if sub == "new":
                var = self.ident("variable name").text
                self.keyword(":")
                type_name = self.ident("type name").text
                return m.MockNew(var=var, type_name=type_name, **loc)
            base, member, ref_tok = self.ref()
            if sub == "stub":
                return m.MockStub(var=base, member=member, **loc)
            return m.Assertion(assert_kind="mock_verify", target_ref=ref_tok.text,
                               target_class="double", **loc)
        if word in ("print", "log"):
            self.advance()
            channel = "stdout" if word == "print" else "log"
            return m.Output(channel=channel, text=self.string(), **loc)
        if word == "sleep":
            self.advance()
            return m.Sleep(ms=self.integer(), **loc)
        if word == "time":
            self.advance()
            self.keyword("now")
            return m.TimeRead(**loc)
        if word == "await":
            self.advance()
            synced = False
            if self.at("sync", "nosync"):
                synced = self.advance().text == "sync"
            return m.AsyncWait(synchronized=synced, **loc)
        if word == "fs":
            self.advance()
            op = self.keyword("read", "write").text
            path = self.string()
            return m.FsAccess(op=op, path=path, absolute=path.startswith("/"), **loc)
        if word == "os":
            self.advance()
            api = self.keyword("env", "platform", "exec").text
            arg = None
            if api == "env":
                arg = self.ident("environment variable name").text
            elif api == "exec":
                arg = self.string()
            return m.OsAccess(api=api, arg=arg, **loc)
        if word == "net":
            self.advance()
            self.keyword("call")
            return m.NetAccess(endpoint=self.string(), **loc)
        if word == "global":
            self.advance()
            op = self.keyword("read", "write").text
            name = self.ident("global name").text
            cls = m.GlobalRead if op == "read" else m.GlobalWrite
            return cls(name=name, **loc)
        if word == "db":
            self.advance()
            op = self.keyword("query", "exec").text
            return m.DbAccess(op=op, text=self.string(), **loc)
        if word == "private":
            self.advance()
            receiver, member, _ = self.ref()
            via = "direct"
            if self.at("reflection"):
                self.advance()
                via = "reflection"
            return m.PrivateAccess(receiver=receiver, member=member, via=via, **loc)
        if word == "catch":
            self.advance()
            disposition = self.keyword("swallow", "assert", "rethrow").text
            body = self.block()
            return m.CatchBlock(disposition=disposition, body=body, **loc)
        if word == "resource":
            self.advance()
            op = self.keyword("create", "release").text
            if op == "create":
                res_kind = self.keyword("file", "db", "global").text
                return m.ResourceCreate(res_kind=res_kind, id=self.ident("resource id").text, **loc)
            return m.ResourceRelease(id=self.ident("resource id").text, **loc)
        self.fail("statement or `}`")


class _Scope:
    """Tracks which variables are test doubles, in introduction order."""

    def __init__(self, prelude: tuple = ()) -> None:
        self.doubles: dict[str, bool] = {}
        self.absorb(prelude)

    def bind(self, var: str, is_double: bool) -> None:
        self.doubles[var] = is_double

    def absorb(self, statements) -> None:
        for stmt in m.walk(statements):
            if isinstance(stmt, m.NewObject):
                self.bind(stmt.var, False)
            elif isinstance(stmt, m.MockNew):
                self.bind(stmt.var, True)

    def classify(self, var: str) -> str:
        return "double" if self.doubles.get(var) else "production"


def _classify(statements: tuple, scope: _Scope) -> tuple:
    """Mark assertions on mock-created variables as targeting a double."""
    out = []
    for stmt in statements:
        if isinstance(stmt, m.NewObject):
            scope.bind(stmt.var, False)
        elif isinstance(stmt, m.MockNew):
            scope.bind(stmt.var, True)
        elif isinstance(stmt, m.Assertion) and stmt.assert_kind != "mock_verify":
            base = stmt.target_ref.partition(".")[0]
            stmt = replace(stmt, target_class=scope.classify(base))
        elif isinstance(stmt, m.CatchBlock):
            stmt = replace(stmt, body=_classify(stmt.body, scope))
        out.append(stmt)
    return tuple(out)


def parse_dsl(source: str, path: str = "<string>") -> list[TestSuiteModel]:
    """Parse xTest DSL text into one model per ``suite`` block.

    Raises :class:`ParseError` at the first violation.
    """
    return _Parser(tokenize(source, path), path).parse_file()


# ---------------------------------------------------------------- JSON IR

def _stmt_to_dict(stmt: Statement) -> dict:
    out: dict[str, Any] = {"kind": stmt.kind, "line": stmt.line, "column": stmt.column}
    for name in m.payload_fields(type(stmt)):
        value = getattr(stmt, name)
        if name == "body":
            value = [_stmt_to_dict(s) for s in value]
        out[name] = value
    return out


def _test_to_dict(test: TestCase) -> dict:
    out: dict[str, Any] = {
        "name": test.name,
        "line": test.line,
        "expects_exception": test.expects_exception,
        "statements": [_stmt_to_dict(s) for s in test.statements],
    }
    if test.explicit_order is not None:
        out["explicit_order"] = test.explicit_order
    if test.declared_duration_ms is not None:
        out["duration_ms"] = test.declared_duration_ms
    return out


def suite_to_dict(suite: TestSuiteModel) -> dict:
    out: dict[str, Any] = {
        "name": suite.name,
        "line": suite.line,
        "source_path": suite.source_path,
        "setup": [_stmt_to_dict(s) for s in suite.setup],
        "teardown": [_stmt_to_dict(s) for s in suite.teardown],
        "tests": [_test_to_dict(t) for t in suite.tests],
    }
    if suite.subject_hint is not None:
        out["subject_hint"] = suite.subject_hint
    return out


def dump_ir(suites: list[TestSuiteModel]) -> str:
    """Canonical serialization: sorted keys, compact separators."""
    doc = {"version": IR_VERSION, "suites": [suite_to_dict(s) for s in suites]}
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


# Allowed values for enumerated statement fields.
_ENUMS = {
    "call_kind": m.CALL_KINDS,
    "visibility": m.VISIBILITIES,
    "assert_kind": m.ASSERT_KINDS,
    "target_class": m.TARGET_CLASSES,
    "channel": m.CHANNELS,
    "via": m.VIA,
    "disposition": m.DISPOSITIONS,
    "res_kind": m.RESOURCE_KINDS,
}
_OPS = {"FsAccess": m.FS_OPS, "DbAccess": m.DB_OPS, "OsAccess": m.OS_APIS}
_OPTIONAL_STR = {"member", "arg"}
_BOOLS = {"synchronized", "absolute"}
_INTS = {"ms"}


class _Loader:
    def require(self, obj: dict, key: str, where: str):
        if key not in obj:
            raise SchemaError(f"{where}.{key}", "required field missing")
        return obj[key]

    def obj(self, value, where: str, required: set, optional: set = frozenset()) -> dict:
        if not isinstance(value, dict):
            raise SchemaError(where, "expected object")
        for key in sorted(value):
            if key not in required and key not in optional:
                raise SchemaError(f"{where}.{key}", "unknown field")
        for key in sorted(required):
            self.require(value, key, where)
        return value

    def string(self, value, where: str, ident: bool = False) -> str:
        if not isinstance(value, str):
            raise SchemaError(where, "expected string")
        if ident and not _IDENT_RE.match(value):
            raise SchemaError(where, "expected identifier")
        return value

    def integer(self, value, where: str, minimum: int = 0) -> int:
        if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
            raise SchemaError(where, f"expected integer >= {minimum}")
        return value

    def boolean(self, value, where: str) -> bool:
        if not isinstance(value, bool):
            raise SchemaError(where, "expected boolean")
        return value

    def array(self, value, where: str) -> list:
        if not isinstance(value, list):
            raise SchemaError(where, "expected array")
        return value

    def statement(self, value, where: str) -> Statement:
        if not isinstance(value, dict):
            raise SchemaError(where, "expected object")
        kind = self.string(self.require(value, "kind", where), f"{where}.kind")
        cls = m.STATEMENT_KINDS.get(kind)
        if cls is None:
            raise SchemaError(f"{where}.kind", f"unknown statement kind {kind!r}")
        payload = m.payload_fields(cls)
        optional = {"column"} | {p for p in payload if p in _OPTIONAL_STR}
        required = {"kind", "line"} | (set(payload) - optional)
        self.obj(value, where, required, optional)
        kwargs: dict[str, Any] = {
            "line": self.integer(value["line"], f"{where}.line", 1),
            "column": self.integer(value.get("column", 1), f"{where}.column", 1),
        }
        for name in payload:
            at = f"{where}.{name}"
            if name not in value:
                kwargs[name] = None
                continue
            raw = value[name]
            if name == "body":
                kwargs[name] = tuple(
                    self.statement(s, f"{at}[{i}]") for i, s in enumerate(self.array(raw, at))
                )
            elif name in _BOOLS:
                kwargs[name] = self.boolean(raw, at)
            elif name in _INTS:
                kwargs[name] = self.integer(raw, at)
            elif name in _OPTIONAL_STR:
                kwargs[name] = None if raw is None else self.string(raw, at)
            else:
                text = self.string(raw, at)
                allowed = _ENUMS.get(name) or (_OPS.get(kind) if name in ("op", "api") else None)
                if allowed is not None and text not in allowed:
                    raise SchemaError(at, f"expected one of {', '.join(allowed)}")
                kwargs[name] = text
        return cls(**kwargs)

    def statements(self, raw, where: str) -> tuple[Statement, ...]:
        return tuple(self.statement(s, f"{where}[{i}]") for i, s in enumerate(self.array(raw, where)))

    def test(self, value, where: str, index: int) -> TestCase:
        self.obj(value, where, {"name", "expects_exception", "statements"},
                 {"explicit_order", "duration_ms", "line"})
        order = value.get("explicit_order")
        duration = value.get("duration_ms")
        return TestCase(
            name=self.string(value["name"], f"{where}.name", ident=True),
            order_index=index,
            statements=self.statements(value["statements"], f"{where}.statements"),
            explicit_order=None if order is None else self.integer(order, f"{where}.explicit_order"),
            expects_exception=self.boolean(value["expects_exception"], f"{where}.expects_exception"),
            declared_duration_ms=None if duration is None else self.integer(duration, f"{where}.duration_ms"),
            line=self.integer(value.get("line", 1), f"{where}.line", 1),
        )

    def suite(self, value, where: str) -> TestSuiteModel:
        self.obj(value, where, {"name", "source_path", "setup", "teardown", "tests"},
                 {"subject_hint", "line"})
        tests = []
        seen = set()
        for i, raw in enumerate(self.array(value["tests"], f"{where}.tests")):
            test = self.test(raw, f"{where}.tests[{i}]", i)
            if test.name in seen:
                raise SchemaError(f"{where}.tests[{i}].name", f"duplicate test name {test.name!r}")
            seen.add(test.name)
            tests.append(test)
        hint = value.get("subject_hint")
        return TestSuiteModel(
            name=self.string(value["name"], f"{where}.name", ident=True),
            source_path=self.string(value["source_path"], f"{where}.source_path"),
            tests=tuple(tests),
            setup=self.statements(value["setup"], f"{where}.setup"),
            teardown=self.statements(value["teardown"], f"{where}.teardown"),
            subject_hint=None if hint is None else self.string(hint, f"{where}.subject_hint", ident=True),
            line=self.integer(value.get("line", 1), f"{where}.line", 1),
        )


def load_ir(text: str) -> list[TestSuiteModel]:
    """Inverse of :func:`dump_ir`; unknown fields are rejected."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON ({exc.msg} at line {exc.lineno} column {exc.colno})") from None
    loader = _Loader()
    loader.obj(doc, "$", {"version", "suites"})
    if doc["version"] != IR_VERSION:
        raise SchemaError("$.version", f"unsupported version {doc['version']!r}")
    return [loader.suite(s, f"$.suites[{i}]") for i, s in enumerate(loader.array(doc["suites"], "$.suites"))]


def load_path(path: str) -> list[TestSuiteModel]:
    """Load a ``.json`` IR file or parse anything else as DSL."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".json"):
        return load_ir(text)
    return parse_dsl(text, path)
