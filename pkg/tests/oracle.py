"""Brute-force re-implementation of the static rules over the JSON IR.

Deliberately shares no code with ``tddlint.detectors``: it reads plain dicts
produced by ``dump_ir`` and recomputes every rule by direct rescans, so a
bug in the IR classes or detector helpers cannot hide in both places.
Result: a Counter of ``(rule_id, suite_name, test_name_or_None)``.
"""

from collections import Counter


def flat(stmts):
    out, stack = [], list(reversed(stmts))
    while stack:
        s = stack.pop()
        out.append(s)
        if s["kind"] == "CatchBlock":
            stack.extend(reversed(s["body"]))
    return out


def subject(suite):
    if suite.get("subject_hint"):
        return suite["subject_hint"]
    n = suite["name"]
    for tok in ("Tests", "Test", "Spec"):
        if n.endswith(tok) and n[: -len(tok)].rstrip("_"):
            return n[: -len(tok)].rstrip("_")
    for tok in ("_tests", "_test", "_spec"):
        if n.endswith(tok) and n[: -len(tok)].rstrip("_"):
            return n[: -len(tok)].rstrip("_")
    for tok in ("Tests", "Test", "Spec"):
        rest = n[len(tok):]
        if n.startswith(tok) and rest and (rest[0] == "_" and rest[1:] or rest[0].isupper()):
            return rest.lstrip("_")
    for tok in ("tests_", "test_", "spec_"):
        if n.startswith(tok) and n[len(tok):].lstrip("_"):
            return n[len(tok):].lstrip("_")
    return n


def kinds(stmts, kind, **match):
    return [s for s in flat(stmts) if s["kind"] == kind and all(s.get(k) == v for k, v in match.items())]


def enumerated(name, min_len):
    low = name.lower()
    if low.startswith("test"):
        digits = low[4:]
        if digits.startswith("_"):
            digits = digits[1:]
        if digits and digits.isdigit() and digits.isascii():
            return True
    return len(name) < min_len


def type_of(var, env):
    return env.get(var, var)


def bind(env, s):
    if s["kind"] in ("NewObject", "MockNew"):
        env[s["var"]] = s["type_name"]


def oracle_findings(suite, th, enabled, k):
    """*th* is a dict of thresholds keyed like ``tddlint.model.Thresholds`` fields."""
    hits = set()
    tests = suite["tests"]
    setup, teardown = suite["setup"], suite["teardown"]
    subj = subject(suite)

    def add(rule, test):
        hits.add((rule, test))

    setup_writes = {s["name"] for s in kinds(setup, "GlobalWrite")}
    writer_idx = {}
    writer_names = {}
    for i, t in enumerate(tests):
        for s in kinds(t["statements"], "GlobalWrite"):
            writer_idx.setdefault(s["name"], set()).add(i)
            writer_names.setdefault(s["name"], set()).add(t["name"])

    if kinds(setup, "Output") or kinds(teardown, "Output"):
        add("loudmouth", None)
    if len(flat(setup)) > th["excessive_setup_max_statements"] or \
            len(kinds(setup, "MockNew")) > th["excessive_setup_max_mocks"]:
        add("excessive-setup", None)
    env = {}
    for s in flat(setup):
        bind(env, s)
        private_call = s["kind"] == "Invocation" and s["visibility"] == "private"
        if (s["kind"] == "PrivateAccess" or private_call) and type_of(s["receiver"], env) != subj:
            add("stranger", None)

    teardown_released = {s["id"] for s in kinds(teardown, "ResourceRelease")}
    total_ms = 0
    for i, t in enumerate(tests):
        name = t["name"]
        body = flat(t["statements"])
        by_kind = Counter(s["kind"] for s in body)

        if any(s["kind"] == "OsAccess" and s["api"] != "env" for s in body):
            add("operating-system-evangelist", name)
        for s in body:
            if (s["kind"] == "FsAccess" and s["path"][:1] == "/") \
                    or (s["kind"] == "OsAccess" and s["api"] == "env") \
                    or (s["kind"] == "NetAccess" and ("localhost" in s["endpoint"] or "127.0.0.1" in s["endpoint"])):
                add("local-hero", name)
        if enumerated(name, th["enumerator_min_name_length"]):
            add("enumerator", name)
        if by_kind["Assertion"] > th["free_ride_max_assertions"]:
            add("free-ride", name)

        if "explicit_order" in t:
            add("sequencer", name)
        for s in kinds(t["statements"], "GlobalRead"):
            g = s["name"]
            if g not in writer_idx:
                continue
            if g not in setup_writes and all(j < i for j in writer_idx[g]):
                add("sequencer", name)
            if writer_names[g] - {name}:
                add("peeping-tom", name)

        if kinds(t["statements"], "Assertion", assert_kind="deep", target_class="production"):
            add("nitpicker", name)

        n_query = sum(1 for s in body if (s["kind"] == "Invocation" and s["call_kind"] in ("accessor", "query"))
                      or (s["kind"] == "DbAccess" and s["op"] == "query"))
        n_behave = sum(1 for s in body if (s["kind"] == "Invocation" and s["call_kind"] == "behavior")
                       or (s["kind"] == "DbAccess" and s["op"] == "exec"))
        if by_kind["Assertion"] >= 1 and n_query >= 1 and n_behave == 0:
            add("dodger", name)

        if by_kind["Sleep"] or by_kind["TimeRead"] or kinds(t["statements"], "AsyncWait", synchronized=False):
            add("liar", name)
        if by_kind["Output"]:
            add("loudmouth", name)

        env = {}
        for s in flat(setup):
            bind(env, s)
        written = set(setup_writes)
        peeked = set()
        for s in body:
            bind(env, s)
            if s["kind"] == "GlobalWrite":
                written.add(s["name"])
            if s["kind"] == "GlobalRead" and s["name"] not in written:
                add("hidden-dependency", name)
            private_call = s["kind"] == "Invocation" and s["visibility"] == "private"
            if s["kind"] == "PrivateAccess" or private_call:
                owner = type_of(s["receiver"], env)
                if owner != subj:
                    add("stranger", name)
                elif s["kind"] == "PrivateAccess":
                    add("inspector", name)
            if s["kind"] == "PrivateAccess":
                peeked.add(s["receiver"] + ("." + s["member"] if s.get("member") else ""))
            if s["kind"] == "Assertion" and s["target_ref"] in peeked:
                add("inspector", name)

        if kinds(t["statements"], "CatchBlock", disposition="swallow"):
            add("greedy-catcher", name)
        if by_kind["Assertion"] == 0 and not t["expects_exception"] and by_kind["Invocation"] >= 1:
            add("secret-catcher", name)
        if len(body) > th["giant_max_statements"]:
            add("giant", name)

        n_double = len(kinds(t["statements"], "Assertion", target_class="double"))
        n_prod = len(kinds(t["statements"], "Assertion", target_class="production"))
        if n_double >= 1 and n_double > n_prod:
            add("mockery", name)

        released = teardown_released | {s["id"] for s in kinds(t["statements"], "ResourceRelease")}
        if any(s["id"] not in released for s in kinds(t["statements"], "ResourceCreate")):
            add("generous-leftovers", name)

        slept = sum(s["ms"] for s in kinds(t["statements"], "Sleep"))
        ms = max(slept, t.get("duration_ms", 0))
        total_ms += ms
        if ms > th["slow_poke_test_ms"]:
            add("slow-poke", name)

    if total_ms > th["slow_poke_suite_ms"]:
        add("slow-poke", None)

    hits = {(r, t) for r, t in hits if enabled is None or r in enabled}
    if enabled is None or "the-one" in enabled:
        for t in tests:
            distinct = {r for r, tn in hits if tn == t["name"]}
            if len(distinct) >= k:
                hits.add(("the-one", t["name"]))
    return Counter((r, suite["name"], t) for r, t in hits)
