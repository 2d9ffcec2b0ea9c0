from pathlib import Path

import pytest

from tddlint.detectors import analyze_suite, evaluate_rule
from tddlint.ingest import parse_dsl
from tddlint.model import AnalysisConfig

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"


def suite_of(src, path="t.xt"):
    (suite,) = parse_dsl(src, path)
    return suite


def fired(src, rule_id=None, config=None):
    """Set of (rule_id, test) pairs, optionally for a single rule."""
    config = config or AnalysisConfig()
    suite = suite_of(src)
    found = evaluate_rule(rule_id, suite, config) if rule_id else analyze_suite(suite, config)
    return {(f.rule_id, f.test) for f in found}


@pytest.fixture
def fixtures_dir():
    return FIXTURES
