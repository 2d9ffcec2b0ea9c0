"""Report assembly and the text / JSON / SARIF renderers."""

from __future__ import annotations

import json
from typing import Optional

from . import __version__
from .config import config_to_dict
from .detectors import LEVEL_NAMES, list_rules
from .maturity import MaturityReport
from .model import AnalysisConfig, Finding, TestSuiteModel

TOOL_NAME = "tddlint"
SARIF_SCHEMA = "https://json.schemastore.org/sarif-2.1.0.json"


def build_report(suites: list[TestSuiteModel], findings: dict[int, list[Finding]],
                 maturity: MaturityReport, config: AnalysisConfig) -> dict:
    """*findings* maps the index of each suite in *suites* to its sorted findings."""
    order = sorted(range(len(suites)), key=lambda i: (suites[i].source_path, suites[i].name, suites[i].line))
    return {
        "tool": {"name": TOOL_NAME, "version": __version__},
        "config": config_to_dict(config),
        "suites": [
            {
                "file": suites[i].source_path,
                "name": suites[i].name,
                "test_count": len(suites[i].tests),
                "findings": [f.to_dict() for f in findings[i]],
            }
            for i in order
        ],
        "maturity": maturity.to_dict(),
    }


def report_findings(report: dict) -> list[dict]:
    return [f for s in report.get("suites", []) for f in s["findings"]]


def render_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


class _Style:
    def __init__(self, enabled: bool):
        self.enabled = enabled

    def __call__(self, text: str, code: str) -> str:
        return f"\x1b[{code}m{text}\x1b[0m" if self.enabled else text


def format_finding_line(f: dict, style: Optional[_Style] = None) -> str:
    style = style or _Style(False)
    loc = f"{f['location']['file']}:{f['location']['line']}"
    who = f["suite"] + (f"::{f['test']}" if f["test"] else "")
    tag = style(f"L{f['level']} {f['rule_id']}", "33")
    return f"{loc}: [{tag}] {who}: {f['message']}"


def render_text(report: dict, color: bool = False) -> str:
    style = _Style(color)
    lines = [f"{TOOL_NAME} {report['tool']['version']}"]
    for f in report_findings(report):
        lines.append(format_finding_line(f, style))
    if "maturity" in report:
        mr = report["maturity"]
        counts = " ".join(f"L{i}={n}" for i, n in enumerate(mr["findings_per_level"], start=1))
        lines.append(style(
            f"maturity: level {mr['level']}/4, score {mr['score']}/100 "
            f"({mr['test_count']} tests; {counts})", "1"))
    hist = report.get("history")
    if hist:
        metrics = hist["metrics"]
        lines.append("delivery metrics:")
        for key in sorted(k for k in metrics if k != "window"):
            value = metrics[key]
            lines.append(f"  {key}: {'n/a' if value is None else value}")
    return "\n".join(lines) + "\n"


def render_sarif(report: dict) -> str:
    rules = list_rules()
    index = {r.rule_id: i for i, r in enumerate(rules)}
    results = []
    for f in report_findings(report):
        results.append({
            "ruleId": f["rule_id"],
            "ruleIndex": index[f["rule_id"]],
            "level": "warning",
            "message": {"text": f["message"]},
            "locations": [{
                "physicalLocation": {
                    "artifactLocation": {"uri": f["location"]["file"]},
                    "region": {"startLine": max(1, f["location"]["line"])},
                },
                "logicalLocations": [{
                    "fullyQualifiedName": f["suite"] + (f"::{f['test']}" if f["test"] else ""),
                }],
            }],
            "properties": {
                "tddLevel": f["level"],
                "suite": f["suite"],
                "test": f["test"],
                "evidence": f["evidence"],
            },
        })
    run = {
        "tool": {
            "driver": {
                "name": TOOL_NAME,
                "version": report["tool"]["version"],
                "rules": [
                    {
                        "id": r.rule_id,
                        "name": r.title,
                        "shortDescription": {"text": r.title},
                        "fullDescription": {"text": r.trigger},
                        "properties": {"tddLevel": r.level, "levelName": LEVEL_NAMES[r.level],
                                       "mode": r.mode},
                    }
                    for r in rules
                ],
            }
        },
        "results": results,
    }
    if "maturity" in report:
        run["properties"] = {"maturity": report["maturity"]}
    doc = {"$schema": SARIF_SCHEMA, "version": "2.1.0", "runs": [run]}
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def render(report: dict, fmt: str, color: bool = False) -> str:
    if fmt == "json":
        return render_json(report)
    if fmt == "sarif":
        return render_sarif(report)
    return render_text(report, color=color)
