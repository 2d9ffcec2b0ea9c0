"""Fold findings into a TDD maturity level (0-4) and a 0-100 score."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .model import AnalysisConfig, Finding

LEVELS = (1, 2, 3, 4)


@dataclass(frozen=True)
class MaturityReport:
    test_count: int
    findings_per_level: tuple[int, int, int, int]
    densities: tuple[float, float, float, float]
    level: int
    score: int

    def to_dict(self) -> dict:
        return {
            "test_count": self.test_count,
            "findings_per_level": list(self.findings_per_level),
            "densities": list(self.densities),
            "level": self.level,
            "score": self.score,
        }


@dataclass(frozen=True)
class MaturityDelta:
    density_deltas: tuple[float, float, float, float]
    level_delta: int
    score_delta: int

    def __neg__(self) -> "MaturityDelta":
        return MaturityDelta(tuple(-d for d in self.density_deltas), -self.level_delta, -self.score_delta)

    def to_dict(self) -> dict:
        return {
            "density_deltas": list(self.density_deltas),
            "level_delta": self.level_delta,
            "score_delta": self.score_delta,
        }


def round_half_away(x: Fraction) -> int:
    q, r = divmod(abs(x), 1)
    n = int(q) + (1 if r >= Fraction(1, 2) else 0)
    return n if x >= 0 else -n


def _exact_densities(counts, test_count: int) -> list[Fraction]:
    denom = max(test_count, 1)
    return [min(Fraction(c, denom), Fraction(1)) for c in counts]


def assess(findings: Iterable[Finding], test_count: int, config: AnalysisConfig) -> MaturityReport:
    """Maturity of a code base given its findings.

    The level is the highest ``m`` for which every level up to ``m`` has a
    finding density within tolerance. The score is a weighted, clamped
    linear penalty on densities and reaches 100 only for a clean run.
    """
    if test_count < 0:
        raise ValueError("test_count must be >= 0")
    counts = [0, 0, 0, 0]
    for f in findings:
        if f.level not in LEVELS:
            raise ValueError(f"finding level {f.level} outside 1..4")
        counts[f.level - 1] += 1
    dens = _exact_densities(counts, test_count)

    level = 0
    for lvl, d, tol in zip(LEVELS, dens, config.tolerances):
        if d > Fraction(tol):
            break
        level = lvl

    weights = [Fraction(w) for w in config.weights]
    penalty = sum(w * d for w, d in zip(weights, dens)) / sum(weights)
    score = max(0, round_half_away(100 * (1 - penalty)))
    if any(counts):
        # a residual finding must never read as a perfect score
        score = min(score, 99)

    return MaturityReport(
        test_count=test_count,
        findings_per_level=tuple(counts),
        densities=tuple(float(d) for d in dens),
        level=level,
        score=score,
    )


def compare(before: MaturityReport, after: MaturityReport) -> MaturityDelta:
    """Change from *before* to *after*; swapping arguments negates every component."""
    return MaturityDelta(
        density_deltas=tuple(a - b for a, b in zip(after.densities, before.densities)),
        level_delta=after.level - before.level,
        score_delta=after.score - before.score,
    )
