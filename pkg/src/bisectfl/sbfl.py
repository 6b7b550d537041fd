"""Spectrum-based fault localization over compiler source statements.

A spectrum is a set of coverage runs (per compile configuration), each
labeled PASS or FAIL. Per statement we tally the classic four counts

    ef  covered by failing runs      nf  missed by failing runs
    ep  covered by passing runs      np  missed by passing runs

and score them with one of six formulas. Statement scores can be blended
with a history signal (how often a statement's past modifications
induced bugs), then averaged per file over the statements covered by
failing runs, and ranked.

Interchange formats are line-based:

    spectrum:       RUN <label> <PASS|FAIL>   then   COV <file>:<line>
    history stats:  MOD <file>:<line> <induce-count> <noninduce-count>
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    ConfigParseError,
    EmptyFileScoreError,
    NoFailingRunError,
    SpectrumFormatError,
)

OCHIAI = "ochiai"
TARANTULA = "tarantula"
OCHIAI2 = "ochiai2"
OP2 = "op2"
BARINEL = "barinel"
DSTAR = "dstar"

FORMULAS = (OCHIAI, TARANTULA, OCHIAI2, OP2, BARINEL, DSTAR)

BEST_CASE = "best"
WORST_CASE = "worst"
DETERMINISTIC = "deterministic"

TIE_POLICIES = (BEST_CASE, WORST_CASE, DETERMINISTIC)

RUN_PASS = "PASS"
RUN_FAIL = "FAIL"


@dataclass(frozen=True, order=True)
class StatementId:
    file: str
    line: int

    def __post_init__(self) -> None:
        if not self.file:
            raise ValueError("statement file must be non-empty")
        if self.line < 1:
            raise ValueError(f"statement line must be >= 1, got {self.line}")

    def __str__(self) -> str:
        return f"{self.file}:{self.line}"


@dataclass(frozen=True)
class CoverageRun:
    label: str
    outcome: str  # RUN_PASS or RUN_FAIL
    covered: frozenset[StatementId]

    def __post_init__(self) -> None:
        if self.outcome not in (RUN_PASS, RUN_FAIL):
            raise ValueError(f"bad run outcome {self.outcome!r}")


@dataclass(frozen=True)
class StatementCounts:
    ef: int
    ep: int
    nf: int
    np: int

    def __post_init__(self) -> None:
        for name in ("ef", "ep", "nf", "np"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def total_failing(self) -> int:
        return self.ef + self.nf

    @property
    def total_passing(self) -> int:
        return self.ep + self.np


@dataclass
class Spectrum:
    counts: dict[StatementId, StatementCounts]
    total_failing: int
    total_passing: int

    def failing_covered(self) -> frozenset[StatementId]:
        return frozenset(s for s, c in self.counts.items() if c.ef > 0)


def build_spectrum(runs: list[CoverageRun]) -> Spectrum:
    """Tally per-statement counts over the union of covered statements."""
    failing = [r for r in runs if r.outcome == RUN_FAIL]
    passing = [r for r in runs if r.outcome == RUN_PASS]
    if not failing:
        raise NoFailingRunError("spectrum has no failing run; nothing to localize")
    for run in failing:
        if not run.covered:
            raise NoFailingRunError(f"failing run {run.label!r} covers nothing")
    universe = frozenset().union(*(r.covered for r in runs))
    counts: dict[StatementId, StatementCounts] = {}
    for stmt in universe:
        ef = sum(1 for r in failing if stmt in r.covered)
        ep = sum(1 for r in passing if stmt in r.covered)
        counts[stmt] = StatementCounts(ef=ef, ep=ep, nf=len(failing) - ef, np=len(passing) - ep)
    return Spectrum(counts=counts, total_failing=len(failing), total_passing=len(passing))


def score(counts: StatementCounts, formula: str, dstar_power: int = 2) -> float:
    """Suspiciousness of one statement under the chosen formula.

    Zero-denominator convention: a zero numerator wins and gives 0.0;
    a positive numerator over an empty denominator (only reachable for
    dstar) is +inf.
    """
    if formula not in FORMULAS:
        raise ValueError(f"unknown formula {formula!r}")
    if counts.total_failing < 1:
        raise NoFailingRunError("scoring requires at least one failing run")
    ef, ep, nf, np_ = counts.ef, counts.ep, counts.nf, counts.np

    if formula == OCHIAI:
        den = math.sqrt((ef + nf) * (ef + ep))
        return ef / den if den else 0.0

    if formula == TARANTULA:
        fail_ratio = ef / (ef + nf)
        pass_ratio = ep / (ep + np_) if (ep + np_) else 0.0
        total = fail_ratio + pass_ratio
        return fail_ratio / total if total else 0.0

    if formula == OCHIAI2:
        num = ef * np_
        den = math.sqrt((ef + ep) * (np_ + nf) * (ef + nf) * (ep + np_))
        return num / den if den else 0.0

    if formula == OP2:
        return ef - ep / (ep + np_ + 1)

    if formula == BARINEL:
        den = ep + ef
        return 1.0 - ep / den if den else 0.0

    # dstar
    if dstar_power < 1:
        raise ValueError(f"dstar power must be >= 1, got {dstar_power}")
    den = ep + nf
    if den == 0:
        return math.inf if ef > 0 else 0.0
    return ef**dstar_power / den


def histrum(induce: int, noninduce: int) -> float:
    """History signal: induce / sqrt(induce + noninduce); 0 when the
    statement was never modified by a bug-inducing commit."""
    if induce < 0 or noninduce < 0:
        raise ValueError("history counts must be >= 0")
    if induce == 0:
        return 0.0
    return induce / math.sqrt(induce + noninduce)


def hsfl_score(
    sbfl: float,
    histrum_value: float,
    alpha: float = 0.5,
    covered_by_failing: bool = True,
    in_commit_set: bool = True,
) -> float:
    """Blend a statement's spectrum score with its history signal.

    Statements never covered by a failing run score 0; covered ones get
    (1-alpha)*sbfl, plus alpha*histrum when past bug-inducing commits
    modified them.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be within [0, 1], got {alpha}")
    if not covered_by_failing:
        return 0.0
    if not in_commit_set:
        return (1.0 - alpha) * sbfl
    return (1.0 - alpha) * sbfl + alpha * histrum_value


def aggregate_file(
    path: str, statement_scores: dict[StatementId, float], failing_covered: frozenset[StatementId]
) -> float:
    """File score: arithmetic mean over the file's failing-covered
    statements. A file with none of those has no business being ranked."""
    values = [v for s, v in statement_scores.items() if s.file == path and s in failing_covered]
    if not values:
        raise EmptyFileScoreError(f"{path}: no statements covered by failing runs")
    return sum(values) / len(values)


@dataclass(frozen=True)
class RankEntry:
    path: str
    score: float
    rank: int  # 1-based position in the deterministic order


@dataclass
class Ranking:
    entries: tuple[RankEntry, ...]
    tie_policy: str = DETERMINISTIC
    bug_id: str = ""


def rank_files(file_scores: dict[str, float], tie_policy: str = DETERMINISTIC, bug_id: str = "") -> Ranking:
    """Order files by score descending; equal scores order path-ascending.

    The stored order is always deterministic; `tie_policy` records how
    ties should be credited when the ranking is evaluated against ground
    truth later.
    """
    if tie_policy not in TIE_POLICIES:
        raise ValueError(f"unknown tie policy {tie_policy!r}")
    for path, value in file_scores.items():
        if math.isnan(value):
            raise ValueError(f"score for {path} is NaN")
    ordered = sorted(file_scores.items(), key=lambda item: (-item[1], item[0]))
    entries = tuple(RankEntry(path=p, score=v, rank=i + 1) for i, (p, v) in enumerate(ordered))
    return Ranking(entries=entries, tie_policy=tie_policy, bug_id=bug_id)


@dataclass
class HistoryStats:
    """Per-statement modification history: (induce, noninduce) counts."""

    records: dict[StatementId, tuple[int, int]]

    def in_commit_set(self, stmt: StatementId) -> bool:
        return stmt in self.records

    def induce(self, stmt: StatementId) -> int:
        return self.records.get(stmt, (0, 0))[0]

    def noninduce(self, stmt: StatementId) -> int:
        return self.records.get(stmt, (0, 0))[1]


def rank_spectrum(
    runs: list[CoverageRun],
    formula: str,
    dstar_power: int = 2,
    history: HistoryStats | None = None,
    alpha: float = 0.5,
    tie_policy: str = DETERMINISTIC,
    bug_id: str = "",
) -> Ranking:
    """Full pipeline: tally, score (optionally history-blended), average
    per file over failing-covered statements, rank."""
    spectrum = build_spectrum(runs)
    failing = spectrum.failing_covered()
    statement_scores: dict[StatementId, float] = {}
    for stmt, counts in spectrum.counts.items():
        base = score(counts, formula, dstar_power)
        if history is None:
            statement_scores[stmt] = base
        else:
            in_set = history.in_commit_set(stmt)
            hval = histrum(history.induce(stmt), history.noninduce(stmt)) if in_set else 0.0
            statement_scores[stmt] = hsfl_score(
                base, hval, alpha=alpha, covered_by_failing=stmt in failing, in_commit_set=in_set
            )
    files = sorted({s.file for s in failing})
    file_scores = {f: aggregate_file(f, statement_scores, failing) for f in files}
    return rank_files(file_scores, tie_policy=tie_policy, bug_id=bug_id)


# --- interchange ------------------------------------------------------------


def _parse_statement(token: str, where: str) -> StatementId:
    filepart, sep, linepart = token.rpartition(":")
    if not sep or not filepart:
        raise SpectrumFormatError(f"{where}: expected <file>:<line>, got {token!r}")
    try:
        line = int(linepart)
    except ValueError:
        raise SpectrumFormatError(f"{where}: bad line number in {token!r}") from None
    if line < 1:
        raise SpectrumFormatError(f"{where}: line numbers start at 1, got {line}")
    return StatementId(file=filepart, line=line)


def parse_spectrum(text: str, origin: str = "<spectrum>") -> list[CoverageRun]:
    runs: list[CoverageRun] = []
    labels: set[str] = set()
    current_label: str | None = None
    current_outcome = ""
    current_cov: set[StatementId] = set()

    def flush() -> None:
        nonlocal current_label, current_cov
        if current_label is not None:
            runs.append(
                CoverageRun(label=current_label, outcome=current_outcome, covered=frozenset(current_cov))
            )
        current_label = None
        current_cov = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        where = f"{origin}:{lineno}"
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if fields[0] == "RUN":
            if len(fields) != 3 or fields[2] not in (RUN_PASS, RUN_FAIL):
                raise SpectrumFormatError(f"{where}: expected 'RUN <label> <PASS|FAIL>'")
            flush()
            if fields[1] in labels:
                raise SpectrumFormatError(f"{where}: duplicate run label {fields[1]!r}")
            labels.add(fields[1])
            current_label, current_outcome = fields[1], fields[2]
        elif fields[0] == "COV":
            if current_label is None:
                raise SpectrumFormatError(f"{where}: COV before any RUN")
            if len(fields) != 2:
                raise SpectrumFormatError(f"{where}: expected 'COV <file>:<line>'")
            current_cov.add(_parse_statement(fields[1], where))
        else:
            raise SpectrumFormatError(f"{where}: unknown directive {fields[0]!r}")
    flush()
    return runs


def format_spectrum(runs: list[CoverageRun]) -> str:
    blocks = []
    for run in runs:
        lines = [f"RUN {run.label} {run.outcome}"]
        lines += [f"COV {stmt}" for stmt in sorted(run.covered)]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def parse_history_stats(text: str, origin: str = "<history>") -> HistoryStats:
    records: dict[StatementId, tuple[int, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        where = f"{origin}:{lineno}"
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 4 or fields[0] != "MOD":
            raise SpectrumFormatError(f"{where}: expected 'MOD <file>:<line> <induce> <noninduce>'")
        stmt = _parse_statement(fields[1], where)
        try:
            induce, noninduce = int(fields[2]), int(fields[3])
        except ValueError:
            raise SpectrumFormatError(f"{where}: counts must be integers") from None
        if induce < 0 or noninduce < 0:
            raise SpectrumFormatError(f"{where}: counts must be >= 0")
        if stmt in records:
            raise SpectrumFormatError(f"{where}: duplicate statement {stmt}")
        records[stmt] = (induce, noninduce)
    return HistoryStats(records=records)


def format_history_stats(stats: HistoryStats) -> str:
    lines = [f"MOD {stmt} {ind} {non}" for stmt, (ind, non) in sorted(stats.records.items())]
    return "\n".join(lines) + "\n"


def ranking_to_dict(ranking: Ranking) -> dict:
    return {
        "bug_id": ranking.bug_id,
        "tie_policy": ranking.tie_policy,
        "entries": [{"path": e.path, "score": e.score, "rank": e.rank} for e in ranking.entries],
    }


def ranking_from_dict(data: dict) -> Ranking:
    try:
        entries = tuple(
            RankEntry(path=e["path"], score=float(e["score"]), rank=int(e["rank"]))
            for e in data["entries"]
        )
        return Ranking(entries=entries, tie_policy=data.get("tie_policy", DETERMINISTIC), bug_id=data.get("bug_id", ""))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigParseError(f"malformed ranking: {exc}") from exc


def write_ranking(ranking: Ranking, path: Path | str) -> None:
    Path(path).write_text(json.dumps(ranking_to_dict(ranking), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_ranking(path: Path | str) -> Ranking:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        raise ConfigParseError(f"cannot read ranking {path}: {exc}") from exc
    return ranking_from_dict(data)
