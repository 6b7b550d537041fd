"""Comparing localization techniques against ground truth.

Techniques emit either a ranked file list or an unordered candidate set
per bug. The harness resolves both into a concrete file order under a
chosen tie policy, then reports Top-N counts, mean first rank (MFR) and
mean average rank (MAR), plus the exclusive overlap regions of the
techniques' Top-1 success sets.

Unordered sets carry no order information at all, so they are always
credited worst-case: with m candidates containing a faulty file, the
rank is m. Rank metrics (MFR/MAR) are not applicable to them.

Ground truth file format:

    BUG <id>
    FAULTY <path>         # one or more per bug
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

from .bisection import IsolationReport, read_report
from .errors import (
    BugSetMismatchError,
    ConfigParseError,
    MissingTruthError,
    NotApplicableError,
    SpectrumFormatError,
)
from .sbfl import (
    BEST_CASE,
    DETERMINISTIC,
    TIE_POLICIES,
    WORST_CASE,
    Ranking,
    RankEntry,
    read_ranking,
)

RANKED = "ranked"
UNORDERED = "unordered"

TOP_NS = (1, 5, 10, 20)


def normalize_path(path: str) -> str:
    p = path.strip().replace("\\", "/")
    while p.startswith("./"):
        p = p[2:]
    return p.rstrip("/")


@dataclass(frozen=True)
class GroundTruth:
    bug_id: str
    faulty_files: frozenset[str]

    def __post_init__(self) -> None:
        if not self.faulty_files:
            raise ValueError(f"ground truth for {self.bug_id} names no faulty files")


@dataclass
class TechniqueOutput:
    bug_id: str
    kind: str  # RANKED or UNORDERED
    ranking: Ranking | None = None
    files: frozenset[str] = frozenset()

    @staticmethod
    def from_ranking(ranking: Ranking) -> "TechniqueOutput":
        entries = tuple(
            RankEntry(path=normalize_path(e.path), score=e.score, rank=e.rank) for e in ranking.entries
        )
        norm = Ranking(entries=entries, tie_policy=ranking.tie_policy, bug_id=ranking.bug_id)
        return TechniqueOutput(bug_id=ranking.bug_id, kind=RANKED, ranking=norm)

    @staticmethod
    def from_report(report: IsolationReport) -> "TechniqueOutput":
        files = frozenset(normalize_path(p) for p in report.candidate_files)
        return TechniqueOutput(bug_id=report.bug_id, kind=UNORDERED, files=files)


def parse_truth(text: str, origin: str = "<truth>") -> dict[str, GroundTruth]:
    truths: dict[str, GroundTruth] = {}
    bug_id: str | None = None
    files: set[str] = set()

    def flush(where: str) -> None:
        nonlocal bug_id, files
        if bug_id is None:
            return
        if not files:
            raise SpectrumFormatError(f"{where}: bug {bug_id!r} has no FAULTY lines")
        truths[bug_id] = GroundTruth(bug_id=bug_id, faulty_files=frozenset(files))
        bug_id, files = None, set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        where = f"{origin}:{lineno}"
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(maxsplit=1)
        if fields[0] == "BUG":
            if len(fields) != 2:
                raise SpectrumFormatError(f"{where}: expected 'BUG <id>'")
            flush(where)
            if fields[1] in truths:
                raise SpectrumFormatError(f"{where}: duplicate bug id {fields[1]!r}")
            bug_id = fields[1]
        elif fields[0] == "FAULTY":
            if bug_id is None:
                raise SpectrumFormatError(f"{where}: FAULTY before any BUG")
            if len(fields) != 2:
                raise SpectrumFormatError(f"{where}: expected 'FAULTY <path>'")
            path = normalize_path(fields[1])
            if path in files:
                raise SpectrumFormatError(f"{where}: duplicate faulty path {path!r}")
            files.add(path)
        else:
            raise SpectrumFormatError(f"{where}: unknown directive {fields[0]!r}")
    flush(f"{origin}:<eof>")
    return truths


def format_truth(truths: dict[str, GroundTruth]) -> str:
    lines = []
    for bug_id in sorted(truths):
        lines.append(f"BUG {bug_id}")
        lines += [f"FAULTY {p}" for p in sorted(truths[bug_id].faulty_files)]
    return "\n".join(lines) + "\n"


# --- rank resolution --------------------------------------------------------


def resolved_order(output: TechniqueOutput, truth: GroundTruth, policy: str = BEST_CASE) -> list[str]:
    """Flatten an output into one concrete file order.

    Ranked lists keep their score order; within a score-tie group the
    policy decides whether faulty files are credited first (best), last
    (worst), or paths just sort ascending (deterministic). An unordered
    set is a single tie group and is always resolved worst-case.
    """
    if policy not in TIE_POLICIES:
        raise ValueError(f"unknown tie policy {policy!r}")
    if output.kind == UNORDERED:
        groups: list[list[str]] = [sorted(output.files)] if output.files else []
        policy = WORST_CASE
    elif output.kind == RANKED:
        assert output.ranking is not None
        groups = []
        last_score: float | None = None
        for entry in output.ranking.entries:
            if last_score is None or entry.score != last_score:
                groups.append([])
                last_score = entry.score
            groups[-1].append(entry.path)
    else:
        raise ValueError(f"unknown output kind {output.kind!r}")

    faulty = truth.faulty_files
    order: list[str] = []
    for group in groups:
        if policy == DETERMINISTIC:
            order += sorted(group)
        elif policy == BEST_CASE:
            order += sorted(p for p in group if p in faulty)
            order += sorted(p for p in group if p not in faulty)
        else:
            order += sorted(p for p in group if p not in faulty)
            order += sorted(p for p in group if p in faulty)
    return order


def rank_of_first_fault(
    output: TechniqueOutput, truth: GroundTruth, policy: str = BEST_CASE
) -> int | None:
    """1-based rank of the best-placed faulty file, or None if absent."""
    for i, path in enumerate(resolved_order(output, truth, policy)):
        if path in truth.faulty_files:
            return i + 1
    return None


def fault_ranks(output: TechniqueOutput, truth: GroundTruth, policy: str = BEST_CASE) -> list[int]:
    """Rank of every faulty file; absent ones get length+1."""
    order = resolved_order(output, truth, policy)
    sentinel = len(order) + 1
    positions = {path: i + 1 for i, path in enumerate(order)}
    return [positions.get(f, sentinel) for f in sorted(truth.faulty_files)]


def _lookup_truth(truths: dict[str, GroundTruth], bug_id: str) -> GroundTruth:
    try:
        return truths[bug_id]
    except KeyError:
        raise MissingTruthError(f"no ground truth for bug {bug_id!r}") from None


def top_n(
    outputs: dict[str, TechniqueOutput], truths: dict[str, GroundTruth], n: int, policy: str = BEST_CASE
) -> int:
    """How many bugs have a faulty file at rank <= n."""
    hits = 0
    for bug_id, output in outputs.items():
        rank = rank_of_first_fault(output, _lookup_truth(truths, bug_id), policy)
        if rank is not None and rank <= n:
            hits += 1
    return hits


def _require_ranked(outputs: dict[str, TechniqueOutput], metric: str) -> None:
    for output in outputs.values():
        if output.kind != RANKED:
            raise NotApplicableError(f"{metric} is not applicable to unordered candidate sets")


def mfr(outputs: dict[str, TechniqueOutput], truths: dict[str, GroundTruth], policy: str = BEST_CASE) -> float:
    """Mean first rank over bugs; a miss costs ranking length + 1."""
    _require_ranked(outputs, "MFR")
    if not outputs:
        raise NotApplicableError("MFR over zero bugs")
    total = 0.0
    for bug_id, output in outputs.items():
        truth = _lookup_truth(truths, bug_id)
        rank = rank_of_first_fault(output, truth, policy)
        total += rank if rank is not None else len(resolved_order(output, truth, policy)) + 1
    return total / len(outputs)


def mar(outputs: dict[str, TechniqueOutput], truths: dict[str, GroundTruth], policy: str = BEST_CASE) -> float:
    """Mean over bugs of the mean rank of all faulty files."""
    _require_ranked(outputs, "MAR")
    if not outputs:
        raise NotApplicableError("MAR over zero bugs")
    total = 0.0
    for bug_id, output in outputs.items():
        ranks = fault_ranks(output, _lookup_truth(truths, bug_id), policy)
        total += sum(ranks) / len(ranks)
    return total / len(outputs)


def overlap(success_sets: dict[str, set[str]]) -> dict[str, int]:
    """Exclusive region sizes of up to four techniques' success sets.

    Keys are '&'-joined sorted technique subsets; every bug lands in
    exactly one region, so the counts sum to the union size.
    """
    if not 1 <= len(success_sets) <= 4:
        raise ValueError(f"overlap supports 1..4 techniques, got {len(success_sets)}")
    techs = sorted(success_sets)
    regions = {
        "&".join(subset): 0 for size in range(1, len(techs) + 1) for subset in combinations(techs, size)
    }
    for bug in set().union(*success_sets.values()):
        members = [t for t in techs if bug in success_sets[t]]
        regions["&".join(members)] += 1
    return regions


# --- reports ----------------------------------------------------------------


@dataclass
class TechniqueMetrics:
    technique: str
    runs: int
    bugs: int
    top: dict[int, float]  # n -> hit count (mean over runs; integral for one run)
    mfr: float | None  # None when not applicable
    mar: float | None


@dataclass
class MetricReport:
    policy: str
    bugs: int
    rows: list[TechniqueMetrics]
    overlap_top1: dict[str, int]


def _as_runs(value) -> list[dict[str, TechniqueOutput]]:
    if isinstance(value, dict):
        return [value]
    return list(value)


def build_report(
    results: dict[str, "dict[str, TechniqueOutput] | list[dict[str, TechniqueOutput]]"],
    truths: dict[str, GroundTruth],
    policy: str = BEST_CASE,
) -> MetricReport:
    """Score every technique (averaging over repeated runs) and compute
    Top-1 overlap regions across techniques (first run of each)."""
    if not results:
        raise ConfigParseError("no technique results to evaluate")
    if policy not in TIE_POLICIES:
        raise ValueError(f"unknown tie policy {policy!r}")

    runs_by_tech = {tech: _as_runs(value) for tech, value in sorted(results.items())}
    bug_sets: dict[str, frozenset[str]] = {}
    for tech, runs in runs_by_tech.items():
        for i, run in enumerate(runs, start=1):
            label = tech if len(runs) == 1 else f"{tech}/run{i}"
            bug_sets[label] = frozenset(run.keys())
    distinct = set(bug_sets.values())
    if len(distinct) > 1:
        raise BugSetMismatchError(
            "techniques cover different bug sets: "
            + "; ".join(f"{t}={len(s)} bugs" for t, s in sorted(bug_sets.items()))
        )
    bug_ids = next(iter(distinct))
    for bug_id in bug_ids:
        _lookup_truth(truths, bug_id)

    rows: list[TechniqueMetrics] = []
    for tech, runs in runs_by_tech.items():
        per_run_top: list[dict[int, int]] = []
        per_run_mfr: list[float | None] = []
        per_run_mar: list[float | None] = []
        for run in runs:
            per_run_top.append({n: top_n(run, truths, n, policy) for n in TOP_NS})
            try:
                per_run_mfr.append(mfr(run, truths, policy))
                per_run_mar.append(mar(run, truths, policy))
            except NotApplicableError:
                per_run_mfr.append(None)
                per_run_mar.append(None)
        nruns = len(runs)
        top_mean: dict[int, float] = {}
        for n in TOP_NS:
            mean = sum(r[n] for r in per_run_top) / nruns
            top_mean[n] = int(mean) if nruns == 1 else mean
        applicable = [v for v in per_run_mfr if v is not None]
        mfr_val = sum(applicable) / len(applicable) if len(applicable) == nruns else None
        applicable = [v for v in per_run_mar if v is not None]
        mar_val = sum(applicable) / len(applicable) if len(applicable) == nruns else None
        row = TechniqueMetrics(
            technique=tech, runs=nruns, bugs=len(bug_ids), top=top_mean, mfr=mfr_val, mar=mar_val
        )
        values = [row.top[n] for n in TOP_NS]
        if values != sorted(values) or values[-1] > row.bugs or values[0] < 0:
            raise AssertionError(f"Top-N counts for {tech} are not monotone: {values}")
        rows.append(row)

    success_sets = {
        tech: {
            bug_id
            for bug_id, output in runs[0].items()
            if rank_of_first_fault(output, truths[bug_id], policy) == 1
        }
        for tech, runs in runs_by_tech.items()
    }
    overlap_top1 = overlap(success_sets) if len(success_sets) <= 4 else {}
    return MetricReport(policy=policy, bugs=len(bug_ids), rows=rows, overlap_top1=overlap_top1)


def metric_report_to_dict(report: MetricReport) -> dict:
    return {
        "policy": report.policy,
        "bugs": report.bugs,
        "techniques": [
            {
                "technique": row.technique,
                "runs": row.runs,
                "bugs": row.bugs,
                "top": {str(n): row.top[n] for n in TOP_NS},
                "mfr": row.mfr,
                "mar": row.mar,
            }
            for row in report.rows
        ],
        "overlap_top1": report.overlap_top1,
    }


def _fmt(value: float | int | None) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float) and not value.is_integer():
        return f"{value:.2f}"
    return str(int(value))


def render_text(report: MetricReport) -> str:
    headers = ["technique", "runs", "bugs", "top1", "top5", "top10", "top20", "mfr", "mar"]
    table = [headers]
    for row in report.rows:
        table.append(
            [
                row.technique,
                str(row.runs),
                str(row.bugs),
                _fmt(row.top[1]),
                _fmt(row.top[5]),
                _fmt(row.top[10]),
                _fmt(row.top[20]),
                _fmt(row.mfr),
                _fmt(row.mar),
            ]
        )
    widths = [max(len(r[i]) for r in table) for i in range(len(headers))]
    lines = []
    for r in table:
        cells = [r[0].ljust(widths[0])] + [r[i].rjust(widths[i]) for i in range(1, len(headers))]
        lines.append("  ".join(cells).rstrip())
    if report.overlap_top1:
        lines.append("")
        lines.append(f"top-1 overlap (policy={report.policy}):")
        for key in sorted(report.overlap_top1):
            lines.append(f"  {key}: {report.overlap_top1[key]}")
    return "\n".join(lines) + "\n"


# --- results directory ------------------------------------------------------


def _load_flat_results(path: Path) -> dict[str, TechniqueOutput]:
    outputs: dict[str, TechniqueOutput] = {}
    for file in sorted(path.glob("*.json")):
        try:
            data = json.loads(file.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigParseError(f"cannot read result {file}: {exc}") from exc
        if "entries" in data:
            output = TechniqueOutput.from_ranking(read_ranking(file))
        elif "candidate_files" in data:
            output = TechniqueOutput.from_report(read_report(file))
        else:
            raise ConfigParseError(f"{file}: neither a ranking nor an isolation report")
        if not output.bug_id:
            output.bug_id = file.stem
        if output.bug_id in outputs:
            raise ConfigParseError(f"{file}: duplicate bug id {output.bug_id!r}")
        outputs[output.bug_id] = output
    if not outputs:
        raise ConfigParseError(f"no result files in {path}")
    return outputs


def load_results_dir(path: Path | str) -> dict[str, list[dict[str, TechniqueOutput]]]:
    """One subdirectory per technique; inside, either *.json results or
    run*/ subdirectories each holding *.json results (repeated runs)."""
    root = Path(path)
    if not root.is_dir():
        raise ConfigParseError(f"results directory {root} does not exist")
    results: dict[str, list[dict[str, TechniqueOutput]]] = {}
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        run_dirs = sorted(d for d in sub.iterdir() if d.is_dir() and d.name.startswith("run"))
        if run_dirs:
            results[sub.name] = [_load_flat_results(d) for d in run_dirs]
        else:
            results[sub.name] = [_load_flat_results(sub)]
    if not results:
        raise ConfigParseError(f"no technique directories in {root}")
    return results
