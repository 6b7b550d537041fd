"""Synthetic multi-bug benchmark for exercising the evaluation harness.

Generates a deterministic suite of simulated bugs. Per bug it produces
one unordered result (commit bisection over a sim history) and two
ranked results (plain spectrum scoring and history-blended scoring over
a synthesized coverage spectrum), plus the ground truth, laid out the
way `bisectfl eval` expects:

    <out>/truth.txt
    <out>/results/bisect/<bug>.json
    <out>/results/ochiai/<bug>.json
    <out>/results/hsfl/<bug>.json
"""

from __future__ import annotations

import random
from pathlib import Path

from .bisection import BugCase, IsolationEngine, write_report
from .history import MAJOR, MINOR, SimBackend, make_sim_history
from .oracle import SimOracle
from .sbfl import (
    OCHIAI,
    CoverageRun,
    HistoryStats,
    StatementId,
    rank_spectrum,
    write_ranking,
)

DEFAULT_BENCH_SEED = 90125
DEFAULT_NUM_BUGS = 60


def random_sim_releases(rng: random.Random, num_commits: int) -> list[tuple[str, str, int]]:
    """Scatter 0-3 majors (each with 0-2 minors behind it) over a history."""
    if num_commits < 6:
        return []
    num_majors = rng.randint(0, 3)
    if num_majors == 0:
        return []
    positions = sorted(rng.sample(range(1, num_commits), min(num_majors, num_commits - 1)))
    releases: list[tuple[str, str, int]] = []
    used = set(positions)
    for k, major_idx in enumerate(positions, start=1):
        label = f"{k}.0"
        releases.append((label, MAJOR, major_idx))
        upper = positions[k] if k < len(positions) else num_commits
        for j in range(rng.randint(0, 2)):
            lo, hi = major_idx + 1, upper - 1
            if lo > hi:
                break
            minor_idx = rng.randint(lo, hi)
            if minor_idx in used:
                continue
            used.add(minor_idx)
            releases.append((f"{label}.{j + 1}", MINOR, minor_idx))
    return sorted(releases, key=lambda r: r[2])


def _synth_runs(
    rng: random.Random, faulty_file: str, other_files: list[str]
) -> list[CoverageRun]:
    """Coverage spectrum biased so the faulty file tends to rank high,
    with enough noise that it often does not."""
    faulty_stmts = [StatementId(faulty_file, line) for line in range(1, 7)]
    other_stmts = [StatementId(f, line) for f in other_files for line in range(1, 6)]

    runs: list[CoverageRun] = []
    for k in range(rng.randint(1, 2)):
        covered = {s for s in faulty_stmts if rng.random() < 0.8}
        if not covered:
            covered = {faulty_stmts[0]}
        covered |= {s for s in other_stmts if rng.random() < 0.35}
        runs.append(CoverageRun(label=f"fail{k}", outcome="FAIL", covered=frozenset(covered)))
    for k in range(rng.randint(2, 5)):
        covered = {s for s in faulty_stmts if rng.random() < 0.3}
        covered |= {s for s in other_stmts if rng.random() < 0.6}
        if not covered:
            covered = set(rng.sample(other_stmts, 2))
        runs.append(CoverageRun(label=f"pass{k}", outcome="PASS", covered=frozenset(covered)))
    return runs


def _synth_history_stats(
    rng: random.Random, faulty_file: str, other_files: list[str]
) -> HistoryStats:
    records: dict[StatementId, tuple[int, int]] = {}
    if rng.random() < 0.7:  # bugs whose faulty lines have inducing history
        for line in rng.sample(range(1, 7), rng.randint(1, 3)):
            records[StatementId(faulty_file, line)] = (1, rng.randint(0, 2))
    for f in other_files:
        if rng.random() < 0.4:
            line = rng.randint(1, 5)
            records[StatementId(f, line)] = (rng.randint(0, 1), rng.randint(1, 3))
    return HistoryStats(records=records)


def generate_benchmark(
    out_dir: Path | str, num_bugs: int = DEFAULT_NUM_BUGS, seed: int = DEFAULT_BENCH_SEED
) -> Path:
    """Write the suite; returns the benchmark root directory."""
    rng = random.Random(seed)
    out = Path(out_dir)
    dirs = {name: out / "results" / name for name in ("bisect", "ochiai", "hsfl")}
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)

    truth_lines: list[str] = []
    for b in range(num_bugs):
        bug_id = f"bug{b:03d}"
        num_commits = rng.randint(20, 120)
        bic_index = rng.randint(1, num_commits - 1)
        history = make_sim_history(
            num_commits=num_commits,
            bic_index=bic_index,
            releases=random_sim_releases(rng, num_commits),
            files_per_commit=rng.randint(1, 4),
            seed=rng.randrange(1 << 30),
        )
        case = BugCase(
            bug_id=bug_id, bad_revision=history.commits[-1], source_pattern="preset:sim"
        )
        engine = IsolationEngine(case, SimBackend(history), SimOracle(history))
        report = engine.run()
        write_report(report, dirs["bisect"] / f"{bug_id}.json")

        other_files = sorted(
            {f"src/unit_{i:03d}.c" for i in rng.sample(range(40), rng.randint(4, 8))}
        )
        runs = _synth_runs(rng, history.faulty_path, other_files)
        stats = _synth_history_stats(rng, history.faulty_path, other_files)
        write_ranking(
            rank_spectrum(runs, OCHIAI, bug_id=bug_id), dirs["ochiai"] / f"{bug_id}.json"
        )
        write_ranking(
            rank_spectrum(runs, OCHIAI, history=stats, alpha=0.5, bug_id=bug_id),
            dirs["hsfl"] / f"{bug_id}.json",
        )
        truth_lines.append(f"BUG {bug_id}")
        truth_lines.append(f"FAULTY {history.faulty_path}")

    (out / "truth.txt").write_text("\n".join(truth_lines) + "\n", encoding="utf-8")
    return out
