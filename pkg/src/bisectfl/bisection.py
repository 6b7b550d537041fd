"""Bug-inducing commit isolation.

The pipeline narrows a reported compiler bug down to one commit in four
stages, spending one oracle probe per previously unseen revision:

  intake  verify the reported bad revision actually fails
  rough   walk major releases (date order) for a failing one; the latest
          passing major before it becomes the good boundary
  fine    walk minor releases inside the live (good, bad] window
  bisect  binary search over the first-parent commit range

The commit found is diffed against its first parent and the touched
paths are filtered down to compiler source files: those are the
candidate fault locations. Verdict monotonicity over the range (old
passes, new fails, one flip) is assumed, not verified; unresolvable
revisions are skipped by probing outward from the midpoint.
"""

from __future__ import annotations

import datetime
import json
import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    BisectFLError,
    ConfigParseError,
    IntakeFailedError,
    RootCommitError,
)
from .history import (
    MAJOR,
    MINOR,
    GitBackend,
    HistoryBackend,
    HistoryRange,
    Release,
    SimBackend,
    SimHistory,
    SvnBackend,
    filter_source_files,
    make_sim_history,
)
from .oracle import (
    ENV_CACHE,
    BinarySource,
    CompileConfig,
    FailureCheck,
    SimOracle,
    TestProgram,
    ToolchainOracle,
    Verdict,
    VerdictCache,
)
import os

logger = logging.getLogger(__name__)

STAGE_INTAKE = "intake"
STAGE_ROUGH = "rough"
STAGE_FINE = "fine"
STAGE_BISECT = "bisect"


@dataclass(frozen=True)
class ProbeEvent:
    revision: str
    verdict: Verdict
    stage: str


@dataclass(frozen=True)
class Boundary:
    """A range endpoint: a commit with a known verdict, datable for
    release-window math, optionally carrying the release it came from."""

    revision: str
    date: datetime.date
    release: Release | None = None


@dataclass
class RoughResult:
    """Outcome of major-release narrowing. Exactly one of `good`,
    `degenerate_bic`, `inconclusive_prefix` is set (bad is always set)."""

    bad: Boundary
    good: Boundary | None = None
    degenerate_bic: str | None = None
    inconclusive_prefix: tuple[str, ...] | None = None
    no_passing_release: bool = False


@dataclass
class RangeResult:
    good: Boundary
    bad: Boundary


@dataclass
class BisectResult:
    bic: str | None
    narrowed: tuple[str, ...] | None = None


@dataclass
class IsolationReport:
    bug_id: str
    bic: str | None
    candidate_files: tuple[str, ...]  # set semantics; serialized path-ascending
    no_candidates: bool
    inconclusive: bool
    narrowed_range: tuple[str, ...] | None
    inconclusive_reason: str | None
    oracle_calls: int
    wall_time_s: float
    probe_log: tuple[ProbeEvent, ...]


def report_to_dict(report: IsolationReport) -> dict:
    return {
        "bug_id": report.bug_id,
        "bic": report.bic,
        "candidate_files": sorted(report.candidate_files),
        "no_candidates": report.no_candidates,
        "inconclusive": report.inconclusive,
        "narrowed_range": list(report.narrowed_range) if report.narrowed_range is not None else None,
        "inconclusive_reason": report.inconclusive_reason,
        "oracle_calls": report.oracle_calls,
        "wall_time_s": report.wall_time_s,
        "probe_log": [
            {"revision": ev.revision, "status": ev.verdict.status, "reason": ev.verdict.reason, "stage": ev.stage}
            for ev in report.probe_log
        ],
    }


def report_from_dict(data: dict) -> IsolationReport:
    try:
        probes = tuple(
            ProbeEvent(p["revision"], Verdict(p["status"], p.get("reason", "")), p.get("stage", ""))
            for p in data["probe_log"]
        )
        return IsolationReport(
            bug_id=data["bug_id"],
            bic=data["bic"],
            candidate_files=tuple(data["candidate_files"]),
            no_candidates=data["no_candidates"],
            inconclusive=data["inconclusive"],
            narrowed_range=tuple(data["narrowed_range"]) if data.get("narrowed_range") is not None else None,
            inconclusive_reason=data.get("inconclusive_reason"),
            oracle_calls=data["oracle_calls"],
            wall_time_s=data["wall_time_s"],
            probe_log=probes,
        )
    except (KeyError, TypeError) as exc:
        raise ConfigParseError(f"malformed isolation report: {exc}") from exc


def write_report(report: IsolationReport, path: Path | str) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_report(path: Path | str) -> IsolationReport:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigParseError(f"cannot read report {path}: {exc}") from exc
    return report_from_dict(data)


@dataclass
class BugCase:
    """A reported compiler bug, as taken in from a case file."""

    bug_id: str
    bad_revision: str
    source_pattern: str
    config: CompileConfig | None = None
    program: TestProgram | None = None
    binary_source: BinarySource | None = None


class _ProbeBudgetExceeded(Exception):
    def __init__(self, narrowed: tuple[str, ...] | None = None):
        self.narrowed = narrowed


class IsolationEngine:
    """Drives one bug case through intake, range narrowing and bisection.

    Verdicts are memoized per revision for the lifetime of the run, so
    re-examining a boundary costs nothing; `probe_log` therefore lists
    exactly the distinct oracle calls, in order.
    """

    def __init__(
        self,
        case: BugCase,
        backend: HistoryBackend,
        oracle,
        exhaustive_majors: bool = False,
        max_probes: int | None = None,
    ):
        self.case = case
        self.backend = backend
        self.oracle = oracle
        self.exhaustive_majors = exhaustive_majors
        self.max_probes = max_probes
        self._memo: dict[str, Verdict] = {}
        self.probe_log: list[ProbeEvent] = []
        self.stage_counts: Counter[str] = Counter()
        self.fine_range_size: int | None = None

    # -- probing ----------------------------------------------------------

    def _probe(self, revision: str, stage: str) -> Verdict:
        if revision in self._memo:
            return self._memo[revision]
        if self.max_probes is not None and len(self.probe_log) >= self.max_probes:
            raise _ProbeBudgetExceeded()
        verdict = self.oracle.evaluate(revision)
        self._memo[revision] = verdict
        self.probe_log.append(ProbeEvent(revision, verdict, stage))
        self.stage_counts[stage] += 1
        if verdict.is_unresolvable:
            logger.info("revision %s unresolvable (%s), skipping", revision, verdict.reason)
        return verdict

    def _boundary(self, revision: str, release: Release | None = None) -> Boundary:
        date = release.date if release is not None else self.backend.commit_date(revision)
        return Boundary(revision=revision, date=date, release=release)

    # -- stages -----------------------------------------------------------

    def verify_intake(self) -> None:
        verdict = self._probe(self.case.bad_revision, STAGE_INTAKE)
        if verdict.is_pass:
            raise IntakeFailedError(
                f"bad revision {self.case.bad_revision} evaluates Pass: nothing to isolate"
            )
        if verdict.is_unresolvable:
            raise IntakeFailedError(
                f"bad revision {self.case.bad_revision} is unresolvable ({verdict.reason})"
            )

    def rough_range(self, releases: list[Release]) -> RoughResult:
        majors = sorted((r for r in releases if r.kind == MAJOR), key=lambda r: r.date)
        probed: list[tuple[Release, Verdict]] = []
        for rel in majors:
            verdict = self._probe(rel.commit, STAGE_ROUGH)
            probed.append((rel, verdict))
            if verdict.is_fail and not self.exhaustive_majors:
                break

        failing = [rel for rel, v in probed if v.is_fail]
        no_passing_release = False
        if failing:
            bad_rel = min(failing, key=lambda r: r.date)
            bad = self._boundary(bad_rel.commit, bad_rel)
        else:
            bad = self._boundary(self.case.bad_revision)

        passing = [rel for rel, v in probed if v.is_pass and rel.date < bad.date]
        if passing:
            good_rel = max(passing, key=lambda r: r.date)
            return RoughResult(bad=bad, good=self._boundary(good_rel.commit, good_rel))

        # No release passes (or none exist): fall back to the repository root.
        no_passing_release = bool(majors)
        root = self.backend.root_commit()
        verdict = self._probe(root, STAGE_ROUGH)
        if verdict.is_pass:
            return RoughResult(bad=bad, good=self._boundary(root), no_passing_release=no_passing_release)
        if verdict.is_fail:
            # Nothing older exists, so the fault entered history right here.
            return RoughResult(bad=bad, degenerate_bic=root, no_passing_release=no_passing_release)

        # Unresolvable root: march forward for the first resolvable commit.
        chain = self.backend.commits_between(root, bad.revision).commits
        prefix = [root]
        for commit in chain:
            verdict = self._probe(commit, STAGE_ROUGH)
            if verdict.is_pass:
                return RoughResult(
                    bad=bad, good=self._boundary(commit), no_passing_release=no_passing_release
                )
            if verdict.is_fail:
                # Everything before it is unresolvable: the flip is anywhere
                # in the prefix, which cannot be narrowed further.
                prefix.append(commit)
                return RoughResult(
                    bad=bad,
                    inconclusive_prefix=tuple(prefix),
                    no_passing_release=no_passing_release,
                )
            prefix.append(commit)
        raise BisectFLError("unreachable: the bad boundary itself is a verified failure")

    def fine_range(self, rough: RoughResult, releases: list[Release]) -> RangeResult:
        assert rough.good is not None
        good, bad = rough.good, rough.bad
        minors = sorted((r for r in releases if r.kind == MINOR), key=lambda r: r.date)
        for rel in minors:
            if not (good.date < rel.date <= bad.date):
                continue
            if rel.commit == bad.revision or rel.commit == good.revision:
                continue
            verdict = self._probe(rel.commit, STAGE_FINE)
            if verdict.is_pass:
                good = self._boundary(rel.commit, rel)
            elif verdict.is_fail:
                bad = self._boundary(rel.commit, rel)
        return RangeResult(good=good, bad=bad)

    def bisect(self, hrange: HistoryRange) -> BisectResult:
        """Binary search for the flip. Positions index hrange.commits;
        position -1 stands for the good boundary. On an adjacent range the
        bad commit is returned without probing anything."""
        commits = hrange.commits
        lo, hi = -1, len(commits) - 1
        try:
            while hi - lo > 1:
                mid = (lo + hi) // 2
                found = self._first_resolvable(commits, lo, hi, mid)
                if found is None:
                    return BisectResult(bic=None, narrowed=commits[lo + 1 : hi + 1])
                pos, verdict = found
                if verdict.is_fail:
                    hi = pos
                else:
                    lo = pos
        except _ProbeBudgetExceeded:
            raise _ProbeBudgetExceeded(narrowed=commits[lo + 1 : hi + 1]) from None
        return BisectResult(bic=commits[hi])

    def _first_resolvable(
        self, commits: tuple[str, ...], lo: int, hi: int, mid: int
    ) -> tuple[int, Verdict] | None:
        """Probe mid, then its neighbors outward (mid+1, mid-1, mid+2, ...)
        staying strictly inside (lo, hi), until a resolvable verdict."""
        order = [mid]
        step = 1
        while True:
            extended = False
            if mid + step < hi:
                order.append(mid + step)
                extended = True
            if mid - step > lo:
                order.append(mid - step)
                extended = True
            if not extended:
                break
            step += 1
        for pos in order:
            verdict = self._probe(commits[pos], STAGE_BISECT)
            if not verdict.is_unresolvable:
                return pos, verdict
        return None

    def differential_analysis(self, bic: str) -> tuple[str, ...]:
        """Files the fault can hide in: the BIC's first-parent diff,
        filtered to source files, as a path-sorted deduplicated tuple."""
        diff = self.backend.diff_files(bic)
        return tuple(sorted(set(filter_source_files(diff, self.case.source_pattern))))

    # -- composition --------------------------------------------------------

    def run(self) -> IsolationReport:
        start = time.perf_counter()
        stage = STAGE_INTAKE
        try:
            self.verify_intake()
            stage = STAGE_ROUGH
            releases = self.backend.list_releases()
            rough = self.rough_range(releases)
            if rough.degenerate_bic is not None:
                return self._finish_found(rough.degenerate_bic, start)
            if rough.inconclusive_prefix is not None:
                return self._finish_inconclusive(
                    rough.inconclusive_prefix, "unresolvable prefix before first failure", start
                )
            stage = STAGE_FINE
            fine = self.fine_range(rough, releases)
            stage = STAGE_BISECT
            hrange = self.backend.commits_between(fine.good.revision, fine.bad.revision)
            self.fine_range_size = len(hrange.commits)
            result = self.bisect(hrange)
            if result.bic is None:
                return self._finish_inconclusive(result.narrowed, "all candidates unresolvable", start)
            return self._finish_found(result.bic, start)
        except _ProbeBudgetExceeded as exc:
            return self._finish_inconclusive(exc.narrowed, "probe budget exhausted", start)
        except IntakeFailedError:
            raise
        except BisectFLError as exc:
            raise type(exc)(f"{stage}: {exc}") from exc

    def _finish_found(self, bic: str, start: float) -> IsolationReport:
        try:
            files = self.differential_analysis(bic)
        except RootCommitError:
            files = ()
        return IsolationReport(
            bug_id=self.case.bug_id,
            bic=bic,
            candidate_files=files,
            no_candidates=not files,
            inconclusive=False,
            narrowed_range=None,
            inconclusive_reason=None,
            oracle_calls=len(self.probe_log),
            wall_time_s=time.perf_counter() - start,
            probe_log=tuple(self.probe_log),
        )

    def _finish_inconclusive(
        self, narrowed: tuple[str, ...] | None, reason: str, start: float
    ) -> IsolationReport:
        return IsolationReport(
            bug_id=self.case.bug_id,
            bic=None,
            candidate_files=(),
            no_candidates=True,
            inconclusive=True,
            narrowed_range=narrowed,
            inconclusive_reason=reason,
            oracle_calls=len(self.probe_log),
            wall_time_s=time.perf_counter() - start,
            probe_log=tuple(self.probe_log),
        )


# --- case files -----------------------------------------------------------


@dataclass
class LoadedCase:
    case: BugCase
    backend: HistoryBackend
    oracle: object
    sim: SimHistory | None = None


def _require_keys(obj: dict, allowed: set[str], required: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigParseError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigParseError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ConfigParseError(f"{where}: missing keys {sorted(missing)}")


def _load_check(obj: dict) -> FailureCheck:
    _require_keys(obj, {"kind", "stdout", "exit_code", "baseline_flags"}, {"kind"}, "program.check")
    return FailureCheck(
        kind=obj["kind"],
        expected_stdout=obj.get("stdout", ""),
        expected_exit=int(obj.get("exit_code", 0)),
        baseline_flags=tuple(obj.get("baseline_flags", ())),
    )


def _load_binary_source(obj: dict, base: Path) -> BinarySource:
    allowed = {
        "kind",
        "path_template",
        "build_script",
        "prefix_template",
        "compiler_relpath",
        "command_template",
        "fallback",
    }
    _require_keys(obj, allowed, {"kind"}, "binary_source")
    fallback = None
    if obj.get("fallback") is not None:
        fallback = _load_binary_source(obj["fallback"], base)

    def _abspath(template: str) -> str:
        # keep {rev} templates usable while anchoring relative paths at the case file
        if not template or Path(template.split("{rev}")[0] or ".").is_absolute():
            return template
        return str(base / template)

    return BinarySource(
        kind=obj["kind"],
        path_template=_abspath(obj.get("path_template", "")),
        build_script=_abspath(obj.get("build_script", "")),
        prefix_template=_abspath(obj.get("prefix_template", "")),
        compiler_relpath=obj.get("compiler_relpath", ""),
        command_template=obj.get("command_template", ""),
        fallback=fallback,
    )


def load_case(
    path: Path | str,
    default_cache: str | None = None,
    toolchain_timeout: float | None = None,
    run_timeout: float | None = None,
) -> LoadedCase:
    """Parse a bug case file (JSON). Relative paths resolve against the
    case file's own directory. Unknown keys are rejected everywhere.

    `default_cache` applies when the case names no cache of its own;
    the timeout overrides take precedence over environment defaults."""
    path = Path(path)
    base = path.parent.resolve()
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigParseError(f"cannot read case file {path}: {exc}") from exc

    top_allowed = {
        "id",
        "backend",
        "bad_revision",
        "source_pattern",
        "config",
        "program",
        "binary_source",
        "cache",
    }
    _require_keys(data, top_allowed, {"id", "backend"}, str(path))
    backend_obj = data["backend"]
    _require_keys(
        backend_obj,
        {
            "kind",
            "repo",
            "url",
            "manifest",
            "num_commits",
            "bic_index",
            "files_per_commit",
            "seed",
            "releases",
            "unresolvable_indices",
        },
        {"kind"},
        "backend",
    )
    kind = backend_obj["kind"]

    if kind == "sim":
        releases = [tuple(entry) for entry in backend_obj.get("releases", [])]
        history = make_sim_history(
            num_commits=int(backend_obj.get("num_commits", 32)),
            bic_index=int(backend_obj.get("bic_index", 1)),
            releases=[(str(l), str(k), int(i)) for l, k, i in releases],
            files_per_commit=int(backend_obj.get("files_per_commit", 3)),
            seed=int(backend_obj.get("seed", 0)),
        )
        backend: HistoryBackend = SimBackend(history)
        oracle = SimOracle(
            history,
            unresolvable_indices=frozenset(int(i) for i in backend_obj.get("unresolvable_indices", ())),
        )
        case = BugCase(
            bug_id=str(data["id"]),
            bad_revision=str(data.get("bad_revision", history.commits[-1])),
            source_pattern=str(data.get("source_pattern", "preset:sim")),
        )
        return LoadedCase(case=case, backend=backend, oracle=oracle, sim=history)

    if kind in ("git", "svn"):
        manifest = backend_obj.get("manifest")
        manifest_path = str(base / manifest) if manifest and not Path(manifest).is_absolute() else manifest
        if kind == "git":
            repo = backend_obj.get("repo")
            if not repo:
                raise ConfigParseError("git backend needs 'repo'")
            repo_path = Path(repo)
            if not repo_path.is_absolute():
                repo_path = base / repo_path
            backend = GitBackend(repo_path, manifest_path)
            workdir: Path | None = repo_path
        else:
            url = backend_obj.get("url")
            if not url:
                raise ConfigParseError("svn backend needs 'url'")
            backend = SvnBackend(url, manifest_path)
            workdir = None

        for required in ("bad_revision", "config", "program", "binary_source", "source_pattern"):
            if required not in data:
                raise ConfigParseError(f"{kind} case needs {required!r}")
        cfg_obj = data["config"]
        _require_keys(cfg_obj, {"flags", "language"}, {"flags"}, "config")
        config = CompileConfig(
            flags=tuple(str(f) for f in cfg_obj["flags"]), language=str(cfg_obj.get("language", "c"))
        )
        prog_obj = data["program"]
        _require_keys(prog_obj, {"source", "check"}, {"source", "check"}, "program")
        src = Path(prog_obj["source"])
        if not src.is_absolute():
            src = base / src
        program = TestProgram(source=src, check=_load_check(prog_obj["check"]))
        binary_source = _load_binary_source(data["binary_source"], base)

        cache_path = data.get("cache") or default_cache or os.environ.get(ENV_CACHE)
        cache = None
        if cache_path:
            cp = Path(cache_path)
            if not cp.is_absolute():
                cp = base / cp
            cache = VerdictCache(cp)

        oracle = ToolchainOracle(
            source=binary_source,
            config=config,
            program=program,
            cache=cache,
            workdir=workdir,
            toolchain_timeout=toolchain_timeout,
            run_timeout=run_timeout,
        )
        case = BugCase(
            bug_id=str(data["id"]),
            bad_revision=str(data["bad_revision"]),
            source_pattern=str(data["source_pattern"]),
            config=config,
            program=program,
            binary_source=binary_source,
        )
        return LoadedCase(case=case, backend=backend, oracle=oracle)

    raise ConfigParseError(f"unknown backend kind {kind!r}")


def run_isolation(
    loaded: LoadedCase, exhaustive_majors: bool = False, max_probes: int | None = None
) -> tuple[IsolationReport, IsolationEngine]:
    """Convenience wrapper: build the engine, run it, return both."""
    engine = IsolationEngine(
        loaded.case,
        loaded.backend,
        loaded.oracle,
        exhaustive_majors=exhaustive_majors,
        max_probes=max_probes,
    )
    return engine.run(), engine
