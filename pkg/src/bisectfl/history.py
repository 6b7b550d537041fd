"""Commit history access for bisection.

One interface, three backends: a real git repository, a real subversion
repository, and a deterministic in-memory simulation used by tests and
demos. History is always viewed as the first-parent linearization of
the bad revision's ancestry; merge side branches are not enumerated.

Releases come from a small manifest file rather than from tag parsing:

    # comment lines and blanks are ignored
    <label> <major|minor> <commit-id> <YYYY-MM-DD>
"""

from __future__ import annotations

import datetime
import random
import re
import shutil
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    BackendFailureError,
    BackendUnavailableError,
    BadIndexError,
    BadPatternError,
    ManifestParseError,
    NotAncestorError,
    RootCommitError,
    UnknownCommitError,
)

MAJOR = "major"
MINOR = "minor"

MODIFIED = "M"
ADDED = "A"
DELETED = "D"

# Anchor date for simulated histories: commit index i is dated i days later.
SIM_BASE_DATE = datetime.date(2000, 1, 1)

PATTERN_PRESETS = {
    "gcc": r"^gcc/[A-Za-z\-]+\.c$",
    "llvm": r"^llvm/lib/.*\.cpp$",
    "sim": r"^src/.*\.c$",
    "toy": r"^src/.*\.py$",
}


@dataclass(frozen=True)
class Release:
    label: str
    kind: str  # MAJOR or MINOR
    commit: str
    date: datetime.date


@dataclass(frozen=True)
class HistoryRange:
    """Commits strictly after `good` up to and including `bad`, oldest first."""

    good: str
    bad: str
    commits: tuple[str, ...]


@dataclass(frozen=True)
class FileDiff:
    """Paths touched by a commit relative to its first parent."""

    commit: str
    entries: tuple[tuple[str, str], ...]  # (path, MODIFIED|ADDED|DELETED)


def parse_manifest(path: Path | str) -> list[Release]:
    """Parse a release manifest; returns releases sorted by date ascending."""
    releases: list[Release] = []
    seen_labels: set[str] = set()
    seen_commits: set[str] = set()
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 4:
            raise ManifestParseError(
                f"{path}:{lineno}: expected '<label> <major|minor> <commit> <date>', got {line!r}"
            )
        label, kind, commit, datestr = fields
        if kind not in (MAJOR, MINOR):
            raise ManifestParseError(f"{path}:{lineno}: unknown release kind {kind!r}")
        try:
            reldate = datetime.date.fromisoformat(datestr)
        except ValueError as exc:
            raise ManifestParseError(f"{path}:{lineno}: bad date {datestr!r}") from exc
        if label in seen_labels:
            raise ManifestParseError(f"{path}:{lineno}: duplicate label {label!r}")
        if commit in seen_commits:
            raise ManifestParseError(f"{path}:{lineno}: duplicate commit {commit!r}")
        seen_labels.add(label)
        seen_commits.add(commit)
        releases.append(Release(label, kind, commit, reldate))

    majors = [r for r in releases if r.kind == MAJOR]
    for rel in releases:
        if rel.kind != MINOR:
            continue
        parents = [m for m in majors if rel.label.startswith(m.label + ".")]
        if len(parents) != 1:
            raise ManifestParseError(
                f"{path}: minor {rel.label!r} must extend exactly one major label "
                f"(matches {len(parents)})"
            )
    releases.sort(key=lambda r: r.date)
    return releases


def filter_source_files(diff: FileDiff, pattern: str) -> list[str]:
    """Grep-like path filter: keep non-deleted entries whose path matches.

    `pattern` is a Python regular expression applied with re.search, or
    "preset:<name>" for one of PATTERN_PRESETS. Input order is preserved.
    """
    if pattern.startswith("preset:"):
        name = pattern[len("preset:"):]
        try:
            pattern = PATTERN_PRESETS[name]
        except KeyError:
            raise BadPatternError(f"unknown pattern preset {name!r}") from None
    try:
        rx = re.compile(pattern)
    except re.error as exc:
        raise BadPatternError(f"bad filter pattern {pattern!r}: {exc}") from exc
    return [p for p, kind in diff.entries if kind != DELETED and rx.search(p)]


class HistoryBackend:
    """Operations every history backend provides."""

    def list_releases(self) -> list[Release]:
        raise NotImplementedError

    def commits_between(self, good: str, bad: str) -> HistoryRange:
        raise NotImplementedError

    def diff_files(self, commit: str) -> FileDiff:
        raise NotImplementedError

    def root_commit(self) -> str:
        raise NotImplementedError

    def head_commit(self) -> str:
        raise NotImplementedError

    def commit_date(self, commit: str) -> datetime.date:
        raise NotImplementedError


# --- simulated histories --------------------------------------------------


@dataclass(frozen=True)
class SimHistory:
    commits: tuple[str, ...]  # oldest first, ids c0..c{n-1}
    bic_index: int
    faulty_path: str
    touched: tuple[tuple[str, ...], ...]  # per-commit touch-set
    releases: tuple[Release, ...]
    seed: int
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._index.update({c: i for i, c in enumerate(self.commits)})

    @property
    def bic_commit(self) -> str:
        return self.commits[self.bic_index]

    def index_of(self, commit: str) -> int:
        try:
            return self._index[commit]
        except KeyError:
            raise UnknownCommitError(f"unknown sim commit {commit!r}") from None


def sim_commit_date(index: int) -> datetime.date:
    return SIM_BASE_DATE + datetime.timedelta(days=index)


def make_sim_history(
    num_commits: int,
    bic_index: int,
    releases: list[tuple[str, str, int]] | None = None,
    files_per_commit: int = 3,
    seed: int = 0,
    faulty_path: str = "src/seeded_fault.c",
) -> SimHistory:
    """Build a deterministic synthetic linear history.

    Every commit touches `files_per_commit` distinct paths drawn from a
    mixed pool of source-like and doc-like names; the commit at
    `bic_index` additionally touches `faulty_path`. `releases` is a list
    of (label, kind, commit_index) triples.
    """
    if num_commits < 1:
        raise BadIndexError(f"num_commits must be >= 1, got {num_commits}")
    if not 0 <= bic_index < num_commits:
        raise BadIndexError(f"bic_index {bic_index} outside [0, {num_commits})")
    if files_per_commit < 1:
        raise BadIndexError("files_per_commit must be >= 1")

    rng = random.Random(seed)
    pool_sources = [f"src/unit_{i:03d}.c" for i in range(max(8, files_per_commit * 4))]
    pool_docs = [f"docs/note_{i:03d}.md" for i in range(8)]
    pool = pool_sources + pool_docs
    if faulty_path in pool:
        raise BadIndexError(f"faulty_path {faulty_path!r} collides with the sim pool")

    commits = tuple(f"c{i}" for i in range(num_commits))
    touched: list[tuple[str, ...]] = []
    for i in range(num_commits):
        picks = sorted(rng.sample(pool, files_per_commit))
        if i == bic_index:
            picks.append(faulty_path)
        touched.append(tuple(picks))

    rel_objs: list[Release] = []
    seen_idx: set[int] = set()
    seen_lbl: set[str] = set()
    for label, kind, idx in releases or []:
        if kind not in (MAJOR, MINOR):
            raise BadIndexError(f"unknown release kind {kind!r}")
        if not 0 <= idx < num_commits:
            raise BadIndexError(f"release index {idx} outside [0, {num_commits})")
        if idx in seen_idx or label in seen_lbl:
            raise BadIndexError(f"duplicate release {label!r} / index {idx}")
        seen_idx.add(idx)
        seen_lbl.add(label)
        rel_objs.append(Release(label, kind, commits[idx], sim_commit_date(idx)))
    rel_objs.sort(key=lambda r: r.date)

    return SimHistory(
        commits=commits,
        bic_index=bic_index,
        faulty_path=faulty_path,
        touched=tuple(touched),
        releases=tuple(rel_objs),
        seed=seed,
    )


class SimBackend(HistoryBackend):
    def __init__(self, history: SimHistory):
        self.history = history

    def list_releases(self) -> list[Release]:
        return list(self.history.releases)

    def commits_between(self, good: str, bad: str) -> HistoryRange:
        gi = self.history.index_of(good)
        bi = self.history.index_of(bad)
        if gi >= bi:
            raise NotAncestorError(f"{good} does not precede {bad}")
        return HistoryRange(good=good, bad=bad, commits=self.history.commits[gi + 1 : bi + 1])

    def diff_files(self, commit: str) -> FileDiff:
        idx = self.history.index_of(commit)
        if idx == 0:
            raise RootCommitError(f"{commit} has no parent to diff against")
        entries = tuple((p, MODIFIED) for p in self.history.touched[idx])
        return FileDiff(commit=commit, entries=entries)

    def root_commit(self) -> str:
        return self.history.commits[0]

    def head_commit(self) -> str:
        return self.history.commits[-1]

    def commit_date(self, commit: str) -> datetime.date:
        return sim_commit_date(self.history.index_of(commit))


# --- git ------------------------------------------------------------------


class GitBackend(HistoryBackend):
    """History via the git CLI, first-parent view.

    Subprocess launches are serialized per instance; the backend itself
    holds no mutable repository state.
    """

    def __init__(self, repo: Path | str, manifest: Path | str | None = None):
        self.repo = Path(repo)
        self.manifest = Path(manifest) if manifest is not None else None
        self._lock = threading.Lock()
        if shutil.which("git") is None:
            raise BackendUnavailableError("git executable not found on PATH")
        if not self.repo.is_dir():
            raise BackendUnavailableError(f"repository path {self.repo} does not exist")

    def _git(self, *args: str, ok_codes: tuple[int, ...] = (0,)) -> subprocess.CompletedProcess:
        cmd = ["git", "-C", str(self.repo), *args]
        with self._lock:
            proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode not in ok_codes:
            raise BackendFailureError(
                f"{' '.join(cmd)} exited {proc.returncode}: {proc.stderr.strip()}"
            )
        return proc

    def _resolve(self, commit: str) -> str:
        try:
            proc = self._git("rev-parse", "--verify", f"{commit}^{{commit}}")
        except BackendFailureError as exc:
            raise UnknownCommitError(f"unknown commit {commit!r}: {exc}") from None
        return proc.stdout.strip()

    def list_releases(self) -> list[Release]:
        if self.manifest is None:
            return []
        return parse_manifest(self.manifest)

    def commits_between(self, good: str, bad: str) -> HistoryRange:
        g = self._resolve(good)
        b = self._resolve(bad)
        proc = self._git("merge-base", "--is-ancestor", g, b, ok_codes=(0, 1))
        if proc.returncode != 0:
            raise NotAncestorError(f"{good} is not an ancestor of {bad}")
        out = self._git("rev-list", "--first-parent", "--reverse", b, f"^{g}")
        commits = tuple(out.stdout.split())
        if not commits:
            raise NotAncestorError(f"empty range: {good} == {bad}")
        # An ancestor reachable only through a second parent is not part of
        # the linearized view this tool bisects.
        parent = self._git("rev-parse", f"{commits[0]}^1").stdout.strip()
        if parent != g:
            raise NotAncestorError(f"{good} is not on the first-parent chain of {bad}")
        return HistoryRange(good=g, bad=b, commits=commits)

    def diff_files(self, commit: str) -> FileDiff:
        c = self._resolve(commit)
        try:
            parent = self._git("rev-parse", "--verify", f"{c}^1").stdout.strip()
        except BackendFailureError:
            raise RootCommitError(f"{commit} has no parent to diff against") from None
        out = self._git("diff", "--name-status", "--no-renames", "-z", parent, c)
        tokens = [t for t in out.stdout.split("\0") if t]
        entries: list[tuple[str, str]] = []
        for status, path in zip(tokens[0::2], tokens[1::2]):
            kind = status[0]
            if kind == "T":  # type change: content differs, treat as modified
                kind = MODIFIED
            if kind not in (MODIFIED, ADDED, DELETED):
                raise BackendFailureError(f"unexpected diff status {status!r} for {path!r}")
            entries.append((path, kind))
        return FileDiff(commit=c, entries=tuple(entries))

    def root_commit(self) -> str:
        out = self._git("rev-list", "--max-parents=0", "--first-parent", "HEAD")
        return out.stdout.split()[-1]

    def head_commit(self) -> str:
        return self._git("rev-parse", "HEAD").stdout.strip()

    def commit_date(self, commit: str) -> datetime.date:
        c = self._resolve(commit)
        out = self._git("show", "-s", "--format=%cs", c).stdout.strip()
        return datetime.date.fromisoformat(out)


# --- subversion -------------------------------------------------------------


class SvnBackend(HistoryBackend):
    """History via the svn CLI over repository-global revision numbers.

    Revisions on a single branch are already linear, so ranges are plain
    numeric intervals. Requires a reachable repository URL (or working
    copy path) and the svn client.
    """

    def __init__(self, url: str, manifest: Path | str | None = None):
        if shutil.which("svn") is None:
            raise BackendUnavailableError("svn executable not found on PATH")
        self.url = url.rstrip("/")
        self.manifest = Path(manifest) if manifest is not None else None
        self._lock = threading.Lock()

    def _svn(self, *args: str) -> subprocess.CompletedProcess:
        cmd = ["svn", "--non-interactive", *args]
        with self._lock:
            proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise BackendFailureError(
                f"{' '.join(cmd)} exited {proc.returncode}: {proc.stderr.strip()}"
            )
        return proc

    @staticmethod
    def _rev(commit: str) -> int:
        try:
            rev = int(commit.lstrip("r"))
        except ValueError:
            raise UnknownCommitError(f"svn revisions are numeric, got {commit!r}") from None
        if rev < 1:
            raise UnknownCommitError(f"svn revision must be >= 1, got {commit!r}")
        return rev

    def list_releases(self) -> list[Release]:
        if self.manifest is None:
            return []
        return parse_manifest(self.manifest)

    def commits_between(self, good: str, bad: str) -> HistoryRange:
        g, b = self._rev(good), self._rev(bad)
        head = int(self._svn("info", "--show-item", "revision", self.url).stdout.strip())
        if b > head:
            raise UnknownCommitError(f"revision {bad} beyond head {head}")
        if g >= b:
            raise NotAncestorError(f"{good} does not precede {bad}")
        return HistoryRange(good=str(g), bad=str(b), commits=tuple(str(r) for r in range(g + 1, b + 1)))

    def diff_files(self, commit: str) -> FileDiff:
        rev = self._rev(commit)
        out = self._svn("diff", "-c", str(rev), "--summarize", self.url)
        entries: list[tuple[str, str]] = []
        for line in out.stdout.splitlines():
            if not line.strip():
                continue
            status, path = line[0], line.split(None, 1)[1].strip()
            if path.startswith(self.url):
                path = path[len(self.url):].lstrip("/")
            if status == "R":  # replaced: content differs, treat as modified
                status = MODIFIED
            if status not in (MODIFIED, ADDED, DELETED):
                continue  # property-only changes and the like
            entries.append((path, status))
        return FileDiff(commit=str(rev), entries=tuple(entries))

    def root_commit(self) -> str:
        return "1"

    def head_commit(self) -> str:
        return self._svn("info", "--show-item", "revision", self.url).stdout.strip()

    def commit_date(self, commit: str) -> datetime.date:
        rev = self._rev(commit)
        out = self._svn("propget", "--revprop", "-r", str(rev), "svn:date", self.url)
        return datetime.date.fromisoformat(out.stdout.strip()[:10])
