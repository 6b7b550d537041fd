"""Failure oracles: decide Pass / Fail / Unresolvable for a revision.

The toolchain oracle compiles a witness program with the compiler built
from (or shipped for) a revision, runs the result, and applies a check.
Anything that prevents reaching a trustworthy answer (missing binary,
build breakage, compile error, tool timeout) is an Unresolvable verdict,
never an exception: bisection treats those revisions as skippable.

Verdicts are cached in an append-only line file keyed by a digest of
(revision, compile config, program content, check), so re-runs of the
same case never re-invoke the toolchain.
"""

from __future__ import annotations

import hashlib
import logging
import os
import shlex
import subprocess
import sys
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

from filelock import FileLock

from .errors import (
    BinaryNotFoundError,
    BuildFailedError,
    ConfigParseError,
    ToolchainMissingError,
)
from .history import SimHistory

logger = logging.getLogger(__name__)

PASS = "PASS"
FAIL = "FAIL"
UNRESOLVABLE = "UNRESOLVABLE"

ENV_TOOLCHAIN_TIMEOUT = "BISECTFL_TOOLCHAIN_TIMEOUT_S"
ENV_RUN_TIMEOUT = "BISECTFL_RUN_TIMEOUT_S"
ENV_CACHE = "BISECTFL_CACHE"

DEFAULT_TOOLCHAIN_TIMEOUT_S = 300.0
DEFAULT_RUN_TIMEOUT_S = 10.0


def _env_float(name: str, default: float) -> float:
    raw = os.environ.get(name)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        logger.warning("ignoring non-numeric %s=%r", name, raw)
        return default


@dataclass(frozen=True)
class Verdict:
    status: str
    reason: str = ""

    def __post_init__(self) -> None:
        if self.status not in (PASS, FAIL, UNRESOLVABLE):
            raise ValueError(f"bad verdict status {self.status!r}")
        if self.status == UNRESOLVABLE and not self.reason:
            raise ValueError("unresolvable verdicts must carry a reason")

    @property
    def is_pass(self) -> bool:
        return self.status == PASS

    @property
    def is_fail(self) -> bool:
        return self.status == FAIL

    @property
    def is_unresolvable(self) -> bool:
        return self.status == UNRESOLVABLE


def passing() -> Verdict:
    return Verdict(PASS)


def failing() -> Verdict:
    return Verdict(FAIL)


def unresolvable(reason: str) -> Verdict:
    return Verdict(UNRESOLVABLE, reason)


@dataclass(frozen=True)
class CompileConfig:
    flags: tuple[str, ...]
    language: str = "c"

    def __post_init__(self) -> None:
        if not self.flags:
            raise ConfigParseError("compile config needs at least one flag")
        for flag in self.flags:
            if not flag or flag.split() != [flag]:
                raise ConfigParseError(f"bad compiler flag {flag!r}")


EXPECTED_OUTPUT = "expected_output"
DIFFERENTIAL = "differential"
ABNORMAL_TERMINATION = "abnormal_termination"


@dataclass(frozen=True)
class FailureCheck:
    """What counts as the bug reproducing.

    expected_output:      stdout and exit code must match byte-exactly,
                          anything else is the failure.
    differential:         same revision compiled under baseline_flags is
                          the reference; diverging stdout/exit fails.
    abnormal_termination: a clean zero exit passes; nonzero exit, signal
                          death or a run timeout is the failure.
    """

    kind: str
    expected_stdout: str = ""
    expected_exit: int = 0
    baseline_flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in (EXPECTED_OUTPUT, DIFFERENTIAL, ABNORMAL_TERMINATION):
            raise ConfigParseError(f"unknown check kind {self.kind!r}")
        if self.kind == DIFFERENTIAL and not self.baseline_flags:
            raise ConfigParseError("differential check needs baseline flags")

    def digest_text(self) -> str:
        return "|".join(
            [self.kind, repr(self.expected_stdout), str(self.expected_exit), " ".join(self.baseline_flags)]
        )


@dataclass(frozen=True)
class TestProgram:
    __test__ = False  # not a test class, despite the name

    source: Path
    check: FailureCheck


PREBUILT = "prebuilt"
BUILD = "build"
SCRIPTED = "scripted"


@dataclass(frozen=True)
class BinarySource:
    """Where the compiler under test comes from, per revision.

    prebuilt: path_template with {rev} names an existing binary; an
              optional fallback source is tried when it is missing.
    build:    build_script is executed as `script <rev> <prefix>`; the
              compiler then lives at <prefix>/compiler_relpath. Builds
              are memoized per prefix and guarded by an advisory lock.
    scripted: command_template with {rev} runs; its last stdout line is
              the compiler path.
    """

    kind: str
    path_template: str = ""
    build_script: str = ""
    prefix_template: str = ""
    compiler_relpath: str = ""
    command_template: str = ""
    fallback: "BinarySource | None" = None

    def __post_init__(self) -> None:
        if self.kind == PREBUILT:
            if "{rev}" not in self.path_template:
                raise ConfigParseError("prebuilt path_template must contain {rev}")
        elif self.kind == BUILD:
            if "{rev}" not in self.prefix_template:
                raise ConfigParseError("build prefix_template must contain {rev}")
            if not self.build_script or not self.compiler_relpath:
                raise ConfigParseError("build source needs build_script and compiler_relpath")
        elif self.kind == SCRIPTED:
            if "{rev}" not in self.command_template:
                raise ConfigParseError("scripted command_template must contain {rev}")
        else:
            raise ConfigParseError(f"unknown binary source kind {self.kind!r}")


_BUILD_MARKER = ".bisectfl-built"


def resolve_binary(
    source: BinarySource,
    revision: str,
    workdir: Path | None = None,
    timeout: float | None = None,
) -> Path:
    """Return the compiler executable for `revision`, building if needed."""
    if timeout is None:
        timeout = _env_float(ENV_TOOLCHAIN_TIMEOUT, DEFAULT_TOOLCHAIN_TIMEOUT_S)

    if source.kind == PREBUILT:
        path = Path(source.path_template.format(rev=revision))
        if path.exists():
            return path
        if source.fallback is not None:
            return resolve_binary(source.fallback, revision, workdir, timeout)
        raise BinaryNotFoundError(f"no prebuilt binary at {path} and no fallback configured")

    if source.kind == BUILD:
        prefix = Path(source.prefix_template.format(rev=revision))
        compiler = prefix / source.compiler_relpath
        marker = prefix / _BUILD_MARKER
        if marker.exists() and compiler.exists():
            return compiler
        prefix.parent.mkdir(parents=True, exist_ok=True)
        with FileLock(str(prefix) + ".lock"):
            if marker.exists() and compiler.exists():
                return compiler  # another process finished the build first
            script = source.build_script
            cmd = [sys.executable, script] if script.endswith(".py") else [script]
            cmd += [revision, str(prefix)]
            try:
                proc = subprocess.run(
                    cmd,
                    cwd=str(workdir) if workdir else None,
                    capture_output=True,
                    text=True,
                    timeout=timeout,
                )
            except subprocess.TimeoutExpired:
                raise BuildFailedError(f"build of {revision} timed out after {timeout}s") from None
            except OSError as exc:
                raise BuildFailedError(f"cannot run build script {script!r}: {exc}") from exc
            if proc.returncode != 0:
                tail = (proc.stdout + proc.stderr)[-2000:]
                raise BuildFailedError(f"build of {revision} exited {proc.returncode}:\n{tail}")
            if not compiler.exists():
                raise BuildFailedError(f"build of {revision} left no compiler at {compiler}")
            marker.write_text("ok\n", encoding="utf-8")
        return compiler

    # scripted
    cmd = shlex.split(source.command_template.format(rev=revision))
    try:
        proc = subprocess.run(
            cmd,
            cwd=str(workdir) if workdir else None,
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except subprocess.TimeoutExpired:
        raise BuildFailedError(f"resolver command for {revision} timed out") from None
    except OSError as exc:
        raise BuildFailedError(f"cannot run resolver command: {exc}") from exc
    if proc.returncode != 0:
        raise BuildFailedError(f"resolver command exited {proc.returncode}: {proc.stderr[-500:]}")
    lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
    if not lines:
        raise BinaryNotFoundError("resolver command printed no path")
    path = Path(lines[-1].strip())
    if not path.exists():
        raise BinaryNotFoundError(f"resolver said {path} but nothing is there")
    return path


def make_cache_key(
    revision: str, config: CompileConfig, program_digest: str, check: FailureCheck
) -> str:
    text = "\n".join(
        [revision, config.language, " ".join(config.flags), program_digest, check.digest_text()]
    )
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class VerdictCache:
    """Append-only verdict store: one `<key> <STATUS> [reason]` line each.

    A file that fails to parse is reported once and treated as empty;
    existing bytes are left alone and new entries append after them.
    """

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._mem: dict[str, Verdict] = {}
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        parsed: dict[str, Verdict] = {}
        try:
            for lineno, line in enumerate(self.path.read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                parts = line.split(maxsplit=2)
                if len(parts) < 2 or parts[1] not in (PASS, FAIL, UNRESOLVABLE):
                    raise ValueError(f"line {lineno}: {line!r}")
                key, status = parts[0], parts[1]
                reason = parts[2] if len(parts) > 2 else ""
                if status == UNRESOLVABLE and not reason:
                    raise ValueError(f"line {lineno}: unresolvable without reason")
                parsed[key] = Verdict(status, reason)
        except (ValueError, UnicodeDecodeError) as exc:
            logger.warning("verdict cache %s is corrupt (%s); starting empty", self.path, exc)
            self._mem = {}
            return
        self._mem = parsed

    def __len__(self) -> int:
        return len(self._mem)

    def lookup(self, key: str) -> Verdict | None:
        with self._lock:
            return self._mem.get(key)

    def store(self, key: str, verdict: Verdict) -> None:
        with self._lock:
            if key in self._mem:
                return
            self._mem[key] = verdict
            line = f"{key} {verdict.status}"
            if verdict.reason:
                line += f" {verdict.reason}"
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


class ToolchainOracle:
    """Compile-and-run oracle against a real (or toy) compiler."""

    def __init__(
        self,
        source: BinarySource,
        config: CompileConfig,
        program: TestProgram,
        cache: VerdictCache | None = None,
        workdir: Path | None = None,
        toolchain_timeout: float | None = None,
        run_timeout: float | None = None,
    ):
        self.source = source
        self.config = config
        self.program = program
        self.cache = cache
        self.workdir = workdir
        self.toolchain_timeout = (
            toolchain_timeout
            if toolchain_timeout is not None
            else _env_float(ENV_TOOLCHAIN_TIMEOUT, DEFAULT_TOOLCHAIN_TIMEOUT_S)
        )
        self.run_timeout = (
            run_timeout if run_timeout is not None else _env_float(ENV_RUN_TIMEOUT, DEFAULT_RUN_TIMEOUT_S)
        )
        self.compile_invocations = 0
        self.run_invocations = 0
        try:
            self._program_digest = hashlib.sha256(program.source.read_bytes()).hexdigest()
        except OSError as exc:
            raise ConfigParseError(f"cannot read witness program {program.source}: {exc}") from exc

    def cache_key(self, revision: str) -> str:
        return make_cache_key(revision, self.config, self._program_digest, self.program.check)

    def evaluate(self, revision: str) -> Verdict:
        key = self.cache_key(revision)
        if self.cache is not None:
            hit = self.cache.lookup(key)
            if hit is not None:
                return hit
        verdict = self._evaluate_uncached(revision)
        if self.cache is not None:
            self.cache.store(key, verdict)
        return verdict

    def _evaluate_uncached(self, revision: str) -> Verdict:
        try:
            compiler = resolve_binary(
                self.source, revision, workdir=self.workdir, timeout=self.toolchain_timeout
            )
        except (BuildFailedError, BinaryNotFoundError) as exc:
            return unresolvable(f"build: {exc}")
        if not os.access(compiler, os.X_OK):
            raise ToolchainMissingError(f"{compiler} exists but is not executable")

        check = self.program.check
        with tempfile.TemporaryDirectory(prefix="bisectfl-probe-") as td:
            tdir = Path(td)
            if check.kind == DIFFERENTIAL:
                base = self._compile_and_run(compiler, check.baseline_flags, tdir / "base.bin")
                if isinstance(base, Verdict):
                    return base
                probe = self._compile_and_run(compiler, self.config.flags, tdir / "probe.bin")
                if isinstance(probe, Verdict):
                    return probe
                return failing() if base != probe else passing()

            outcome = self._compile_and_run(compiler, self.config.flags, tdir / "probe.bin")
            if isinstance(outcome, Verdict):
                if outcome.is_unresolvable and outcome.reason == "run: timeout":
                    # A hang is the reproduction when the bug *is* abnormal
                    # termination; otherwise nothing trustworthy was observed.
                    return failing() if check.kind == ABNORMAL_TERMINATION else outcome
                return outcome
            stdout, returncode = outcome
            if check.kind == ABNORMAL_TERMINATION:
                return passing() if returncode == 0 else failing()
            matches = stdout == check.expected_stdout.encode("utf-8") and returncode == check.expected_exit
            return passing() if matches else failing()

    def _compile_and_run(
        self, compiler: Path, flags: tuple[str, ...], exe: Path
    ) -> "Verdict | tuple[bytes, int]":
        """Returns (stdout, exit code), or an Unresolvable verdict."""
        cmd = [str(compiler), *flags, str(self.program.source), "-o", str(exe)]
        self.compile_invocations += 1
        try:
            proc = subprocess.run(cmd, capture_output=True, timeout=self.toolchain_timeout)
        except subprocess.TimeoutExpired:
            return unresolvable("compile: timeout")
        except OSError as exc:
            raise ToolchainMissingError(f"cannot execute compiler {compiler}: {exc}") from exc
        if proc.returncode != 0:
            return unresolvable(f"compile: exit {proc.returncode}")
        if not exe.exists():
            return unresolvable("compile: no output binary")

        self.run_invocations += 1
        try:
            run = subprocess.run([str(exe)], capture_output=True, timeout=self.run_timeout, cwd=exe.parent)
        except subprocess.TimeoutExpired:
            return unresolvable("run: timeout")
        returncode = run.returncode
        if returncode < 0:
            returncode = 128 - returncode  # signal death stays nonzero and distinct
        return run.stdout, returncode


class SimOracle:
    """Paired with a SimHistory: commits at or after the seeded fault fail.

    Counts evaluate() calls so tests can assert probe budgets and that
    memoized layers above never re-ask.
    """

    def __init__(self, history: SimHistory, unresolvable_indices: frozenset[int] | set[int] = frozenset()):
        self.history = history
        self.unresolvable_indices = frozenset(unresolvable_indices)
        self.eval_count = 0

    def evaluate(self, revision: str) -> Verdict:
        self.eval_count += 1
        idx = self.history.index_of(revision)
        if idx in self.unresolvable_indices:
            return unresolvable("sim: marked unbuildable")
        return failing() if idx >= self.history.bic_index else passing()
