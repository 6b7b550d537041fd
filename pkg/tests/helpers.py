"""Shared fixtures-in-code for the test suite: fake compilers, scripted
git repositories with deterministic dates, and an in-process CLI runner.
"""

import contextlib
import datetime
import io
import os
import subprocess
from pathlib import Path

from bisectfl.cli import main as cli_main

BASE_DATE = datetime.date(2000, 1, 1)

# A stand-in compiler: a Python script honoring the `cc <flags> <source>
# -o <out>` convention the oracle uses. It "compiles" by writing an
# executable Python program whose text is `emit_body`, after substituting
# @FLAGS@ with the sorted flag list (so flag-dependent behavior can be
# simulated). compile_exit / compile_sleep fake broken or hanging builds.
_FAKE_CC = """\
#!/usr/bin/env python3
import os, sys, time
time.sleep({sleep})
if {exit_code}:
    sys.stderr.write("synthetic compile error\\n")
    sys.exit({exit_code})
args = sys.argv[1:]
out = args[args.index("-o") + 1]
flags = sorted(a for a in args[: args.index("-o")] if a.startswith("-"))
body = {body!r}
body = body.replace("@FLAGS@", ",".join(flags))
with open(out, "w") as fh:
    fh.write("#!/usr/bin/env python3\\n" + body)
os.chmod(out, 0o755)
"""


def write_fake_compiler(path, emit_body, compile_exit=0, compile_sleep=0.0):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        _FAKE_CC.format(body=emit_body, exit_code=compile_exit, sleep=compile_sleep),
        encoding="utf-8",
    )
    path.chmod(0o755)
    return path


def git(repo, *args, env=None):
    proc = subprocess.run(
        ["git", "-C", str(repo), *args], capture_output=True, text=True, env=env
    )
    if proc.returncode != 0:
        raise RuntimeError(f"git {' '.join(args)} failed: {proc.stderr}")
    return proc.stdout


def commit_env(index):
    """Deterministic author/committer identity; commit i is dated i days
    after BASE_DATE (matching the sim backend's dating scheme)."""
    stamp = f"{(BASE_DATE + datetime.timedelta(days=index)).isoformat()}T12:00:00+00:00"
    env = dict(os.environ)
    env.update(
        {
            "GIT_AUTHOR_NAME": "Test Author",
            "GIT_AUTHOR_EMAIL": "author@example.org",
            "GIT_COMMITTER_NAME": "Test Author",
            "GIT_COMMITTER_EMAIL": "author@example.org",
            "GIT_AUTHOR_DATE": stamp,
            "GIT_COMMITTER_DATE": stamp,
            "GIT_CONFIG_GLOBAL": os.devnull,
            "GIT_CONFIG_SYSTEM": os.devnull,
        }
    )
    return env


def linear_repo(path, snapshots):
    """Build a linear git history. `snapshots` is a list of dicts mapping
    relative path -> content (None deletes the file); one commit each.
    Returns the full commit ids, oldest first."""
    repo = Path(path)
    repo.mkdir(parents=True, exist_ok=True)
    git(repo, "init", "-q", "-b", "main", env=commit_env(0))
    for i, changes in enumerate(snapshots):
        for rel, content in changes.items():
            target = repo / rel
            if content is None:
                target.unlink()
            else:
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_text(content, encoding="utf-8")
        git(repo, "add", "-A", env=commit_env(i))
        git(repo, "commit", "-q", "-m", f"commit {i}", env=commit_env(i))
    return git(repo, "rev-list", "--first-parent", "--reverse", "HEAD").split()


def run_cli(*argv, env=None):
    """Run the CLI in-process; returns (exit_code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    old_env = {}
    for key, value in (env or {}).items():
        old_env[key] = os.environ.get(key)
        os.environ[key] = value
    try:
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            try:
                code = cli_main(list(argv))
            except SystemExit as exc:
                code = exc.code if isinstance(exc.code, int) else 0
    finally:
        for key, value in old_env.items():
            if value is None:
                os.environ.pop(key, None)
            else:
                os.environ[key] = value
    return code, out.getvalue(), err.getvalue()
