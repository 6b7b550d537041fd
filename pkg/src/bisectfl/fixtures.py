"""Reproducible demo and test fixtures.

Two generators live here:

  * write_sim_bundle: a self-contained simulated bug case (case config,
    ground truth, expected outcome) that `bisectfl bisect` can run.
    Byte-identical for identical parameters.

  * make_toy_case: a real git repository holding a tiny "toy" compiler
    (a let/print integer expression language compiled to Python), with
    a seeded wrong-code bug: from one commit on, the -O1 constant
    folder evaluates `a - b` as `b - a`. The generated case file drives
    the full pipeline end to end through actual builds and runs.
"""

from __future__ import annotations

import datetime
import json
import os
import subprocess
from dataclasses import dataclass
from pathlib import Path

from .errors import BackendFailureError
from .history import MAJOR, MINOR

DEFAULT_SIM_SEED = 1729

TOY_BIC_INDEX = 31
TOY_NUM_COMMITS = 50
TOY_FAULTY_FILE = "src/constfold.py"
TOY_BASE_DATE = datetime.datetime(2021, 1, 1, 12, 0, 0, tzinfo=datetime.timezone.utc)
TOY_RELEASES = [
    ("1.0", MAJOR, 8),
    ("2.0", MAJOR, 20),
    ("2.0.1", MINOR, 26),
    ("2.0.2", MINOR, 30),
    ("2.0.3", MINOR, 36),
    ("3.0", MAJOR, 44),
]


def default_sim_releases(num_commits: int) -> list[tuple[str, str, int]]:
    """Deterministic release placement for generated sim cases: three
    majors at the quartiles, a minor behind each where room allows."""
    if num_commits < 8:
        return []
    quarter = num_commits // 4
    layout = [
        ("1.0", MAJOR, quarter),
        ("2.0", MAJOR, 2 * quarter),
        ("3.0", MAJOR, 3 * quarter),
    ]
    used = {idx for _, _, idx in layout}
    for k, major_idx in (("1", quarter), ("2", 2 * quarter), ("3", 3 * quarter)):
        minor_idx = major_idx + quarter // 2
        if minor_idx < num_commits and minor_idx not in used:
            layout.append((f"{k}.0.1", MINOR, minor_idx))
            used.add(minor_idx)
    return sorted(layout, key=lambda r: r[2])


def write_sim_bundle(
    out_dir: Path | str,
    num_commits: int,
    bic_index: int,
    seed: int = DEFAULT_SIM_SEED,
    files_per_commit: int = 3,
    releases: list[tuple[str, str, int]] | None = None,
) -> Path:
    """Write case.json, truth.txt and expected.json; returns the case path.

    Imports stay inside to avoid a dependency cycle: the engine imports
    nothing from this module.
    """
    from .bisection import BugCase, IsolationEngine
    from .history import SimBackend, make_sim_history
    from .oracle import SimOracle

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if releases is None:
        releases = default_sim_releases(num_commits)
    history = make_sim_history(
        num_commits=num_commits,
        bic_index=bic_index,
        releases=releases,
        files_per_commit=files_per_commit,
        seed=seed,
    )

    case_obj = {
        "id": f"sim-{num_commits}-{bic_index}-{seed}",
        "backend": {
            "kind": "sim",
            "num_commits": num_commits,
            "bic_index": bic_index,
            "files_per_commit": files_per_commit,
            "seed": seed,
            "releases": [list(r) for r in releases],
        },
        "bad_revision": history.commits[-1],
        "source_pattern": "preset:sim",
    }
    case_path = out / "case.json"
    case_path.write_text(json.dumps(case_obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    case = BugCase(
        bug_id=case_obj["id"], bad_revision=history.commits[-1], source_pattern="preset:sim"
    )
    engine = IsolationEngine(case, SimBackend(history), SimOracle(history))
    report = engine.run()
    expected = {
        "bic": report.bic,
        "candidate_files": sorted(report.candidate_files),
        "oracle_calls": report.oracle_calls,
    }
    (out / "expected.json").write_text(
        json.dumps(expected, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / "truth.txt").write_text(
        f"BUG {case_obj['id']}\nFAULTY {history.faulty_path}\n", encoding="utf-8"
    )
    return case_path


# --- toy compiler repository -------------------------------------------------


_TOYCC = '''\
#!/usr/bin/env python3
"""toycc: compile a .toy program into an executable Python script."""
import argparse
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.join(HERE, "src"))

import codegen
import lexer
import parser as toyparser


def main():
    ap = argparse.ArgumentParser(prog="toycc")
    ap.add_argument("-O0", dest="opt", action="store_const", const=0)
    ap.add_argument("-O1", dest="opt", action="store_const", const=1)
    ap.add_argument("source")
    ap.add_argument("-o", dest="output", required=True)
    args = ap.parse_args()
    opt = args.opt if args.opt is not None else 0
    with open(args.source, encoding="utf-8") as fh:
        text = fh.read()
    code = codegen.emit(toyparser.parse(lexer.tokenize(text)), opt)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(code)
    os.chmod(args.output, 0o755)
    return 0


if __name__ == "__main__":
    sys.exit(main())
'''

_LEXER = '''\
"""Tokenizer for the toy language."""

KEYWORDS = {"let", "print"}


def tokenize(text):
    tokens = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch in " \\t\\n":
            i += 1
            continue
        if ch.isdigit():
            j = i
            while j < len(text) and text[j].isdigit():
                j += 1
            tokens.append(("int", int(text[i:j])))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            tokens.append(("kw", word) if word in KEYWORDS else ("name", word))
            i = j
            continue
        if ch in "+-*=()":
            tokens.append(("op", ch))
            i += 1
            continue
        raise SyntaxError(f"stray character {ch!r}")
    return tokens
'''

_PARSER = '''\
"""Recursive descent parser producing tuple ASTs."""


class Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else ("eof", None)

    def take(self, kind, value=None):
        tok = self.peek()
        if tok[0] != kind or (value is not None and tok[1] != value):
            raise SyntaxError(f"expected {kind} {value}, got {tok}")
        self.pos += 1
        return tok

    def parse_program(self):
        stmts = []
        while self.peek()[0] != "eof":
            stmts.append(self.parse_statement())
        return stmts

    def parse_statement(self):
        kw = self.take("kw")[1]
        if kw == "let":
            name = self.take("name")[1]
            self.take("op", "=")
            return ("let", name, self.parse_expr())
        if kw == "print":
            return ("print", self.parse_expr())
        raise SyntaxError(f"unknown statement {kw!r}")

    def parse_expr(self):
        node = self.parse_term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take("op")[1]
            node = ("bin", op, node, self.parse_term())
        return node

    def parse_term(self):
        node = self.parse_factor()
        while self.peek() == ("op", "*"):
            self.take("op", "*")
            node = ("bin", "*", node, self.parse_factor())
        return node

    def parse_factor(self):
        tok = self.peek()
        if tok[0] == "int":
            self.take("int")
            return ("num", tok[1])
        if tok[0] == "name":
            self.take("name")
            return ("var", tok[1])
        if tok == ("op", "("):
            self.take("op", "(")
            node = self.parse_expr()
            self.take("op", ")")
            return node
        raise SyntaxError(f"unexpected token {tok}")


def parse(tokens):
    return Parser(tokens).parse_program()
'''

_CONSTFOLD_GOOD = '''\
"""Compile-time evaluation of constant subexpressions."""


def fold_binop(op, a, b):
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    raise ValueError(f"cannot fold operator {op!r}")


def fold_expr(node):
    if node[0] != "bin":
        return node
    _, op, lhs, rhs = node
    lhs = fold_expr(lhs)
    rhs = fold_expr(rhs)
    if lhs[0] == "num" and rhs[0] == "num":
        return ("num", fold_binop(op, lhs[1], rhs[1]))
    return ("bin", op, lhs, rhs)
'''

# The seeded wrong-code change: subtraction operands swapped.
_CONSTFOLD_BAD = _CONSTFOLD_GOOD.replace("        return a - b", "        return b - a")

_RUNTIME = '''\
"""Helper functions prepended to every compiled program."""

PREAMBLE = """\\
def _add(a, b):
    return a + b


def _sub(a, b):
    return a - b


def _mul(a, b):
    return a * b
"""

OPS = {"+": "_add", "-": "_sub", "*": "_mul"}
'''

_CODEGEN = '''\
"""Emit an executable Python script from the toy AST."""

import constfold
import runtime


def gen_expr(node, names):
    kind = node[0]
    if kind == "num":
        return str(node[1])
    if kind == "var":
        if node[1] not in names:
            raise NameError(f"undefined variable {node[1]!r}")
        return node[1]
    _, op, lhs, rhs = node
    return f"{runtime.OPS[op]}({gen_expr(lhs, names)}, {gen_expr(rhs, names)})"


def emit(stmts, opt):
    lines = ["#!/usr/bin/env python3", runtime.PREAMBLE]
    names = set()
    for st in stmts:
        if st[0] == "let":
            expr = constfold.fold_expr(st[2]) if opt >= 1 else st[2]
            lines.append(f"{st[1]} = {gen_expr(expr, names)}")
            names.add(st[1])
        else:
            expr = constfold.fold_expr(st[1]) if opt >= 1 else st[1]
            lines.append(f"print({gen_expr(expr, names)})")
    return "\\n".join(lines) + "\\n"
'''

_TOY_README = """\
toy compiler
============

Compiles the let/print integer expression language to Python.

    ./toycc -O1 program.toy -o program && ./program
"""

_TOY_CHANGELOG = """\
# changelog

- initial import
"""

_BUILD_SCRIPT = '''\
#!/usr/bin/env python3
"""Install the toy compiler for one revision: `build_toy.py <rev> <prefix>`.

Run with the repository as the working directory; extracts a pristine
`git archive` of the revision into the prefix.
"""
import io
import os
import subprocess
import sys
import tarfile


def main():
    rev, prefix = sys.argv[1], sys.argv[2]
    data = subprocess.run(["git", "archive", rev], check=True, capture_output=True).stdout
    os.makedirs(prefix, exist_ok=True)
    with tarfile.open(fileobj=io.BytesIO(data)) as tar:
        tar.extractall(prefix)
    os.chmod(os.path.join(prefix, "toycc"), 0o755)
    return 0


if __name__ == "__main__":
    sys.exit(main())
'''

_WITNESS = """\
let a = 6
let b = 7
print a * b
print 50 - 8
"""


@dataclass
class ToyRepo:
    path: Path
    commits: list[str]  # oldest first, full SHAs
    bic_index: int
    faulty_file: str

    @property
    def bic_commit(self) -> str:
        return self.commits[self.bic_index]


def _toy_commit_env(index: int) -> dict[str, str]:
    stamp = (TOY_BASE_DATE + datetime.timedelta(days=index)).isoformat()
    env = dict(os.environ)
    env.update(
        {
            "GIT_AUTHOR_NAME": "Toy Dev",
            "GIT_AUTHOR_EMAIL": "toydev@example.org",
            "GIT_COMMITTER_NAME": "Toy Dev",
            "GIT_COMMITTER_EMAIL": "toydev@example.org",
            "GIT_AUTHOR_DATE": stamp,
            "GIT_COMMITTER_DATE": stamp,
            "GIT_CONFIG_GLOBAL": os.devnull,
            "GIT_CONFIG_SYSTEM": os.devnull,
        }
    )
    return env


def _git(repo: Path, *args: str, env: dict[str, str] | None = None) -> str:
    proc = subprocess.run(
        ["git", "-C", str(repo), *args], capture_output=True, text=True, env=env
    )
    if proc.returncode != 0:
        raise BackendFailureError(f"git {' '.join(args)} failed: {proc.stderr.strip()}")
    return proc.stdout


def build_toy_repo(repo_dir: Path | str) -> ToyRepo:
    """Create the toy compiler git history (50 commits, fault at 31)."""
    repo = Path(repo_dir)
    repo.mkdir(parents=True, exist_ok=True)
    _git(repo, "init", "-q", "-b", "main", env=_toy_commit_env(0))

    def write(relpath: str, content: str) -> None:
        target = repo / relpath
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(content, encoding="utf-8")

    def append(relpath: str, content: str) -> None:
        with open(repo / relpath, "a", encoding="utf-8") as fh:
            fh.write(content)

    def commit(index: int, message: str) -> None:
        env = _toy_commit_env(index)
        _git(repo, "add", "-A", env=env)
        _git(repo, "commit", "-q", "-m", message, env=env)

    write("toycc", _TOYCC)
    (repo / "toycc").chmod(0o755)
    write("src/lexer.py", _LEXER)
    write("src/parser.py", _PARSER)
    write("src/codegen.py", _CODEGEN)
    write("src/constfold.py", _CONSTFOLD_GOOD)
    write("src/runtime.py", _RUNTIME)
    write("README.md", _TOY_README)
    write("docs/CHANGELOG.md", _TOY_CHANGELOG)
    commit(0, "initial import of the toy compiler")

    # Behavior-neutral churn so diffs have texture; constfold.py is left
    # alone until the fault lands, keeping the bug-inducing diff minimal.
    churn_targets = [
        "src/lexer.py",
        "docs/CHANGELOG.md",
        "src/parser.py",
        "README.md",
        "src/codegen.py",
        "src/runtime.py",
    ]
    for i in range(1, TOY_NUM_COMMITS):
        if i == TOY_BIC_INDEX:
            write("src/constfold.py", _CONSTFOLD_BAD)
            append("docs/CHANGELOG.md", "- constfold: fast-path subtraction folding\n")
            commit(i, "constfold: fast-path subtraction folding")
            continue
        target = churn_targets[i % len(churn_targets)]
        if target.endswith(".py"):
            append(target, f"\n# maintenance note {i}\n")
        else:
            append(target, f"- housekeeping note {i}\n")
        if i % 7 == 0 and target != "README.md":
            append("README.md", f"- see maintenance note {i}\n")
        commit(i, f"housekeeping pass {i} ({target})")

    shas = _git(repo, "rev-list", "--first-parent", "--reverse", "HEAD").split()
    if len(shas) != TOY_NUM_COMMITS:
        raise BackendFailureError(f"expected {TOY_NUM_COMMITS} commits, built {len(shas)}")
    return ToyRepo(path=repo, commits=shas, bic_index=TOY_BIC_INDEX, faulty_file=TOY_FAULTY_FILE)


def make_toy_case(workdir: Path | str) -> tuple[Path, ToyRepo]:
    """Build the toy repo plus everything `bisectfl bisect` needs around
    it: release manifest, witness program, build script, case config."""
    work = Path(workdir)
    work.mkdir(parents=True, exist_ok=True)
    toy = build_toy_repo(work / "repo")

    manifest_lines = ["# toy compiler releases"]
    for label, kind, idx in TOY_RELEASES:
        reldate = (TOY_BASE_DATE + datetime.timedelta(days=idx)).date().isoformat()
        manifest_lines.append(f"{label} {kind} {toy.commits[idx]} {reldate}")
    (work / "releases.manifest").write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")

    (work / "witness.toy").write_text(_WITNESS, encoding="utf-8")
    build_script = work / "build_toy.py"
    build_script.write_text(_BUILD_SCRIPT, encoding="utf-8")
    build_script.chmod(0o755)

    case_obj = {
        "id": "toy-subfold",
        "backend": {"kind": "git", "repo": "repo", "manifest": "releases.manifest"},
        "bad_revision": toy.commits[-1],
        "source_pattern": "preset:toy",
        "config": {"flags": ["-O1"], "language": "toy"},
        "program": {
            "source": "witness.toy",
            "check": {"kind": "expected_output", "stdout": "42\n42\n", "exit_code": 0},
        },
        "binary_source": {
            "kind": "build",
            "build_script": "build_toy.py",
            "prefix_template": "builds/{rev}",
            "compiler_relpath": "toycc",
        },
        "cache": "verdicts.cache",
    }
    case_path = work / "case.json"
    case_path.write_text(json.dumps(case_obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return case_path, toy
