"""Command line interface.

Four subcommands: `bisect` isolates a bug-inducing commit from a case
file, `score` ranks files from a coverage spectrum, `eval` compares
technique results against ground truth, `simulate` writes a synthetic
demo case. Primary outputs go to files; stdout carries a one-line
summary per invocation.

Exit codes: 0 success, 1 configuration or toolchain errors, 2 when a
bisection ends inconclusive.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .bisection import load_case, run_isolation, write_report
from .errors import BisectFLError, ConfigParseError
from .evaluation import (
    build_report,
    load_results_dir,
    metric_report_to_dict,
    parse_truth,
    render_text,
)
from .fixtures import DEFAULT_SIM_SEED, write_sim_bundle
from .history import MAJOR, MINOR
from .sbfl import (
    BEST_CASE,
    DETERMINISTIC,
    FORMULAS,
    TIE_POLICIES,
    parse_history_stats,
    parse_spectrum,
    rank_spectrum,
    write_ranking,
)

ENV_CONFIG = "BISECTFL_CONFIG"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONCLUSIVE = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract reserves 2 for
    inconclusive bisections, so usage errors are remapped to 1."""

    def error(self, message):  # noqa: A002 - argparse API
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


@dataclass
class GlobalConfig:
    cache: str | None = None
    toolchain_timeout_s: float | None = None
    run_timeout_s: float | None = None
    out_dir: Path = Path(".")


def load_global_config(path_arg: str | None) -> GlobalConfig:
    """Read the optional global config (--config or $BISECTFL_CONFIG);
    relative paths inside resolve against the config file's directory."""
    path = path_arg or os.environ.get(ENV_CONFIG)
    if not path:
        return GlobalConfig()
    cfg_path = Path(path)
    try:
        data = json.loads(cfg_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigParseError(f"cannot read global config {path}: {exc}") from exc
    allowed = {"cache", "toolchain_timeout_s", "run_timeout_s", "out_dir"}
    if not isinstance(data, dict):
        raise ConfigParseError(f"{path}: expected a JSON object")
    unknown = set(data) - allowed
    if unknown:
        raise ConfigParseError(f"{path}: unknown keys {sorted(unknown)}")
    base = cfg_path.parent.resolve()

    conf = GlobalConfig()
    if data.get("out_dir") is not None:
        out_dir = Path(data["out_dir"])
        if not out_dir.is_absolute():
            out_dir = base / out_dir
        if not out_dir.is_dir():
            raise ConfigParseError(f"{path}: out_dir {out_dir} is not a directory")
        conf.out_dir = out_dir
    if data.get("cache") is not None:
        cache = Path(data["cache"])
        if not cache.is_absolute():
            cache = base / cache
        if not cache.parent.is_dir():
            raise ConfigParseError(f"{path}: cache directory {cache.parent} does not exist")
        conf.cache = str(cache)
    for key in ("toolchain_timeout_s", "run_timeout_s"):
        if data.get(key) is not None:
            try:
                value = float(data[key])
            except (TypeError, ValueError):
                raise ConfigParseError(f"{path}: {key} must be a number") from None
            if value <= 0:
                raise ConfigParseError(f"{path}: {key} must be positive")
            setattr(conf, key, value)
    return conf


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="bisectfl",
        description="Compiler fault isolation: commit bisection, spectrum scoring, evaluation.",
    )
    parser.add_argument("--config", help=f"global config file (default: ${ENV_CONFIG})")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="<command>")

    b = sub.add_parser("bisect", help="isolate the bug-inducing commit for a case")
    b.add_argument("--case", required=True, help="bug case file (JSON)")
    b.add_argument("--out", help="report path (default: <out_dir>/<bug>.report.json)")
    b.add_argument(
        "--exhaustive-majors",
        action="store_true",
        help="probe every major release instead of stopping at the first failing one",
    )
    b.add_argument("--max-probes", type=int, help="abort as inconclusive after this many oracle calls")
    b.set_defaults(func=cmd_bisect)

    s = sub.add_parser("score", help="rank files by suspiciousness from a coverage spectrum")
    s.add_argument("--spectrum", required=True, help="spectrum file (RUN/COV lines)")
    s.add_argument("--formula", choices=FORMULAS, default="ochiai", help="suspiciousness formula")
    s.add_argument("--dstar-power", type=int, default=2, help="exponent for dstar (default 2)")
    s.add_argument("--hsfl", action="store_true", help="blend scores with modification history")
    s.add_argument("--history", help="history stats file (MOD lines), required with --hsfl")
    s.add_argument("--alpha", type=float, default=0.5, help="history blend weight in [0,1]")
    s.add_argument("--bug-id", help="bug id stored in the ranking (default: spectrum file stem)")
    s.add_argument("--out", help="ranking path (default: <out_dir>/<bug>.ranking.json)")
    s.set_defaults(func=cmd_score)

    e = sub.add_parser("eval", help="score technique results against ground truth")
    e.add_argument("--truth", required=True, help="ground truth file (BUG/FAULTY lines)")
    e.add_argument("--results", required=True, help="directory with one subdirectory per technique")
    e.add_argument(
        "--policy",
        choices=TIE_POLICIES,
        default=BEST_CASE,
        help="tie credit for ranked outputs; unordered sets always count worst-case",
    )
    e.add_argument("--out", help="report path (default: <out_dir>/metric_report.json)")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("simulate", help="write a deterministic synthetic case bundle")
    m.add_argument("--num-commits", type=int, required=True, help="history length")
    m.add_argument("--bic", type=int, required=True, help="index of the seeded bug-inducing commit")
    m.add_argument("--seed", type=int, default=DEFAULT_SIM_SEED, help=f"rng seed (default {DEFAULT_SIM_SEED})")
    m.add_argument("--files-per-commit", type=int, default=3, help="touched paths per commit")
    m.add_argument(
        "--releases",
        help="release layout as label:kind:index[,...] (default: derived from history length)",
    )
    m.add_argument("--out", help="bundle directory (default: <out_dir>/simcase)")
    m.set_defaults(func=cmd_simulate)
    return parser


def cmd_bisect(args, conf: GlobalConfig) -> int:
    if args.max_probes is not None and args.max_probes < 1:
        raise ConfigParseError("--max-probes must be >= 1")
    loaded = load_case(
        args.case,
        default_cache=conf.cache,
        toolchain_timeout=conf.toolchain_timeout_s,
        run_timeout=conf.run_timeout_s,
    )
    report, _engine = run_isolation(
        loaded, exhaustive_majors=args.exhaustive_majors, max_probes=args.max_probes
    )
    out = Path(args.out) if args.out else conf.out_dir / f"{report.bug_id}.report.json"
    write_report(report, out)
    if report.inconclusive:
        span = len(report.narrowed_range) if report.narrowed_range else 0
        print(
            f"bisect {report.bug_id}: inconclusive ({report.inconclusive_reason}), "
            f"{span} commits remain, {report.oracle_calls} probes -> {out}"
        )
        return EXIT_INCONCLUSIVE
    print(
        f"bisect {report.bug_id}: bic {report.bic}, {len(report.candidate_files)} candidate "
        f"file(s), {report.oracle_calls} probes -> {out}"
    )
    return EXIT_OK


def _read_text(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParseError(f"cannot read {what} {path}: {exc}") from exc


def cmd_score(args, conf: GlobalConfig) -> int:
    runs = parse_spectrum(_read_text(args.spectrum, "spectrum"), origin=args.spectrum)
    history = None
    if args.hsfl:
        if not args.history:
            raise ConfigParseError("--hsfl requires --history")
        history = parse_history_stats(_read_text(args.history, "history stats"), origin=args.history)
    elif args.history:
        raise ConfigParseError("--history only makes sense together with --hsfl")
    bug_id = args.bug_id or Path(args.spectrum).stem
    ranking = rank_spectrum(
        runs,
        args.formula,
        dstar_power=args.dstar_power,
        history=history,
        alpha=args.alpha,
        tie_policy=DETERMINISTIC,
        bug_id=bug_id,
    )
    out = Path(args.out) if args.out else conf.out_dir / f"{bug_id}.ranking.json"
    write_ranking(ranking, out)
    summary = f"score {bug_id}: {len(ranking.entries)} file(s) ranked with {args.formula}"
    if ranking.entries:
        top = ranking.entries[0]
        summary += f", top {top.path} ({top.score:g})"
    print(f"{summary} -> {out}")
    return EXIT_OK


def cmd_eval(args, conf: GlobalConfig) -> int:
    truths = parse_truth(_read_text(args.truth, "ground truth"), origin=args.truth)
    results = load_results_dir(args.results)
    report = build_report(results, truths, policy=args.policy)
    out = Path(args.out) if args.out else conf.out_dir / "metric_report.json"
    out.write_text(
        json.dumps(metric_report_to_dict(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    text_out = out.with_suffix(".txt")
    text_out.write_text(render_text(report), encoding="utf-8")
    print(
        f"eval: {len(report.rows)} technique(s) over {report.bugs} bugs, "
        f"policy {args.policy} -> {out} {text_out}"
    )
    return EXIT_OK


def _parse_releases_spec(spec: str) -> list[tuple[str, str, int]]:
    releases = []
    for part in spec.split(","):
        fields = part.strip().split(":")
        if len(fields) != 3 or fields[1] not in (MAJOR, MINOR):
            raise ConfigParseError(f"bad release spec {part!r}, expected label:major|minor:index")
        try:
            idx = int(fields[2])
        except ValueError:
            raise ConfigParseError(f"bad release index in {part!r}") from None
        releases.append((fields[0], fields[1], idx))
    return releases


def cmd_simulate(args, conf: GlobalConfig) -> int:
    releases = _parse_releases_spec(args.releases) if args.releases else None
    out = Path(args.out) if args.out else conf.out_dir / "simcase"
    case_path = write_sim_bundle(
        out,
        num_commits=args.num_commits,
        bic_index=args.bic,
        seed=args.seed,
        files_per_commit=args.files_per_commit,
        releases=releases,
    )
    print(
        f"simulate: {args.num_commits} commits, bic at {args.bic}, seed {args.seed} "
        f"-> {case_path.parent} (case.json, truth.txt, expected.json)"
    )
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        conf = load_global_config(args.config)
        return args.func(args, conf)
    except (BisectFLError, ValueError) as exc:
        print(f"bisectfl: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
