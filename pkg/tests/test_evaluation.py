"""Ground truth parsing, rank resolution under tie policies, the
Top-N/MFR/MAR metrics, overlap regions, and results-directory loading."""

import json
import math

import pytest

from reference import ref_mar, ref_mfr, ref_top_n

from bisectfl.bisection import IsolationReport, write_report
from bisectfl.errors import (
    BugSetMismatchError,
    ConfigParseError,
    MissingTruthError,
    NotApplicableError,
    SpectrumFormatError,
)
from bisectfl.evaluation import (
    RANKED,
    UNORDERED,
    GroundTruth,
    TechniqueOutput,
    build_report,
    fault_ranks,
    format_truth,
    load_results_dir,
    mar,
    metric_report_to_dict,
    mfr,
    normalize_path,
    overlap,
    parse_truth,
    rank_of_first_fault,
    render_text,
    resolved_order,
    top_n,
)
from bisectfl.sbfl import RankEntry, Ranking, rank_files, write_ranking


def ranked(bug_id, *pairs):
    entries = tuple(RankEntry(path=p, score=s, rank=i + 1) for i, (p, s) in enumerate(pairs))
    return TechniqueOutput(bug_id=bug_id, kind=RANKED, ranking=Ranking(entries=entries, bug_id=bug_id))


def unordered(bug_id, *files):
    return TechniqueOutput(bug_id=bug_id, kind=UNORDERED, files=frozenset(files))


def truth(bug_id, *files):
    return GroundTruth(bug_id=bug_id, faulty_files=frozenset(files))


# --- paths and ground truth ---------------------------------------------------


@pytest.mark.parametrize(
    "raw,cooked",
    [
        ("src/x.c", "src/x.c"),
        ("./src/x.c", "src/x.c"),
        ("././a.c", "a.c"),
        ("dir/sub/", "dir/sub"),
        ("a\\b.c", "a/b.c"),
        ("  x.c  ", "x.c"),
    ],
)
def test_normalize_path(raw, cooked):
    assert normalize_path(raw) == cooked


TRUTH_TEXT = """\
# seeded faults
BUG gcc-59903
FAULTY ./gcc/ree.c

BUG llvm-204
FAULTY lib/opt.cpp
FAULTY lib/fold.cpp
"""


def test_parse_truth_happy_path_and_round_trip():
    truths = parse_truth(TRUTH_TEXT)
    assert set(truths) == {"gcc-59903", "llvm-204"}
    assert truths["gcc-59903"].faulty_files == {"gcc/ree.c"}  # normalized
    assert truths["llvm-204"].faulty_files == {"lib/opt.cpp", "lib/fold.cpp"}
    assert parse_truth(format_truth(truths)) == truths


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("BUG a\nFAULTY x.c\nBUG a\nFAULTY y.c", "duplicate bug id"),
        ("BUG a\nFAULTY x.c\nFAULTY ./x.c", "duplicate faulty path"),
        ("FAULTY x.c", "FAULTY before any BUG"),
        ("BUG a", "no FAULTY lines"),
        ("BUG a\nBUG b\nFAULTY x.c", "no FAULTY lines"),
        ("BUG", "expected 'BUG <id>'"),
        ("BUG a\nBLAME x.c", "unknown directive"),
    ],
)
def test_parse_truth_grammar_errors(text, fragment):
    with pytest.raises(SpectrumFormatError, match=fragment):
        parse_truth(text)


def test_ground_truth_must_name_a_file():
    with pytest.raises(ValueError, match="no faulty files"):
        GroundTruth(bug_id="b", faulty_files=frozenset())


def test_technique_output_constructors_normalize():
    out = TechniqueOutput.from_ranking(
        Ranking(entries=(RankEntry(path="./src\\y.c", score=1.0, rank=1),), bug_id="b1")
    )
    assert out.kind == RANKED and out.ranking.entries[0].path == "src/y.c"
    report = IsolationReport(
        bug_id="b2",
        bic="c3",
        candidate_files=("./src/x.c",),
        no_candidates=False,
        inconclusive=False,
        narrowed_range=None,
        inconclusive_reason=None,
        oracle_calls=3,
        wall_time_s=0.1,
        probe_log=(),
    )
    out = TechniqueOutput.from_report(report)
    assert out.kind == UNORDERED and out.files == {"src/x.c"}


# --- rank resolution -------------------------------------------------------------


def test_resolved_order_credits_ties_by_policy():
    out = ranked("b", ("a.c", 0.9), ("b.c", 0.5), ("c.c", 0.5), ("d.c", 0.1))
    t = truth("b", "c.c")
    assert resolved_order(out, t, "best") == ["a.c", "c.c", "b.c", "d.c"]
    assert resolved_order(out, t, "worst") == ["a.c", "b.c", "c.c", "d.c"]
    assert resolved_order(out, t, "deterministic") == ["a.c", "b.c", "c.c", "d.c"]
    assert rank_of_first_fault(out, t, "best") == 2
    assert rank_of_first_fault(out, t, "worst") == 3


def test_unordered_sets_always_resolve_worst_case():
    out = unordered("b", "f1", "f2", "f3")
    t = truth("b", "f2")
    for policy in ("best", "worst", "deterministic"):
        assert resolved_order(out, t, policy) == ["f1", "f3", "f2"]
    assert resolved_order(unordered("b"), t) == []
    with pytest.raises(ValueError, match="tie policy"):
        resolved_order(out, t, "hopeful")


def test_single_fault_in_wide_candidate_set_ranks_last():
    files = [f"f{i}" for i in range(1, 7)]
    out = unordered("b", *files)
    t = truth("b", "f1")
    assert rank_of_first_fault(out, t) == 6
    assert top_n({"b": out}, {"b": t}, 5) == 0  # a Top-5 miss
    assert rank_of_first_fault(unordered("b", "f1"), t) == 1
    tie = ranked("b", *((f, 1.0) for f in files))
    assert rank_of_first_fault(tie, t, "best") == 1


def test_rank_of_first_fault_none_when_absent():
    out = ranked("b", ("x.c", 0.9))
    assert rank_of_first_fault(out, truth("b", "y.c")) is None


def test_fault_ranks_use_a_miss_sentinel():
    out = ranked("b", ("a.c", 0.9), ("b.c", 0.8))
    assert fault_ranks(out, truth("b", "b.c", "zz.c")) == [2, 3]


# --- metrics -----------------------------------------------------------------------


def metric_fixture():
    outputs = {
        "b1": ranked("b1", ("good.c", 0.9), ("fault.c", 0.8)),
        "b2": ranked("b2", ("fault.c", 0.9)),
        "b3": ranked("b3", *((f"f{i}", 1.0 - i / 10) for i in range(1, 8))),
    }
    truths = {
        "b1": truth("b1", "fault.c"),
        "b2": truth("b2", "fault.c"),
        "b3": truth("b3", "f7"),
    }
    return outputs, truths


def test_top_n_counts_hits():
    outputs, truths = metric_fixture()
    assert top_n(outputs, truths, 1) == 1
    assert top_n(outputs, truths, 2) == 2
    assert top_n(outputs, truths, 7) == 3
    ref_outputs = {
        "b1": ("ranked", [("good.c", 0.9), ("fault.c", 0.8)]),
        "b2": ("ranked", [("fault.c", 0.9)]),
        "b3": ("ranked", [(f"f{i}", 1.0 - i / 10) for i in range(1, 8)]),
    }
    ref_truths = {b: t.faulty_files for b, t in truths.items()}
    for n in (1, 2, 5, 7):
        assert top_n(outputs, truths, n) == ref_top_n(ref_outputs, ref_truths, n, "best")


def test_mfr_and_mar_worked_examples():
    outputs = {
        "b1": ranked("b1", ("fault.c", 0.9), ("x.c", 0.1)),
        "b2": ranked("b2", ("x.c", 0.9), ("y.c", 0.5), ("fault.c", 0.4)),
    }
    truths = {"b1": truth("b1", "fault.c"), "b2": truth("b2", "fault.c")}
    assert mfr(outputs, truths) == pytest.approx(2.0)  # ranks 1 and 3

    pair = {"b": ranked("b", ("x.c", 0.9), ("y.c", 0.8), ("z.c", 0.7))}
    pair_truth = {"b": truth("b", "x.c", "z.c")}
    assert mar(pair, pair_truth) == pytest.approx(2.0)  # ranks 1 and 3
    ref_outputs = {"b": ("ranked", [("x.c", 0.9), ("y.c", 0.8), ("z.c", 0.7)])}
    assert mar(pair, pair_truth) == pytest.approx(ref_mar(ref_outputs, {"b": {"x.c", "z.c"}}, "best"))


def test_mfr_charges_misses_with_length_plus_one():
    outputs = {"b": ranked("b", ("x.c", 0.9), ("y.c", 0.8))}
    truths = {"b": truth("b", "absent.c")}
    assert mfr(outputs, truths) == pytest.approx(3.0)
    assert mfr(outputs, truths) == pytest.approx(ref_mfr({"b": ("ranked", [("x.c", 0.9), ("y.c", 0.8)])}, {"b": {"absent.c"}}, "best"))


def test_rank_metrics_reject_unordered_outputs():
    outputs = {"b": unordered("b", "x.c")}
    truths = {"b": truth("b", "x.c")}
    with pytest.raises(NotApplicableError, match="MFR"):
        mfr(outputs, truths)
    with pytest.raises(NotApplicableError, match="MAR"):
        mar(outputs, truths)
    with pytest.raises(NotApplicableError):
        mfr({}, {})


def test_overlap_regions_partition_the_union():
    regions = overlap({"X": {"b1", "b2"}, "Y": {"b2", "b3"}})
    assert regions == {"X": 1, "Y": 1, "X&Y": 1}
    assert sum(regions.values()) == len({"b1", "b2", "b3"})
    three = overlap({"A": {"b1"}, "B": {"b1"}, "C": set()})
    assert three["A&B"] == 1 and three["C"] == 0 and "A&B&C" in three
    with pytest.raises(ValueError, match="1..4"):
        overlap({f"t{i}": set() for i in range(5)})


# --- report building ---------------------------------------------------------------


def test_build_report_mixes_ranked_and_unordered_techniques():
    outputs, truths = metric_fixture()
    sets = {
        "b1": unordered("b1", "fault.c"),
        "b2": unordered("b2", "fault.c", "other.c"),
        "b3": unordered("b3", "f1", "f7"),
    }
    report = build_report({"sbfl": outputs, "bisect": sets}, truths)
    assert report.bugs == 3
    assert [row.technique for row in report.rows] == ["bisect", "sbfl"]
    bisect_row, sbfl_row = report.rows
    # worst-case singletons: b1 rank 1, b2 rank 2, b3 rank 2
    assert bisect_row.top == {1: 1, 5: 3, 10: 3, 20: 3}
    assert bisect_row.mfr is None and bisect_row.mar is None
    assert sbfl_row.top == {1: 1, 5: 2, 10: 3, 20: 3}
    assert sbfl_row.mfr == pytest.approx((2 + 1 + 7) / 3)
    # bisect nails b1 only, sbfl nails b2 only: disjoint top-1 successes
    assert report.overlap_top1 == {"bisect": 1, "sbfl": 1, "bisect&sbfl": 0}


def test_build_report_averages_repeated_runs():
    truths = {"b1": truth("b1", "fault.c")}
    hit = {"b1": ranked("b1", ("fault.c", 0.9), ("x.c", 0.1))}
    miss = {"b1": ranked("b1", ("x.c", 0.9), ("fault.c", 0.1))}
    report = build_report({"jitter": [hit, miss], "steady": hit}, truths)
    jitter, steady = {r.technique: r for r in report.rows}["jitter"], {r.technique: r for r in report.rows}["steady"]
    assert jitter.runs == 2
    assert jitter.top[1] == pytest.approx(0.5) and isinstance(jitter.top[1], float)
    assert jitter.mfr == pytest.approx(1.5)
    assert steady.runs == 1 and steady.top[1] == 1 and isinstance(steady.top[1], int)
    # overlap uses the first run of each technique
    assert report.overlap_top1["jitter&steady"] == 1


def test_build_report_validates_inputs():
    truths = {"b1": truth("b1", "x.c")}
    one = {"b1": ranked("b1", ("x.c", 1.0))}
    two = {"b1": ranked("b1", ("x.c", 1.0)), "b2": ranked("b2", ("x.c", 1.0))}
    with pytest.raises(BugSetMismatchError, match="different bug sets"):
        build_report({"a": one, "b": two}, truths)
    with pytest.raises(BugSetMismatchError):
        build_report({"a": [one, two]}, truths)  # drift across runs
    with pytest.raises(MissingTruthError, match="b2"):
        build_report({"a": two}, {"b1": truth("b1", "x.c"), "b9": truth("b9", "y.c")})
    with pytest.raises(ConfigParseError, match="no technique results"):
        build_report({}, truths)
    with pytest.raises(ValueError, match="tie policy"):
        build_report({"a": one}, truths, policy="hopeful")


def test_report_serialization_and_text_rendering():
    outputs, truths = metric_fixture()
    sets = {b: unordered(b, "fault.c") for b in outputs}
    report = build_report({"sbfl": outputs, "bisect": sets}, truths)
    data = metric_report_to_dict(report)
    assert data["bugs"] == 3 and data["policy"] == "best"
    assert [t["technique"] for t in data["techniques"]] == ["bisect", "sbfl"]
    assert data["techniques"][0]["top"]["1"] == 2  # b1, b2 singleton hits; b3 wrong file
    assert data["techniques"][0]["mfr"] is None
    text = render_text(report)
    assert text.splitlines()[0].split() == [
        "technique", "runs", "bugs", "top1", "top5", "top10", "top20", "mfr", "mar",
    ]
    assert "n/a" in text
    assert "3.33" in text  # sbfl mfr (2+1+7)/3 rendered to two decimals
    assert "top-1 overlap" in text


# --- results directories --------------------------------------------------------------


def write_isolation(path, bug_id, files):
    report = IsolationReport(
        bug_id=bug_id,
        bic="c1",
        candidate_files=tuple(files),
        no_candidates=not files,
        inconclusive=False,
        narrowed_range=None,
        inconclusive_reason=None,
        oracle_calls=1,
        wall_time_s=0.0,
        probe_log=(),
    )
    write_report(report, path)


def test_load_results_dir_flat_layout(tmp_path):
    root = tmp_path / "res"
    (root / "bisect").mkdir(parents=True)
    (root / "ochiai").mkdir()
    write_isolation(root / "bisect" / "b1.json", "b1", ["src/x.c"])
    write_isolation(root / "bisect" / "b2.json", "b2", [])
    write_ranking(rank_files({"src/x.c": 1.0}, bug_id="b1"), root / "ochiai" / "b1.json")
    write_ranking(rank_files({"src/y.c": 0.5}, bug_id="b2"), root / "ochiai" / "b2.json")
    results = load_results_dir(root)
    assert set(results) == {"bisect", "ochiai"}
    assert all(len(runs) == 1 for runs in results.values())
    assert results["bisect"][0]["b1"].kind == UNORDERED
    assert results["ochiai"][0]["b2"].kind == RANKED
    assert set(results["bisect"][0]) == {"b1", "b2"}


def test_load_results_dir_run_layout(tmp_path):
    root = tmp_path / "res"
    for run in ("run1", "run2"):
        d = root / "sbfl" / run
        d.mkdir(parents=True)
        write_ranking(rank_files({"x.c": 1.0}, bug_id="b1"), d / "b1.json")
    results = load_results_dir(root)
    assert len(results["sbfl"]) == 2


def test_load_results_dir_bug_id_defaults_to_stem(tmp_path):
    root = tmp_path / "res"
    (root / "t").mkdir(parents=True)
    write_ranking(rank_files({"x.c": 1.0}), root / "t" / "bug042.json")  # empty bug_id
    results = load_results_dir(root)
    assert set(results["t"][0]) == {"bug042"}


def test_load_results_dir_error_cases(tmp_path):
    with pytest.raises(ConfigParseError, match="does not exist"):
        load_results_dir(tmp_path / "nope")
    empty_root = tmp_path / "empty"
    empty_root.mkdir()
    with pytest.raises(ConfigParseError, match="no technique directories"):
        load_results_dir(empty_root)
    root = tmp_path / "res"
    (root / "t").mkdir(parents=True)
    with pytest.raises(ConfigParseError, match="no result files"):
        load_results_dir(root)
    (root / "t" / "odd.json").write_text(json.dumps({"foo": 1}), encoding="utf-8")
    with pytest.raises(ConfigParseError, match="neither a ranking nor an isolation report"):
        load_results_dir(root)
    (root / "t" / "odd.json").unlink()
    write_ranking(rank_files({"x.c": 1.0}, bug_id="dup"), root / "t" / "a.json")
    write_ranking(rank_files({"y.c": 1.0}, bug_id="dup"), root / "t" / "b.json")
    with pytest.raises(ConfigParseError, match="duplicate bug id"):
        load_results_dir(root)
