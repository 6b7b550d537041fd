"""Compiler fault isolation toolkit.

Finds the commit that introduced a compiler bug by bisecting release
ranges against a pass/fail oracle, localizes faults from coverage
spectra with classic suspiciousness formulas (optionally blended with
modification history), and evaluates both kinds of output against
ground truth.
"""

from .bisection import (
    BugCase,
    IsolationEngine,
    IsolationReport,
    load_case,
    run_isolation,
)
from .errors import BisectFLError
from .evaluation import build_report, overlap, parse_truth
from .history import (
    FileDiff,
    GitBackend,
    HistoryRange,
    Release,
    SimBackend,
    SvnBackend,
    filter_source_files,
    make_sim_history,
)
from .oracle import (
    BinarySource,
    CompileConfig,
    FailureCheck,
    SimOracle,
    TestProgram,
    ToolchainOracle,
    Verdict,
    VerdictCache,
)
from .sbfl import (
    CoverageRun,
    Ranking,
    StatementCounts,
    StatementId,
    aggregate_file,
    build_spectrum,
    histrum,
    hsfl_score,
    rank_files,
    rank_spectrum,
    score,
)

__version__ = "0.1.0"
