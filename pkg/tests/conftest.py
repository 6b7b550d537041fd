"""Suite-wide pytest hooks.

The acceptance tests double as the release gate; the terminal summary
prints one PASS/FAIL/SKIP line per acceptance check so the outcome is
readable without scrolling through the full -v listing.
"""

ACCEPTANCE_CHECKS = [
    ("test_acceptance_bisection_recovery", "1 bisection recovers the seeded commit within the log2 probe budget"),
    ("test_acceptance_skip_robustness", "2 bisection stays correct with unresolvable revisions injected"),
    ("test_acceptance_formula_equivalence", "3 all six formulas match the brute-force reference"),
    ("test_acceptance_history_blend", "4 history signal and blended scoring vectors hold"),
    ("test_acceptance_metric_oracle", "5 Top-N/MFR/MAR match brute-force recomputation"),
    ("test_acceptance_benchmark_report", "6 synthetic 60-bug benchmark report matches recount"),
    ("test_acceptance_toy_compiler_end_to_end", "7 toy compiler repo isolates the seeded fault file"),
    ("test_acceptance_real_repo_smoke", "8 real repository differential smoke (gated)"),
]


def _outcomes(terminalreporter):
    table = {}
    for status in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(status, []):
            name = report.nodeid.split("::")[-1].split("[")[0]
            label = "FAIL" if status in ("failed", "error") else status.upper()
            # a single failure outweighs other parametrized outcomes
            if table.get(name) != "FAIL":
                table[name] = label
    return table


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = _outcomes(terminalreporter)
    if not any(name in table for name, _ in ACCEPTANCE_CHECKS):
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance checks:")
    for name, description in ACCEPTANCE_CHECKS:
        label = table.get(name, "MISSING")
        terminalreporter.write_line(f"  {label:7s} check {description}")
