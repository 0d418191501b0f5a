import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One line per acceptance criterion at the end of the run."""
    entries = []
    for status in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" in nodeid and "::" in nodeid:
                entries.append((nodeid.split("::")[-1], status.upper()))
    if entries:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, status in sorted(set(entries)):
            terminalreporter.write_line(f"{status:8s} {name}")
