import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import criteria  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not criteria.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for letter in sorted(criteria.LINES):
        terminalreporter.write_line(criteria.LINES[letter])
