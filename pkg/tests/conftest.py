from __future__ import annotations

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))


def straight_road(length=4800.0, **extra):
    """Scenario dict for a plain two-carriageway road."""
    cfg = {"seed": 1, "duration_s": 10, "geometry": {"mainline_length": length}}
    cfg.update(extra)
    return cfg


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
