import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tadiag.synthetic import SyntheticSpec, generate_synthetic  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def small_synthetic():
    """A seeded synthetic benchmark loaded through the regular validators."""
    data = generate_synthetic(SyntheticSpec(seed=7, n_videos=150, n_predictions=300))
    dataset, preds = data.load()
    return data, dataset, preds


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
