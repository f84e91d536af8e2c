from __future__ import annotations

import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def synthetic_experiment(tmp_path_factory):
    """The scaled three-network comparison, run once per session (about three minutes)."""
    from patchclust.experiment import run_synthetic_experiment

    out = tmp_path_factory.mktemp("synthetic_report")
    start = time.perf_counter()
    result = run_synthetic_experiment(out_dir=out)
    return result, out, time.perf_counter() - start


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Append ``(criterion, status, detail)`` lines; they are echoed in the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number, status, detail in sorted(lines, key=lambda x: x[0]):
        terminalreporter.write_line(f"[{status}] criterion {number:>2}: {detail}")
