import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fatigue_seq.lstm import TrainConfig, split_dataset, train  # noqa: E402
from fatigue_seq.synthetic import ScenarioConfig, generate_corpus  # noqa: E402


@pytest.fixture(scope="session")
def trained_n60():
    """Ten 600 s scenarios, N=60, k=1, default training; shared by slow tests."""
    t0 = time.perf_counter()
    ds = generate_corpus(ScenarioConfig(seed=0), 10, 60, 1)
    tr, va = split_dataset(ds, 0.2, seed=0)
    model, history = train(tr, TrainConfig(seed=0))
    return {"model": model, "train": tr, "val": va, "history": history, "dataset": ds,
            "seconds": time.perf_counter() - t0}


# one PASS/FAIL line per acceptance criterion, printed after the run

_CRITERIA = []


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _CRITERIA.append((props["criterion"], report.passed, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
