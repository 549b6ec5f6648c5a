import time
from pathlib import Path

import numpy as np
import pytest

from shorttopics.corpus import Corpus, Document, Vocabulary

FIXTURES = Path(__file__).parent / "fixtures"

_criteria: dict[str, tuple[int, str]] = {}
_results: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _criteria[item.nodeid] = (m.args[0], m.args[1])


def pytest_runtest_logreport(report):
    if report.nodeid not in _criteria:
        return
    n, title = _criteria[report.nodeid]
    if report.when == "call" or report.outcome != "passed":
        prev = _results.get(n)
        outcome = report.outcome.upper()
        if prev is None or prev[0] == "PASSED":
            _results[n] = (outcome, title, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_results):
        outcome, title, dur = _results[n]
        word = "PASS" if outcome == "PASSED" else "FAIL"
        tr.write_line(f"criterion {n:2d}: {word}  {title}  ({dur:.2f}s)")


@pytest.fixture
def make_corpus():
    """Build a corpus from lists of integer token ids over a vocabulary of size V."""

    def build(docs, V=None):
        V = V or (max(max(d) for d in docs) + 1)
        vocab = Vocabulary(tuple(f"w{i}" for i in range(V)))
        return Corpus([Document(tuple(d)) for d in docs], vocab)

    return build


@pytest.fixture
def timer():
    class Timer:
        def __enter__(self):
            self.t0 = time.perf_counter()
            return self

        def __exit__(self, *exc):
            self.elapsed = time.perf_counter() - self.t0

    return Timer


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
