import re

import numpy as np
import pytest

from semgrid import encode_multilayer, synth_scene

_ACCEPTANCE_RESULTS: dict[str, str] = {}
_CRITERION = re.compile(r"test_acceptance\.py::(test_criterion_\d+\w*)")


@pytest.fixture(scope="session", autouse=True)
def warm_jit():
    """Compile the traversal kernel once so timing tests measure steady state."""
    encode_multilayer(synth_scene(seed=12345, n_points=64))


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    name = m.group(1)
    if report.when == "call":
        _ACCEPTANCE_RESULTS[name] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and report.failed:
        _ACCEPTANCE_RESULTS[name] = "FAIL"
    elif report.when == "setup" and report.skipped:
        _ACCEPTANCE_RESULTS[name] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"{name}: {_ACCEPTANCE_RESULTS[name]}")
