import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


_acceptance = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and (report.when == "call" or report.outcome != "passed"):
        props = dict(report.user_properties)
        if "criterion" in props:
            verdict = "PASS" if report.passed else "FAIL"
            _acceptance.append(f"criterion {props['criterion']:>2} {verdict}  {props.get('detail', '')}")


def pytest_terminal_summary(terminalreporter):
    if _acceptance:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance:
            terminalreporter.write_line(line)
