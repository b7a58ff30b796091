import numpy as np
import pytest

from ctrl_dos.plant import JammerProfile, LtiSystem, to_canonical

A3 = [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-3.0, -2.0, 3.0]]
B3 = [[0.0], [0.0], [1.0]]
A5 = [
    [0.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 1.0],
    [-7.0, 10.0, -3.0, 4.0, -6.0],
]
B5 = [[0.0]] * 4 + [[1.0]]


@pytest.fixture(scope="session")
def canon3():
    return to_canonical(LtiSystem(np.array(A3), np.array(B3)))


@pytest.fixture(scope="session")
def canon5():
    return to_canonical(LtiSystem(np.array(A5), np.array(B5)))


@pytest.fixture(scope="session")
def jammer90():
    return JammerProfile(T=1.0, T_off_cr=0.1)


@pytest.fixture(scope="session")
def jammer50():
    return JammerProfile(T=1.0, T_off_cr=0.5)


# acceptance tests tag themselves with @pytest.mark.criterion("7") and the
# summary prints one line per criterion at the end of the run
_results: dict[str, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _results.setdefault(str(marker.args[0]), []).append(rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")

    def key(label):
        digits = "".join(ch for ch in label if ch.isdigit())
        return int(digits or 0), label

    for label in sorted(_results, key=key):
        status = "PASS" if all(o == "passed" for o in _results[label]) else "FAIL"
        terminalreporter.write_line(f"criterion {label}: {status}")
