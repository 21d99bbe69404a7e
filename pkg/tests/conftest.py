import warnings

import pytest

from spinmem.exceptions import SpinmemWarning
from spinmem.params import ExperimentParams, default_params


@pytest.fixture
def params():
    return default_params()


@pytest.fixture
def oracle_params():
    """Parameter set used for the extended-precision spectrum oracle."""
    return ExperimentParams(coupling_a=1e-7, flux_Sx=1e14, spin_Jx=1e12, larmor_Hz=2400.0,
                            gamma_Hz=80.0, eps_y=1.0, eps_z=1.0)


@pytest.fixture(autouse=True)
def _quiet_advisories():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SpinmemWarning)
        yield


_REPORT = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_REPORT] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(number, title, passed, detail)``."""
    lines = request.config.stash[_REPORT]

    def record(number, title, passed, detail=""):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
