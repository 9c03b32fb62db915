import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rfh.functional import FunctionalContext
from rfh.nonlinearity import NonlinearitySpec
from rfh.spectral import Spectrum, build_circle_spectrum

settings.register_profile("rfh", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("rfh")

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def golden():
    return json.loads((FIXTURES / "golden.json").read_text())


@pytest.fixture(scope="session")
def circle16():
    return build_circle_spectrum(8)


@pytest.fixture(scope="session")
def h0_ctx(circle16):
    return FunctionalContext(circle16, 0.4, NonlinearitySpec.quadratic())


@pytest.fixture(scope="session")
def power_ctx():
    return FunctionalContext(build_circle_spectrum(4), 1 / 3, NonlinearitySpec.power(3, 3))


@pytest.fixture(scope="session")
def synthetic_m1():
    """Asymmetric simple spectrum: every L-eigenvalue has multiplicity one."""
    return Spectrum.synthetic([(-17.0, 1), (-11.0, 1), (-5.0, 1), (3.0, 1), (7.0, 1),
                               (13.0, 1)])


@pytest.fixture(scope="session")
def synthetic_mixed():
    return Spectrum.synthetic([(-9.0, 2), (-4.0, 1), (2.0, 1), (4.0, 2), (9.0, 1)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


# -- acceptance reporting ------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """``criterion(name, ok, detail)`` records a PASS/FAIL line, then asserts ``ok``."""

    def record(name: str, ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
