import sys

import numpy as np
import pytest

from noisomics.rng import RngStream


@pytest.fixture
def root():
    return RngStream(1234)


@pytest.fixture
def nprng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is not None and module.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(module.LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
