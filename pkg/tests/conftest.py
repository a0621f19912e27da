import numpy as np
import pytest

from actionrec.imaging import ImageBuffer


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def two_halves(h=6, w=6, left=(1.0, 0.0, 0.0), right=(0.0, 0.0, 1.0), split=None):
    split = w // 2 if split is None else split
    data = np.empty((h, w, 3))
    data[:, :split] = left
    data[:, split:] = right
    return ImageBuffer(data)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
