import numpy as np
import pytest

from conceptalign import dataio


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def digits():
    return dataio.load_optical_digits()


@pytest.fixture(scope="session")
def small_digits(digits):
    train, _ = dataio.subsample_balanced(digits, dataio.SplitSpec(4, 1, seed=3))
    return train


def random_dataset(n, seed=0, tag="random"):
    rng = np.random.default_rng(seed)
    return dataio.Dataset(rng.random((n, 256)), np.arange(n) % 10, tag)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
