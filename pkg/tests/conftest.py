import os
import sys
from pathlib import Path

import numpy as np
import pytest

from guesslearn.data import find_mnist_test, load_mnist
from guesslearn.protocol import StepRecord, TrackConfig, Trajectory

ROOT = Path(__file__).resolve().parents[1]


def make_trajectory(correct_flags, seed=0, learner="fake", strategy="random", track=None):
    records, e = [], 0
    for t, ok in enumerate(correct_flags, start=1):
        e += 0 if ok else 1
        records.append(StepRecord(t, t - 1, 0, 0 if ok else 1, bool(ok), e, 0.001 * t))
    return Trajectory(records, seed, track or TrackConfig(), strategy, learner,
                      pool_size=len(records))


def mnist_dir():
    candidates = [os.environ.get("GUESSLEARN_MNIST_DIR"), ROOT / "data" / "mnist"]
    for c in candidates:
        if c and find_mnist_test(c):
            return Path(c)
    return None


@pytest.fixture(scope="session")
def mnist_pool():
    d = mnist_dir()
    if d is None:
        pytest.skip("official MNIST test files not found (set GUESSLEARN_MNIST_DIR)")
    return load_mnist(*find_mnist_test(d))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
