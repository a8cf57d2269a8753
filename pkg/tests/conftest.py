import numpy as np
import pytest

from shofar.data import make_train_test
from shofar.qkernel import EmbeddingKind, EmbeddingSpec, kernel_matrix_exact


@pytest.fixture(scope="session")
def circles():
    """Circles training set (m=40), its angle-embedding kernel, and labels."""
    train, _ = make_train_test("circles", 40, 360, seed=0)
    spec = EmbeddingSpec(EmbeddingKind.ANGLE, 2)
    K = kernel_matrix_exact(spec, train.points)
    return train, K, train.labels


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
