import numpy as np
import pytest

from offline_tsp.dataset import generate_training_set
from offline_tsp.surrogate import EncoderConfig, TrainConfig, calibrate, train

_criteria: list[str] = []


@pytest.fixture(scope="session")
def criteria_log():
    return _criteria


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in _criteria:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_train_set():
    return generate_training_set(40, 12, np.random.default_rng(3))


@pytest.fixture(scope="session")
def small_model(small_train_set):
    """A quickly trained, calibrated model on tiny instances; good enough for plumbing tests."""
    model, _ = train(
        small_train_set,
        EncoderConfig(hidden_dim=8, feature_dim=4),
        TrainConfig(epochs=3, pairs_per_epoch=200, seed=5),
    )
    return calibrate(model, small_train_set.records)
