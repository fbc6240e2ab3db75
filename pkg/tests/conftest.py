import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from epigate.data import prepare, synth_blobs, synth_linear_dataset
from epigate.models import LogisticConfig, MlpConfig, train_logistic, train_mlp, train_random_forest

settings.register_profile("epigate", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("epigate")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def blobs():
    centers = np.array([[0.0, 0, 0, 0, 0], [2.5, 0, 1, 0, 0], [0, 2.5, 0, -1, 0]])
    return prepare(synth_blobs(900, centers, 1.0, seed=3), seed=0)


@pytest.fixture(scope="session")
def linear_data():
    return prepare(synth_linear_dataset(6, 800, seed=5), seed=0)


@pytest.fixture(scope="session")
def rf(blobs):
    return train_random_forest(blobs[0], n_trees=25, max_depth=6, seed=0)


@pytest.fixture(scope="session")
def mlp(blobs):
    train, val, _, _ = blobs
    return train_mlp(train, val, MlpConfig(hidden=(16, 8), max_epochs=30, seed=0))


@pytest.fixture(scope="session")
def lr(linear_data):
    return train_logistic(linear_data[0], None, LogisticConfig())
