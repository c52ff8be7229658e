import numpy as np
import pytest
from hypothesis import settings

from nnwm.data import make_synthetic_dataset
from nnwm.nn import OptimizerConfig, TrainConfig

settings.register_profile("nnwm", deadline=None, max_examples=60)
settings.load_profile("nnwm")


@pytest.fixture(scope="session")
def blobs():
    """Small separable 4-class problem, 16 features."""
    return make_synthetic_dataset(seed=1, n_per_class=50, k=4, feature_dim=16)


@pytest.fixture
def quick_cfg():
    return TrainConfig(epochs=20, batch_size=32, optimizer=OptimizerConfig("momentum", 0.05, 0.9), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(number, ok, detail):
        line = f"AC{number:<2} {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s[2:4])):
            terminalreporter.write_line(line)
