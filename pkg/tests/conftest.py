import numpy as np
import pytest

from adjprior import LabelMap


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_labelmap(rng, shape, num_classes, spacing=(1.0, 1.0, 1.0)):
    return LabelMap(rng.integers(0, num_classes, size=shape), num_classes, spacing)


def random_probs(rng, shape, num_classes):
    raw = rng.random(tuple(shape) + (num_classes,)) + 0.05
    return raw / raw.sum(axis=-1, keepdims=True)


ACCEPTANCE_LINES = []


def record(criterion, ok, detail=""):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} {criterion} {detail}".rstrip())
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
