import numpy as np
import pytest

from palmkit.core import Window


@pytest.fixture
def unit():
    return Window.unit()


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)


def within_3se(values, target):
    v = np.asarray(values, dtype=float)
    se = v.std(ddof=1) / np.sqrt(len(v))
    return abs(v.mean() - target) <= 3 * se, v.mean(), se
