import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from warpflow import scenarios  # noqa: E402


@pytest.fixture(scope="session")
def anosov_spec():
    return scenarios.build_anosov_example(3.0, n=2)


@pytest.fixture(scope="session")
def counter_spec():
    return scenarios.build_counterexample(n=2)


@pytest.fixture(scope="session")
def const_spec():
    return scenarios.build_constant_curvature(1.0, n=2)


@pytest.fixture(scope="session")
def rng():
    return np.random.RandomState(1234)
