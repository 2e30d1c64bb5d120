import numpy as np
import pytest

from pmrtune.benchmarks import BENCHMARK_PLANTS
from pmrtune.ident import classify
from pmrtune.lti import TransferFunction


@pytest.fixture(scope="session")
def plants():
    return BENCHMARK_PLANTS


@pytest.fixture(scope="session")
def analytic_points(plants):
    return {name: classify(tf) for name, tf in plants.items()}


def random_stable_tf(rng: np.random.Generator, max_order: int = 4,
                     with_delay: bool = False) -> TransferFunction:
    """Random strictly proper stable plant with well-scaled real/complex poles."""
    order = int(rng.integers(1, max_order + 1))
    poles = []
    while len(poles) < order:
        if order - len(poles) >= 2 and rng.random() < 0.4:
            re = -rng.uniform(0.05, 3.0)
            im = rng.uniform(0.1, 3.0)
            poles += [complex(re, im), complex(re, -im)]
        else:
            poles.append(complex(-rng.uniform(0.05, 3.0), 0.0))
    den = np.real(np.atleast_1d(np.poly(poles)))
    n_zeros = int(rng.integers(0, order))
    zeros = [complex(-rng.uniform(0.05, 3.0), 0.0) for _ in range(n_zeros)]
    num = np.real(np.atleast_1d(np.poly(zeros))) * rng.uniform(0.2, 2.0)
    delay = float(rng.uniform(0.05, 1.0)) if with_delay else 0.0
    return TransferFunction(num, den, delay)
