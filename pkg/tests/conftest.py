import numpy as np
import pytest

from arqe.pcf import KnotSet

TWO_PEAKS = KnotSet((-0.69513535, -0.3989989), (0.00706757, 0.04842301))
FLAT_START = KnotSet((-0.34315537, -0.24266087), (0.0, 0.23737731))
FOUR_KNOTS = KnotSet(
    (-0.29285222, -0.2132477, -0.19124688, -0.15079198),
    (2.85749338e-06, 0.101155582, 0.268075636, 0.367572655),
)


def random_knots(rng: np.random.Generator, n: int) -> KnotSet:
    while True:
        xs = np.sort(rng.uniform(-1.0, 0.0, n))
        if np.all(np.diff(np.concatenate([[-1.0], xs, [0.0]])) > 1e-6):
            break
    ys = np.sort(rng.uniform(0.0, 0.5, n))
    return KnotSet(tuple(xs), tuple(ys))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
