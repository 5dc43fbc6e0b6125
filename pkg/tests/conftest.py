import numpy as np
import pytest

from liprank.geometry import Norm, ball, box, interval, lshape, two_squares


@pytest.fixture(scope="session")
def l2_2d():
    return Norm.p_norm(2, 2)


@pytest.fixture(scope="session")
def l1_2d():
    return Norm.p_norm(1, 2)


@pytest.fixture(scope="session")
def abs_1d():
    return Norm.p_norm(2, 1)


@pytest.fixture(scope="session")
def unit_square():
    return box([0.0, 0.0], [1.0, 1.0])


@pytest.fixture(scope="session")
def unit_disk():
    return ball([0.0, 0.0], 1.0)


@pytest.fixture(scope="session")
def unit_interval():
    return interval(0.0, 1.0, h_geo=0.01)


@pytest.fixture(scope="session")
def l_shape():
    return lshape()


@pytest.fixture(scope="session")
def squares_pair():
    return two_squares()


def pair_sweep(values: np.ndarray, points: np.ndarray, norm: Norm,
               n_pairs: int = 10_000, seed: int = 0, min_sep: float = 1e-9) -> float:
    """Max |v_i - v_j| / |x_i - x_j| over random index pairs."""
    rng = np.random.default_rng(seed)
    i = rng.integers(0, len(points), n_pairs)
    j = rng.integers(0, len(points), n_pairs)
    d = norm(points[i] - points[j])
    keep = d > min_sep
    i, j, d = i[keep], j[keep], d[keep]
    if not len(d):
        return 0.0
    return float((np.abs(values[i] - values[j]) / d).max())
