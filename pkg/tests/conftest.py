import numpy as np
import pytest

import hiersparse as hs


@pytest.fixture(scope="session")
def tf1_norm():
    return hs.normalize(hs.gen_test_function("TF1"))


@pytest.fixture(scope="session")
def tf2_norm():
    return hs.normalize(hs.gen_test_function("TF2"))


@pytest.fixture(scope="session")
def tf3_norm():
    return hs.normalize(hs.gen_test_function("TF3"))


@pytest.fixture(scope="session")
def tf4_norm():
    return hs.normalize(hs.gen_test_function("TF4"))


@pytest.fixture(scope="session")
def tf1_fit(tf1_norm):
    return hs.fit(tf1_norm, 1e-2, seed=7)


@pytest.fixture(scope="session")
def tf2_fit(tf2_norm):
    return hs.fit(tf2_norm, 1e-2, seed=7)


# tolerance-zero runs walk every scale up to (and past) full numerical rank
@pytest.fixture(scope="session")
def tf1_full(tf1_norm):
    return hs.fit(tf1_norm, 0.0, seed=7)


@pytest.fixture(scope="session")
def tf2_full(tf2_norm):
    return hs.fit(tf2_norm, 0.0, seed=7)


@pytest.fixture(scope="session")
def tf3_full(tf3_norm):
    return hs.fit(tf3_norm, 0.0, seed=7)


@pytest.fixture(scope="session")
def tf4_full(tf4_norm):
    return hs.fit(tf4_norm, 0.0, seed=7)


def bump_surface(grid=60, seed=7):
    """Smooth synthetic surface: sum of three Gaussian bumps on a grid."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.2, 0.8, (3, 2))
    widths = rng.uniform(0.08, 0.25, 3)
    amps = rng.uniform(1.0, 3.0, 3)
    ax = np.linspace(0.0, 1.0, grid)
    gx, gy = np.meshgrid(ax, ax, indexing="ij")
    sites = np.column_stack([gx.ravel(), gy.ravel()])
    values = sum(a * np.exp(-((sites[:, 0] - c[0]) ** 2
                              + (sites[:, 1] - c[1]) ** 2) / (2 * w ** 2))
                 for a, c, w in zip(amps, centers, widths))
    return hs.Dataset(sites, values)


def critical_scale(ds, base=None, decay=2.0, delta=1e-10, max_scale=25):
    """First scale at which the Gram matrix reaches full numerical rank."""
    if base is None:
        base = hs.default_base(ds)
    for s in range(max_scale + 1):
        params = hs.KernelParams(base, decay, s)
        if hs.numerical_rank(hs.gram(ds.sites, ds.sites, params), delta) == ds.n:
            return s
    raise AssertionError("critical scale not reached within the scale cap")
