import numpy as np
import pytest

from coarse_hall import experiments as ex


HOFSTADTER_32 = {"model": {"name": "hofstadter", "size": 32, "flux": "1/4"}, "fermi": {"gap": 1}}


@pytest.fixture(scope="session")
def hof32():
    """Flux 1/4 on 32x32, Fermi level mid first gap, sector partition."""
    return ex.build_sample(HOFSTADTER_32)


@pytest.fixture(scope="session")
def hof32_projection(hof32):
    return hof32.projection()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
