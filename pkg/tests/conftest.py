import numpy as np
import pytest

from channels import ChannelConfig, gen_channels
from model import ChannelSet, SystemParams


@pytest.fixture
def params() -> SystemParams:
    return SystemParams.defaults()


@pytest.fixture
def channels(params: SystemParams) -> ChannelSet:
    return gen_channels(params, ChannelConfig(seed=0))


@pytest.fixture
def tiny() -> SystemParams:
    """N_t = 2, одно EH и одно ID устройство."""
    return SystemParams.defaults(n_antennas=2, n_eh=1, n_id=1)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)
