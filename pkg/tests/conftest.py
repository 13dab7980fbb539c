import numpy as np
import pytest

from polymer_limits import env_field as ef


@pytest.fixture(scope="session")
def params_small() -> ef.EnvParams:
    """Calibrated environment with a small kernel for fast sampling tests."""
    return ef.EnvParams.calibrated(0.75, kernel_cutoff=64)


@pytest.fixture(scope="session")
def params_medium() -> ef.EnvParams:
    return ef.EnvParams.calibrated(0.75, kernel_cutoff=2048)


@pytest.fixture(scope="session")
def env_small(params_small) -> ef.EnvironmentField:
    return ef.sample_environment(params_small, 12, -16, 16, seed=314159)


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(
        key=np.array([seed, 0xABCD], dtype=np.uint64)))
