import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from weaknull.data import ExperimentDataset

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_dataset(rng, sizes, d=1, scales=None, stratum=None):
    """Continuous outcomes with arm-specific scale; arms coded 0..J-1."""
    sizes = list(sizes)
    J = len(sizes)
    scales = np.ones(J) if scales is None else np.asarray(scales, dtype=float)
    treat = np.repeat(np.arange(J), sizes)
    y = rng.normal(size=(treat.size, d)) * scales[treat][:, None] + rng.normal(size=J)[treat][:, None]
    if d == 1:
        y = y[:, 0]
    return ExperimentDataset.from_arrays(treat, y, stratum=stratum, arm_order=list(range(J)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy():
    """Four units, two arms of two."""
    return ExperimentDataset.from_arrays([1, 1, 2, 2], [1.0, 2.0, 3.0, 4.0])
