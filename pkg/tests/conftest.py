import numpy as np
import pytest

from nptmetric.data import Dataset, SyntheticSpec, gen_synthetic
from nptmetric.geometry import normalize_rows
from nptmetric.losses import LabeledBatch, MarginConfig, ProxyBank


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_bank(rng):
    return ProxyBank(raw_weights=normalize_rows(rng.standard_normal((5, 6)), 1.0), radius=1.0)


@pytest.fixture
def small_batch(rng):
    return LabeledBatch(
        raw_features=rng.standard_normal((7, 6)),
        labels=rng.integers(0, 5, 7).astype(np.int64),
    )


@pytest.fixture
def margin():
    return MarginConfig(delta=0.5)


@pytest.fixture(scope="session")
def toy_dataset() -> Dataset:
    """The shared desk-scale task: 10 tight clusters on the 16-d unit sphere."""
    return gen_synthetic(
        SyntheticSpec(class_count=10, input_dim=16, samples_per_class=200,
                      noise_sigma=0.1, seed=42)
    )


def random_sphere_rows(rng, n, dim, radius=1.0):
    return normalize_rows(rng.standard_normal((n, dim)), radius)
