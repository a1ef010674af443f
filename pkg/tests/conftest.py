import numpy as np
import pytest

from bilaf_engine.feature_store import FeaturePool, MixtureSpec, generate_mixture, normalize_rows


def make_pool(rng, n, d, labels=None):
    features = normalize_rows(rng.normal(size=(n, d)).astype(np.float32))
    return FeaturePool(features, labels, normalized=True)


def line_pool(offsets):
    """Points on the x-axis of the plane (raw, not normalized)."""
    pts = np.zeros((len(offsets), 2), dtype=np.float32)
    pts[:, 0] = offsets
    return FeaturePool(pts)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def small_mixture():
    return generate_mixture(MixtureSpec(num_classes=4, samples_per_class=40, dim=8, seed=3))


@pytest.fixture(scope="session")
def medium_mixture():
    return generate_mixture(MixtureSpec(num_classes=5, samples_per_class=80, dim=16, seed=11))
