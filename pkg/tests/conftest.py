"""Shared fixtures: seeded images and fixed-weight toy model handles."""

import numpy as np
import pytest

from wssvwatch import toymodels
from wssvwatch.inference import load_model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_image(rng):
    """Factory for random uint8 RGB images."""

    def _make(h=32, w=32, generator=None):
        r = generator if generator is not None else rng
        return r.integers(0, 256, size=(h, w, 3), dtype=np.uint8)

    return _make


@pytest.fixture(scope="session")
def region_bundle():
    return toymodels.region_sum_model(side=32, region=(8, 8, 8, 8), weight=0.05, bias=-2.0)


@pytest.fixture
def region_handle(region_bundle):
    return load_model(region_bundle)


@pytest.fixture
def constant_handle():
    return load_model(toymodels.constant_model(side=16, logit=0.3))
