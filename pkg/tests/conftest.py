"""Shared fixtures: datasets and trained models, built once per session.

Everything is deterministic: dataset seeds 1/2/3 and training seeds are
pinned, so all downstream metrics are exactly reproducible.
"""

import numpy as np
import pytest

import camlab
from camlab import fixtures

IMAGE_SIDE = 48

GAP_TRAIN = dict(epochs=30, learning_rate=0.05, rng_seed=0)
FC_TRAIN = dict(epochs=30, learning_rate=0.01, rng_seed=1)


@pytest.fixture(scope="session")
def train_set():
    return fixtures.make_shapes_dataset(400, IMAGE_SIDE, rng_seed=1)


@pytest.fixture(scope="session")
def test_set():
    return fixtures.make_shapes_dataset(200, IMAGE_SIDE, rng_seed=2)


@pytest.fixture(scope="session")
def two_object_set():
    return fixtures.make_shapes_dataset(80, IMAGE_SIDE, rng_seed=3,
                                        two_object_fraction=1.0)


@pytest.fixture(scope="session")
def gap_spec():
    return camlab.fix_gap_spec()


@pytest.fixture(scope="session")
def fc_spec():
    return camlab.fix_fc_spec()


@pytest.fixture(scope="session")
def gap_weights(gap_spec, train_set):
    return camlab.train_fixture(gap_spec, train_set, **GAP_TRAIN)


@pytest.fixture(scope="session")
def fc_weights(fc_spec, train_set):
    return camlab.train_fixture(fc_spec, train_set, **FC_TRAIN)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
