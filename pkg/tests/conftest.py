import numpy as np
import pytest

from synflex.data import DigitCorpus, compose, enumerate_classes, synthesize_corpus


@pytest.fixture(scope="session")
def tiny_corpus() -> DigitCorpus:
    """Small synthetic corpus shared by the unit tests (40/16 per digit)."""
    return synthesize_corpus(n_train=400, n_test=160, seed=7)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_corpus):
    classes = enumerate_classes()[:6]
    return compose(tiny_corpus, classes, per_class_train=20, per_class_test=8, seed=3)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
