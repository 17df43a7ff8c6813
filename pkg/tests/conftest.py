import pytest

from shelm.stores import generate_synthetic_store

CLUSTER_LABELS = ["red", "blue", "green", "gold", "wall", "moss", "dust", "fog"]


def make_toy_store(seed=101, vocab_size=64, dim=32, spread=0.05, lm_dim=None):
    spec = [(label, i + 1, spread) for i, label in enumerate(CLUSTER_LABELS)]
    return generate_synthetic_store(seed, vocab_size, dim, spec, lm_dim=lm_dim)


@pytest.fixture(scope="session")
def toy_store():
    return make_toy_store()
