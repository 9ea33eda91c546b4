import numpy as np
import pytest

from fevpr.config import TrainConfig
from fevpr.dataset import TraverseConfig, load_traverse
from fevpr.synthetic import SyntheticWorldConfig, generate_world


@pytest.fixture(scope="session")
def tiny_world_dir(tmp_path_factory):
    """A small on-disk synthetic world shared across tests (8 places, 32px)."""
    out = tmp_path_factory.mktemp("tiny_world")
    config = SyntheticWorldConfig(places=8, image_size=32, seed=11)
    generate_world(out, config, corrupted_splits=False)
    return out


@pytest.fixture(scope="session")
def tiny_traverses(tiny_world_dir):
    tc = TraverseConfig(window_us=25_000)
    database = load_traverse(tiny_world_dir / "database", tc)
    query = load_traverse(tiny_world_dir / "query", tc)
    return database, query


@pytest.fixture()
def tiny_config():
    """A width-reduced config that builds fast CPU-sized networks."""
    return TrainConfig(
        clusters=4,
        input_size=32,
        base_width=8,
        negatives_per_query=3,
        positives_per_query=2,
        batch_size=2,
        epochs=2,
        eval_interval_batches=4,
        cache_refresh_batches=8,
        vlad_init_samples=500,
        seed=3,
    ).validate()


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
