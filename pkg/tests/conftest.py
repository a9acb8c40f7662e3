import numpy as np
import pytest
import scipy.sparse as sp

from deepform.graph.graph_engine import GraphEngine
from deepform.ingest.ingest_engine import IngestEngine
from deepform.ingest.synthetic import generate_planted
from deepform.models.data.dataset import Dataset
from deepform.models.state.config import TrainConfig
from deepform.models.state.run_context import RunContext


@pytest.fixture
def planted():
    """Three clean blocks of ten users over thirty items."""
    return generate_planted(n_users=30, branching=(3,), n_items=30, noise=0.0, seed=0, min_interactions=5)


@pytest.fixture
def small_dataset(planted) -> Dataset:
    dataset = IngestEngine.split_train_test(planted.interactions, ratio=0.8, seed=0)
    return IngestEngine.normalize_ratings(dataset)


@pytest.fixture
def small_graph(small_dataset):
    return GraphEngine.build_user_graph(small_dataset.x_train, top_k=10)


@pytest.fixture
def tiny_config() -> TrainConfig:
    return TrainConfig(epochs=2, d=4, h1=8, h2=6, k_max=4, lr=1e-3, n_neg=2, graph_top_k=10)


@pytest.fixture
def toy_dataset() -> Dataset:
    """Four users, five items, hand-written ratings."""
    train = np.array([
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0],
        [0.6, 0.8, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0, 0.0],
    ])
    test = np.array([
        [0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0],
    ])
    return Dataset(
        user_ids=np.array(["a", "b", "c", "d"], dtype=object),
        item_ids=np.array(["i0", "i1", "i2", "i3", "i4"], dtype=object),
        x_train=sp.csr_matrix(train),
        x_test=sp.csr_matrix(test),
        normalized=True,
    )


@pytest.fixture
def run_context() -> RunContext:
    return RunContext()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
