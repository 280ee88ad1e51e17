import numpy as np
import pytest

from app.graph import HeteroGraph, type_one_hot
from app.model import TrainConfig
from app.scoring import OptimizerConfig
from app.toy_graphs import chain_miniature, medical_toy, medical_toy_priced


def make_random_graph(seed: int, num_nodes: int = 14, num_types: int = 2, num_relations: int = 3,
                      edge_prob: float = 0.2, extra_dim: int = 2) -> HeteroGraph:
    rng = np.random.default_rng(seed)
    node_types = rng.integers(0, num_types, num_nodes)
    node_types[:num_types] = np.arange(num_types)
    features = np.hstack([type_one_hot(node_types, num_types), rng.normal(size=(num_nodes, extra_dim))])
    edges = [(u, r, v)
             for r in range(num_relations)
             for u in range(num_nodes)
             for v in range(num_nodes)
             if rng.random() < edge_prob]
    return HeteroGraph(node_types, [f"t{i}" for i in range(num_types)], features,
                       [f"r{i}" for i in range(num_relations)], edges)


@pytest.fixture
def random_graph():
    return make_random_graph


@pytest.fixture
def toy():
    return medical_toy()


@pytest.fixture
def toy_priced():
    return medical_toy_priced()


@pytest.fixture
def chain():
    return chain_miniature()


@pytest.fixture
def fast_optimizer():
    return OptimizerConfig(steps=60, restarts=1)


@pytest.fixture
def fast_training():
    return TrainConfig(max_epochs=60, patience=20, embedding_dim=8)
