import numpy as np
import pytest
import torch
from torch.func import functional_call

from app.errors import DataError, DegenerateLabelsError, UsageError
from app.graph import (
    HeteroGraph,
    MetaPath,
    enumerate_occurrences,
    induced_subgraph,
    occurrence_edges,
    type_one_hot,
)
from app.model import (
    MpsGnnModel,
    TrainConfig,
    f1,
    forward,
    load_checkpoint,
    save_checkpoint,
    stratified_split,
    train,
)
from tests.conftest import make_random_graph


def test_f1_values():
    assert f1([1, 1, 0, 0], [1, 0, 1, 0]) == pytest.approx(0.5)
    assert f1([1, 0, 1], [1, 0, 1]) == 1.0
    assert f1([0, 0], [1, 1]) == 0.0
    with pytest.raises(UsageError):
        f1([1], [1, 0])


class TestStratifiedSplit:
    labels = {v: int(v < 30) for v in range(100)}

    def test_sizes_and_disjointness(self):
        split = stratified_split(self.labels, (0.7, 0.2, 0.1), seed=4)
        assert not split.fallback
        assert (len(split.train), len(split.val), len(split.test)) == (70, 20, 10)
        union = np.concatenate([split.train, split.val, split.test])
        assert sorted(union.tolist()) == list(range(100))
        for part in (split.train, split.val, split.test):
            assert {self.labels[int(v)] for v in part} == {0, 1}

    def test_same_seed_same_split(self):
        a = stratified_split(self.labels, seed=4)
        b = stratified_split(self.labels, seed=4)
        np.testing.assert_array_equal(a.train, b.train)
        np.testing.assert_array_equal(a.test, b.test)

    def test_small_label_sets_fall_back_to_full_reuse(self):
        labels = {v: v % 2 for v in range(10)}
        split = stratified_split(labels, seed=0, min_targets=20)
        assert split.fallback
        for part in (split.train, split.val, split.test):
            assert part.tolist() == list(range(10))

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateLabelsError):
            stratified_split({0: 1, 1: 1, 2: 1})


def test_train_config_validation():
    with pytest.raises(UsageError):
        TrainConfig(split=(0.5, 0.5, 0.5))
    with pytest.raises(UsageError):
        TrainConfig(activation="tanh")
    with pytest.raises(UsageError):
        TrainConfig(patience=0)


def test_readout_sees_all_towers():
    model = MpsGnnModel([MetaPath((0,)), MetaPath((1, 3))], feature_dim=7, embedding_dim=5)
    assert model.readout.in_features == 10
    assert [len(t.layers) for t in model.towers] == [1, 2]


def test_no_skip_connection_has_no_skip_weights():
    model = MpsGnnModel([MetaPath((0, 1))], feature_dim=4, embedding_dim=3, skip_connection=False)
    assert all(layer.w_skip is None for layer in model.towers[0].layers)


def test_same_seed_same_initial_weights():
    a = MpsGnnModel([MetaPath((0, 1))], feature_dim=4, embedding_dim=3, seed=5)
    b = MpsGnnModel([MetaPath((0, 1))], feature_dim=4, embedding_dim=3, seed=5)
    for (name, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert torch.equal(pa, pb), name


@pytest.mark.parametrize("activation", ["logistic", "relu"])
def test_prediction_depends_only_on_induced_subgraph(toy, activation):
    g, _ = toy
    bd = MetaPath.from_names(g, ["b", "d"])
    model = MpsGnnModel([bd], g.feature_dim, embedding_dim=6, activation=activation, seed=3)
    full = model.predict_proba(g, [0, 1])
    restricted = model.predict_proba(induced_subgraph(g, [0, 1], bd), [0, 1])
    np.testing.assert_array_equal(full, restricted)
    # pharmacy edges and a new hospital edge lie outside every b->d occurrence
    c, a = g.relation_id("c"), g.relation_id("a")
    edited = g.with_edges(added=[(4, c, 13), (0, a, 7)], removed=[(2, c, 13)])
    np.testing.assert_array_equal(full, model.predict_proba(edited, [0, 1]))


@pytest.mark.parametrize("seed", range(20))
def test_gnn_gradcheck(seed):
    rng = np.random.default_rng(seed)
    g = make_random_graph(seed + 500, num_nodes=12, edge_prob=0.25)
    mps = [random_metapath(g, rng, 1, 2), random_metapath(g, rng, 1, 2)]
    model = MpsGnnModel(mps, g.feature_dim, embedding_dim=3, seed=seed)
    prepared = model.prepare(g, np.flatnonzero(g.node_types == 0))
    names = [name for name, _ in model.named_parameters()]
    params = tuple(p.detach().clone().requires_grad_(True) for _, p in model.named_parameters())

    def logits(*tensors):
        return functional_call(model, dict(zip(names, tensors)), (prepared,))

    assert torch.autograd.gradcheck(logits, params, eps=1e-6, atol=1e-7, rtol=1e-4)


def test_forward_rejects_incompatible_metapaths(toy):
    g, _ = toy
    model = MpsGnnModel([MetaPath.from_names(g, ["b", "d"])], g.feature_dim, embedding_dim=3)
    with pytest.raises(UsageError):
        forward(model, g, [MetaPath.from_names(g, ["b"])], [0, 1])
    probs = forward(model, g, [MetaPath.from_names(g, ["b", "c"])], [0, 1])
    assert probs.shape == (2, 2)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)


def test_training_separates_medical_toy(toy):
    g, labels = toy
    cfg = TrainConfig(lr=0.05, max_epochs=300, patience=300, embedding_dim=8, seed=0)
    model, metrics = train(g, [MetaPath.from_names(g, ["b", "d"])], labels, cfg)
    assert metrics.fallback_split
    assert metrics.val_f1 == 1.0
    assert model.predict(g, [0, 1]).tolist() == [1, 0]


def test_single_separating_feature_is_learned():
    rng = np.random.default_rng(0)
    num_targets = 100
    labels = {v: int(v % 3 == 0) for v in range(num_targets)}
    node_types = [0] * num_targets + [1]
    label_column = np.array([labels[v] for v in range(num_targets)] + [0], dtype=np.float64)
    features = np.column_stack([type_one_hot(node_types, 2), label_column, rng.random(num_targets + 1)])
    g = HeteroGraph(node_types, ["target", "hub"], features, ["r"], [(v, 0, num_targets) for v in range(num_targets)])
    _, metrics = train(g, [MetaPath((0,))], labels, TrainConfig(lr=0.05, max_epochs=50, patience=50, seed=0))
    assert not metrics.fallback_split
    assert metrics.test_f1 >= 0.99


def test_training_metrics_are_consistent(chain, fast_training):
    g, labels = chain
    _, metrics = train(g, [MetaPath.from_names(g, ["r", "s"])], labels, fast_training)
    assert metrics.split_sizes == {"train": 4, "val": 4, "test": 4}
    assert 1 <= metrics.best_epoch <= metrics.epochs_run <= fast_training.max_epochs
    for value in (metrics.train_f1, metrics.val_f1, metrics.test_f1):
        assert 0.0 <= value <= 1.0
    assert set(metrics.to_dict()) >= {"train_f1", "val_f1", "test_f1", "val_loss", "epochs_run"}


def test_training_is_deterministic(chain, fast_training):
    g, labels = chain
    rs = [MetaPath.from_names(g, ["r", "s"])]
    first, m1 = train(g, rs, labels, fast_training)
    second, m2 = train(g, rs, labels, fast_training)
    assert m1 == m2
    np.testing.assert_array_equal(first.predict_proba(g, [0, 1, 2, 3]), second.predict_proba(g, [0, 1, 2, 3]))


def test_training_rejects_single_class(chain, fast_training):
    g, _ = chain
    with pytest.raises(DegenerateLabelsError):
        train(g, [MetaPath.from_names(g, ["r", "s"])], {0: 1, 2: 1}, fast_training)


class TestCheckpoint:
    def test_reload_gives_identical_predictions(self, toy, tmp_path):
        g, _ = toy
        model = MpsGnnModel([MetaPath.from_names(g, ["b", "d"]), MetaPath.from_names(g, ["a"])],
                            g.feature_dim, embedding_dim=4, activation="relu", skip_connection=False, seed=2)
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path, g)
        loaded = load_checkpoint(path)
        assert loaded.metapaths == model.metapaths
        assert (loaded.activation, loaded.skip_connection, loaded.embedding_dim) == ("relu", False, 4)
        np.testing.assert_array_equal(model.predict_proba(g, [0, 1]), loaded.predict_proba(g, [0, 1]))

    def test_missing_and_foreign_files(self, tmp_path):
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / "absent.ckpt")
        bogus = tmp_path / "bogus.ckpt"
        bogus.write_text("hello\n")
        with pytest.raises(DataError):
            load_checkpoint(bogus)


def random_metapath(g, rng, min_length, max_length):
    length = int(rng.integers(min_length, max_length + 1))
    return MetaPath(tuple(int(r) for r in rng.integers(0, g.num_relations, length)))


def induced_edges_by_walks(g, targets, mp):
    edges = set()
    for v in targets:
        for walk in enumerate_occurrences(g, v, mp):
            edges.update(occurrence_edges(mp, walk))
    return edges


def numpy_weights(linear):
    return None if linear is None else linear.weight.detach().numpy()


def loop_forward(model, g, targets):
    """Class probabilities computed node by node from the layer equations."""
    act = {'logistic': lambda z: 1.0 / (1.0 + np.exp(-z)), 'relu': lambda z: np.maximum(z, 0.0)}[model.activation]
    x = g.features
    embeddings = []
    for mp, tower in zip(model.metapaths, model.towers):
        edges = induced_edges_by_walks(g, targets, mp)
        h = {v: x[v] for v in range(g.num_nodes)}
        for l, layer in enumerate(tower.layers):
            relation = mp[len(mp) - 1 - l]
            w_self, w_neigh, w_skip = (numpy_weights(layer.w_self), numpy_weights(layer.w_neigh),
                                       numpy_weights(layer.w_skip))
            new_h = {}
            for v in range(g.num_nodes):
                pooled = np.zeros_like(h[v])
                for (a, r, u) in sorted(edges):
                    if a == v and r == relation:
                        pooled = pooled + h[u]
                z = w_self @ h[v] + w_neigh @ pooled
                if w_skip is not None:
                    z = z + w_skip @ x[v]
                new_h[v] = act(z)
            h = new_h
        embeddings.append(np.array([h[v] for v in targets]))
    readout = model.readout.weight.detach().numpy()
    bias = model.readout.bias.detach().numpy()
    logits = np.concatenate(embeddings, axis=1) @ readout.T + bias
    logits = logits - logits.max(axis=1, keepdims=True)
    return np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)


@pytest.mark.parametrize("activation", ["logistic", "relu"])
@pytest.mark.parametrize("skip_connection", [True, False])
def test_forward_matches_loop_oracle(activation, skip_connection):
    rng = np.random.default_rng(21)
    for trial in range(5):
        g = make_random_graph(trial + 600, num_nodes=15, edge_prob=0.2)
        mps = [random_metapath(g, rng, 1, 3), random_metapath(g, rng, 0, 2)]
        model = MpsGnnModel(mps, g.feature_dim, embedding_dim=4, activation=activation,
                            skip_connection=skip_connection, seed=trial)
        targets = np.flatnonzero(g.node_types == 0).tolist()
        np.testing.assert_allclose(forward(model, g, mps, targets), loop_forward(model, g, targets),
                                   rtol=0, atol=1e-10)


def test_empty_metapath_reads_raw_features(toy):
    g, _ = toy
    model = MpsGnnModel([MetaPath()], g.feature_dim, embedding_dim=5, seed=4)
    assert len(model.towers[0].layers) == 0
    assert model.readout.in_features == g.feature_dim
    logits = g.features[[0, 1]] @ model.readout.weight.detach().numpy().T + model.readout.bias.detach().numpy()
    expected = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(model.predict_proba(g, [0, 1]), expected, rtol=0, atol=1e-12)
    bare = g.with_edges(removed=[tuple(e) for e in g.edges.tolist()])
    np.testing.assert_array_equal(model.predict_proba(bare, [0, 1]), model.predict_proba(g, [0, 1]))


def test_skip_connection_dominates_without_neighbour_weights(toy):
    g, _ = toy
    bd = MetaPath.from_names(g, ["b", "d"])
    model = MpsGnnModel([bd], g.feature_dim, embedding_dim=4, activation="logistic", skip_connection=True, seed=6)
    with torch.no_grad():
        for layer in model.towers[0].layers:
            layer.w_self.weight.zero_()
            layer.w_neigh.weight.zero_()
    last = model.towers[0].layers[-1].w_skip.weight.detach().numpy()
    embedding = 1.0 / (1.0 + np.exp(-(g.features[[0, 1]] @ last.T)))
    logits = embedding @ model.readout.weight.detach().numpy().T + model.readout.bias.detach().numpy()
    expected = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(model.predict_proba(g, [0, 1]), expected, rtol=0, atol=1e-12)
    pruned = g.with_edges(removed=sorted(induced_edges_by_walks(g, [0], bd))[:3])
    np.testing.assert_allclose(model.predict_proba(pruned, [0, 1]), expected, rtol=0, atol=1e-12)


def relabel(g, perm):
    """Copy of g where node v becomes perm[v]."""
    inverse = np.argsort(perm)
    edges = [(int(perm[a]), r, int(perm[b])) for (a, r, b) in g.edges.tolist()]
    return HeteroGraph(g.node_types[inverse], g.type_names, g.features[inverse], g.relation_names, edges)


def test_predictions_survive_node_relabelling():
    rng = np.random.default_rng(31)
    for trial in range(10):
        g = make_random_graph(trial + 700, num_nodes=15, edge_prob=0.2)
        mps = [random_metapath(g, rng, 1, 3)]
        model = MpsGnnModel(mps, g.feature_dim, embedding_dim=4, seed=trial)
        perm = rng.permutation(g.num_nodes)
        targets = np.flatnonzero(g.node_types == 0)
        np.testing.assert_allclose(model.predict_proba(relabel(g, perm), perm[targets]),
                                   model.predict_proba(g, targets), rtol=0, atol=1e-12)
