from app.baselines import degree_baseline, majority_baseline, run_baselines
from app.graph import HeteroGraph, type_one_hot


def degree_signal_graph(num_targets=40, num_positive=12):
    """Positives have three 'deg' neighbours, negatives one; 'noise' is the same for everybody."""
    labels = {v: int(v < num_positive) for v in range(num_targets)}
    node_types = [0] * num_targets
    edges = []
    for v in range(num_targets):
        for _ in range(3 if labels[v] else 1):
            edges.append((v, 0, len(node_types)))
            node_types.append(1)
        for _ in range(2):
            edges.append((v, 1, len(node_types)))
            node_types.append(1)
    g = HeteroGraph(node_types, ["target", "leaf"], type_one_hot(node_types, 2), ["deg", "noise"], edges)
    return g, labels


def test_majority_predicts_the_frequent_class():
    _, labels = degree_signal_graph()
    result = majority_baseline(labels, seed=0)
    assert result['prediction'] == 0
    assert result['test_f1'] == 0.0


def test_degree_threshold_found():
    g, labels = degree_signal_graph()
    result = degree_baseline(g, labels, seed=0)
    assert result['relation'] == 'deg'
    assert (result['threshold'], result['direction']) == (3, '>=')
    assert result['train_f1'] == 1.0
    assert result['test_f1'] == 1.0


def test_run_baselines_on_medical_toy(toy):
    g, labels = toy
    results = run_baselines(g, labels, seed=0)
    assert set(results) == {'majority', 'degree'}
    assert 0.0 <= results['degree']['test_f1'] <= 1.0
