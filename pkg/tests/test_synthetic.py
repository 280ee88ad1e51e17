import numpy as np
import pytest

from app.errors import DataError, UsageError
from app.graph import MetaPath, count_occurrences, walk_counts
from app.synthetic import (
    PRESETS,
    ScenarioSpec,
    _pick_summing,
    audit_labels,
    generate,
    ground_truth_from_dict,
    make_lookahead_fixture,
    preset,
    scenario_names,
)


def small(name, **overrides):
    overrides.setdefault('num_targets', 150)
    overrides.setdefault('seed', 3)
    return preset(name, **overrides)


def test_presets():
    assert scenario_names() == ('s1', 's2', 's3', 's4', 's5', 's6', 's7', 's8')
    spec = preset('S4')
    assert (spec.num_relations, spec.threshold, spec.path_length) == (5, 4, 2)
    assert spec.num_targets == 2000
    assert PRESETS['s7'] == (10, 3, 3)
    with pytest.raises(UsageError):
        preset('s9')


@pytest.mark.parametrize("kwargs", [
    dict(num_relations=5, threshold=0, path_length=2),
    dict(num_relations=2, threshold=2, path_length=3),
    dict(num_relations=5, threshold=2, path_length=0),
    dict(num_relations=5, threshold=2, path_length=2, positive_fraction=1.0),
    dict(num_relations=5, threshold=2, path_length=2, num_targets=1),
])
def test_infeasible_specs_rejected(kwargs):
    with pytest.raises(UsageError):
        ScenarioSpec(**kwargs)


class TestScenarioOne:
    @pytest.fixture(scope="class")
    def scenario(self):
        return generate(small('s1'))

    def test_labels_follow_independent_counts(self, scenario):
        g, labels, truth = scenario
        for v in truth.targets.tolist():
            k = count_occurrences(g, v, truth.metapath)
            assert k == truth.count_of(v)
            assert labels[v] == int(k >= truth.threshold)

    def test_shape_of_the_problem(self, scenario):
        g, labels, truth = scenario
        assert g.num_relations == 5
        assert g.relation_names == tuple(f"rel{i}" for i in range(5))
        assert len(truth.metapath) == 2
        assert len(set(truth.metapath.relations)) == 2
        assert sum(labels.values()) == 45
        # one-hot over target, step1, step2, other plus four noise columns
        assert g.feature_dim == 4 + 4

    def test_no_single_neighbour_reveals_the_label(self, scenario):
        g, _, truth = scenario
        first, rest = truth.metapath[0], MetaPath(truth.metapath.relations[1:])
        remaining = walk_counts(g, rest)
        for v in truth.targets.tolist():
            children = g.successors(v, first)
            assert remaining[children].max(initial=0) <= truth.threshold - 1

    def test_negatives_mostly_at_the_margin(self, scenario):
        _, labels, truth = scenario
        negatives = [truth.count_of(v) for v, label in labels.items() if not label]
        at_margin = sum(1 for k in negatives if k == truth.threshold - 1)
        assert at_margin / len(negatives) >= 0.6

    def test_ground_truth_payload_round_trip(self, scenario):
        g, labels, truth = scenario
        payload = truth.to_dict(g)
        assert payload['path_length'] == 2
        assert not payload['feature_constrained']
        restored = ground_truth_from_dict(g, payload)
        assert restored.metapath == truth.metapath
        np.testing.assert_array_equal(restored.counts, truth.counts)
        assert restored.labels == labels
        assert audit_labels(g, restored)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("name", list(PRESETS))
def test_every_preset_passes_the_audit(name, seed):
    g, labels, truth = generate(small(name, seed=seed))
    num_relations, threshold, path_length = PRESETS[name]
    assert (g.num_relations, truth.threshold, len(truth.metapath)) == (num_relations, threshold, path_length)
    counts = walk_counts(g, truth.metapath)[truth.targets]
    np.testing.assert_array_equal(counts, truth.counts)
    assert all(labels[v] == int(k >= threshold) for v, k in zip(truth.targets.tolist(), counts.tolist()))
    assert 0 < sum(labels.values()) < len(labels)
    rest = walk_counts(g, MetaPath(truth.metapath.relations[1:]))
    for v in truth.targets.tolist():
        assert rest[g.successors(v, truth.metapath[0])].max(initial=0) <= threshold - 1
    assert audit_labels(g, truth)


def test_generation_is_deterministic():
    g1, labels1, truth1 = generate(small('s1', num_targets=80))
    g2, labels2, truth2 = generate(small('s1', num_targets=80))
    assert g1 == g2
    assert labels1 == labels2
    assert truth1.metapath == truth2.metapath
    g3, _, _ = generate(small('s1', num_targets=80, seed=4))
    assert g3 != g1


def test_threshold_one_has_zero_count_negatives():
    g, labels, truth = generate(ScenarioSpec(num_relations=5, threshold=1, path_length=2, num_targets=100, seed=2))
    for v, label in labels.items():
        assert (truth.count_of(v) == 0) == (label == 0)


def test_length_three_scenario():
    g, labels, truth = generate(small('s3', num_targets=100))
    assert len(truth.metapath) == 3
    assert g.num_types == 5
    assert truth.to_dict(g)['path_length'] == 3
    assert audit_labels(g, truth)


def test_length_one_scenario():
    g, labels, truth = generate(ScenarioSpec(num_relations=3, threshold=3, path_length=1, num_targets=60, seed=5))
    for v in truth.targets.tolist():
        assert g.out_degree(truth.metapath[0])[v] == truth.count_of(v)


def test_feature_constrained_scenario():
    g, labels, truth = generate(small('s1', num_targets=100, feature_constrained=True))
    assert truth.terminal_mask is not None
    assert g.feature_dim == 4 + 4 + 1
    masked = walk_counts(g, truth.metapath, truth.terminal_mask)
    plain = walk_counts(g, truth.metapath)
    np.testing.assert_array_equal(masked[truth.targets], truth.counts)
    # spurious occurrences end in invalid nodes
    assert (plain[truth.targets] >= masked[truth.targets]).all()
    assert (plain[truth.targets] > masked[truth.targets]).any()
    restored = ground_truth_from_dict(g, truth.to_dict(g))
    np.testing.assert_array_equal(restored.terminal_mask, truth.terminal_mask)
    assert audit_labels(g, restored)


def test_exhausted_buckets_raise():
    rng = np.random.default_rng(0)
    with pytest.raises(DataError):
        _pick_summing(rng, {1: np.array([5, 6])}, 3, 1)


class TestLookaheadFixture:
    @pytest.fixture(scope="class")
    def fixture(self):
        return make_lookahead_fixture(num_targets=120, seed=1)

    def test_first_step_is_uninformative(self, fixture):
        g, _, truth = fixture
        r1 = g.relation_id("r1")
        assert (g.out_degree(r1)[truth.targets] == 4).all()

    def test_counts_and_labels(self, fixture):
        g, labels, truth = fixture
        assert truth.metapath == MetaPath((0, 1))
        for v in truth.targets.tolist():
            k = count_occurrences(g, v, truth.metapath)
            assert k == truth.count_of(v)
            if labels[v]:
                assert 4 <= k <= 7
            else:
                assert 2 <= k <= 3

    def test_direct_edges_correlate_with_label(self, fixture):
        g, labels, _ = fixture
        degree = g.out_degree(g.relation_id("r2"))
        for v, label in labels.items():
            assert (2 <= degree[v] <= 5) if label else (degree[v] <= 3)

    def test_invalid_arguments(self):
        with pytest.raises(UsageError):
            make_lookahead_fixture(num_targets=1)
