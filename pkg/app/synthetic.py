"""
Synthetic Scenarios - count-threshold node classification with a known meta-path.

A target node is positive iff it starts at least ``threshold`` occurrences of the
ground-truth meta-path. Occurrence counts are planted backwards: every node of the
last path layer completes one occurrence, and each node of an earlier layer is
wired to distinct next-layer nodes whose counts add up to its planned count.
Targets pick step-1 nodes whose counts add up to the target's count, each part
capped below the threshold, so no single neighbour gives the label away. Negatives
mostly sit one occurrence short of the threshold and everyone receives zero-count
decoy prefixes. Remaining relations are distractors into a pool of unrelated
nodes with label-independent degree.

``make_lookahead_fixture`` builds the three-relation graph where the best
relation to start with is useless on its own.
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import config
from .errors import DataError, UsageError
from .graph import (
    HeteroGraph,
    MetaPath,
    count_occurrences,
    enumerate_occurrences,
    occurrence_edges,
    type_one_hot,
    walk_counts,
)
from .reporting import log

Labels = Dict[int, int]

# Bucket sizes guaranteed for every planned count value in a layer pool
_MIN_BUCKET = 6
_NEGATIVE_AT_MARGIN = 0.7
_MAX_DECOYS = 2


@dataclass
class ScenarioSpec:
    num_relations: int
    threshold: int
    path_length: int
    num_targets: int = config.SYNTHETIC_TARGETS
    positive_fraction: float = config.POSITIVE_FRACTION
    distractor_density: float = config.DISTRACTOR_DENSITY
    max_branching: int = config.MAX_BRANCHING
    noise_features: int = config.NOISE_FEATURES
    feature_constrained: bool = False
    seed: int = config.DEFAULT_SEED

    def __post_init__(self):
        if self.threshold < 1:
            raise UsageError(f"threshold must be at least 1, got {self.threshold}")
        if self.path_length < 1:
            raise UsageError(f"path length must be at least 1, got {self.path_length}")
        if self.num_relations < self.path_length:
            raise UsageError(f"{self.num_relations} relations cannot hold a meta-path of length {self.path_length}")
        if self.num_targets < 2:
            raise UsageError("at least two targets are needed")
        if not 0 < self.positive_fraction < 1:
            raise UsageError(f"positive fraction must lie in (0, 1), got {self.positive_fraction}")
        if self.max_branching < 1:
            raise UsageError("max branching must be at least 1")
        if self.distractor_density < 0 or self.noise_features < 0:
            raise UsageError("distractor density and noise features must be non-negative")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# (|R|, c, l) of the eight canonical scenarios
PRESETS: Dict[str, Tuple[int, int, int]] = {
    's1': (5, 2, 2),
    's2': (5, 2, 3),
    's3': (5, 3, 3),
    's4': (5, 4, 2),
    's5': (10, 2, 2),
    's6': (10, 2, 3),
    's7': (10, 3, 3),
    's8': (10, 4, 2),
}


def preset(name: str, **overrides) -> ScenarioSpec:
    key = name.lower()
    if key not in PRESETS:
        raise UsageError(f"Unknown preset '{name}', expected one of {', '.join(PRESETS)}")
    num_relations, threshold, path_length = PRESETS[key]
    return ScenarioSpec(num_relations=num_relations, threshold=threshold, path_length=path_length, **overrides)


@dataclass
class ScenarioGroundTruth:
    metapath: MetaPath
    threshold: int
    targets: np.ndarray
    counts: np.ndarray
    labels: Labels
    terminal_mask: Optional[np.ndarray] = field(default=None, repr=False)

    def count_of(self, v: int) -> int:
        return int(self.counts[np.searchsorted(self.targets, v)])

    def explanation(self, g: HeteroGraph, v: int) -> List[Tuple[int, int, int]]:
        """Edges of the meta-path occurrences starting at v."""
        edges = set()
        for walk in enumerate_occurrences(g, v, self.metapath):
            if self.terminal_mask is None or self.terminal_mask[walk[-1]]:
                edges.update(occurrence_edges(self.metapath, walk))
        return sorted(edges)

    def to_dict(self, g: HeteroGraph) -> Dict[str, Any]:
        return {
            'metapath': self.metapath.names(g),
            'threshold': self.threshold,
            'path_length': len(self.metapath),
            'feature_constrained': self.terminal_mask is not None,
            'targets': [[int(v), int(k), self.labels[int(v)]] for v, k in zip(self.targets, self.counts)],
        }


def _planned_counts(rng: np.random.Generator, size: int, max_count: int) -> np.ndarray:
    planned = rng.integers(0, max_count + 1, size)
    guaranteed = np.tile(np.arange(max_count + 1), _MIN_BUCKET)
    planned[:len(guaranteed)] = guaranteed
    return rng.permutation(planned)


def _buckets(nodes: np.ndarray, counts: np.ndarray) -> Dict[int, np.ndarray]:
    return {int(value): nodes[counts == value] for value in np.unique(counts)}


def _pick_summing(rng: np.random.Generator, buckets: Dict[int, np.ndarray], total: int, cap: int) -> List[int]:
    """Distinct nodes whose counts add up to ``total``, each count at most ``cap``."""
    chosen: List[int] = []
    used = set()
    exhausted = set()
    remaining = total
    while remaining > 0:
        values = [value for value in buckets if 1 <= value <= min(cap, remaining) and value not in exhausted]
        if not values:
            raise DataError(f"Not enough nodes to plant {total} occurrences")
        value = int(rng.choice(values))
        candidates = [int(u) for u in buckets[value] if int(u) not in used]
        if not candidates:
            exhausted.add(value)
            continue
        node = int(rng.choice(candidates))
        used.add(node)
        chosen.append(node)
        remaining -= value
    return chosen


def _pick_decoys(rng: np.random.Generator, buckets: Dict[int, np.ndarray], upto: int) -> List[int]:
    zeros = buckets.get(0)
    if zeros is None or len(zeros) == 0 or upto == 0:
        return []
    amount = int(rng.integers(0, upto + 1))
    return [int(u) for u in rng.choice(zeros, size=min(amount, len(zeros)), replace=False)]


def _target_counts(rng: np.random.Generator, labels: np.ndarray, threshold: int) -> np.ndarray:
    counts = np.empty(len(labels), dtype=np.int64)
    for i, label in enumerate(labels):
        if label:
            counts[i] = rng.integers(threshold, threshold + 3)
        elif rng.random() < _NEGATIVE_AT_MARGIN:
            counts[i] = threshold - 1
        else:
            counts[i] = rng.integers(0, threshold)
    return counts


def _features(rng: np.random.Generator, node_types: np.ndarray, num_types: int,
              noise_features: int, extra: Optional[np.ndarray] = None) -> np.ndarray:
    blocks = [type_one_hot(node_types, num_types), rng.random((len(node_types), noise_features))]
    if extra is not None:
        blocks.append(extra.reshape(-1, 1).astype(np.float64))
    return np.hstack(blocks)


def _distractor_edges(rng: np.random.Generator, sources: np.ndarray, pool: np.ndarray,
                      relation: int, density: float) -> List[Tuple[int, int, int]]:
    edges = []
    degrees = np.minimum(rng.poisson(density, len(sources)), len(pool))
    for u, degree in zip(sources, degrees):
        for v in rng.choice(pool, size=int(degree), replace=False):
            edges.append((int(u), relation, int(v)))
    return edges


def _audit(g: HeteroGraph, truth: ScenarioGroundTruth):
    """Recount every target with an independent counter and check its label."""
    recounted = walk_counts(g, truth.metapath, truth.terminal_mask)[truth.targets]
    for v, planned, dp_count in zip(truth.targets, truth.counts, recounted):
        if truth.terminal_mask is None:
            oracle = count_occurrences(g, int(v), truth.metapath)
        else:
            oracle = sum(1 for walk in enumerate_occurrences(g, int(v), truth.metapath) if truth.terminal_mask[walk[-1]])
        if not planned == dp_count == oracle:
            raise DataError(f"Generator audit failed for node {v}: planned {planned}, counted {dp_count}/{oracle}")
        if (oracle >= truth.threshold) != bool(truth.labels[int(v)]):
            raise DataError(f"Generator audit failed for node {v}: count {oracle} contradicts label {truth.labels[int(v)]}")


def generate(spec: ScenarioSpec) -> Tuple[HeteroGraph, Labels, ScenarioGroundTruth]:
    """Build a scenario graph, its target labels and the ground truth.

    Raises:
        UsageError: for an infeasible spec (raised when the spec is built)
        DataError: if the post-generation audit disagrees with the planted labels
    """
    rng = np.random.default_rng(spec.seed)
    n, length, cap = spec.num_targets, spec.path_length, spec.max_branching
    pool_size = max(n, 2 * _MIN_BUCKET * (cap + 1))

    relation_ids = rng.permutation(spec.num_relations)
    true_relations = [int(r) for r in relation_ids[:length]]
    distractors = [int(r) for r in relation_ids[length:]]

    # Node id layout: targets, step layers 1..l, distractor pool
    layers = [np.arange(n)]
    for step in range(length):
        start = n + step * pool_size
        layers.append(np.arange(start, start + pool_size))
    other = np.arange(n + length * pool_size, n + (length + 1) * pool_size)
    num_nodes = int(other[-1]) + 1
    node_types = np.empty(num_nodes, dtype=np.int64)
    for type_index, nodes in enumerate(layers + [other]):
        node_types[nodes] = type_index
    type_names = ["target"] + [f"step{i}" for i in range(1, length + 1)] + ["other"]

    counts = np.zeros(num_nodes, dtype=np.int64)
    terminal_mask = None
    terminal = layers[-1]
    if spec.feature_constrained:
        valid = np.zeros(num_nodes, dtype=bool)
        valid[terminal] = rng.random(len(terminal)) < 0.5
        valid[terminal[:cap * _MIN_BUCKET]] = True
        terminal_mask = valid
        counts[terminal] = valid[terminal]
    else:
        counts[terminal] = 1

    edges: List[Tuple[int, int, int]] = []
    for step in range(length - 1, 0, -1):
        relation = true_relations[step]
        nodes = layers[step]
        below = _buckets(layers[step + 1], counts[layers[step + 1]])
        planned = _planned_counts(rng, len(nodes), cap)
        for u, q in zip(nodes, planned):
            children = _pick_summing(rng, below, int(q), cap) + _pick_decoys(rng, below, 1)
            edges.extend((int(u), relation, c) for c in children)
        counts[nodes] = planned
    if spec.feature_constrained:
        # spurious instances: right relation sequence, invalid final node
        last_relation = true_relations[-1]
        invalid = terminal[~terminal_mask[terminal]]
        sources = layers[-2] if length > 1 else layers[0]
        for u in sources:
            amount = int(rng.integers(0, 3))
            for v in rng.choice(invalid, size=min(amount, len(invalid)), replace=False):
                edges.append((int(u), last_relation, int(v)))

    labels_array = np.zeros(n, dtype=np.int64)
    labels_array[rng.permutation(n)[:int(round(spec.positive_fraction * n))]] = 1
    target_counts = _target_counts(rng, labels_array, spec.threshold)
    if length == 1:
        # each target completes its occurrences directly on last-layer nodes
        step_one = _buckets(terminal, counts[terminal])
        for v, k in zip(layers[0], target_counts):
            edges.extend((int(v), true_relations[0], c) for c in _pick_summing(rng, step_one, int(k), 1))
    else:
        step_one = _buckets(layers[1], counts[layers[1]])
        part_cap = max(1, spec.threshold - 1)
        for v, k in zip(layers[0], target_counts):
            children = _pick_summing(rng, step_one, int(k), part_cap) + _pick_decoys(rng, step_one, _MAX_DECOYS)
            edges.extend((int(v), true_relations[0], c) for c in children)

    for index, relation in enumerate(distractors):
        sources = layers[index % length]
        edges.extend(_distractor_edges(rng, sources, other, relation, spec.distractor_density))

    features = _features(rng, node_types, len(type_names), spec.noise_features, terminal_mask)
    relation_names = [f"rel{r}" for r in range(spec.num_relations)]
    g = HeteroGraph(node_types, type_names, features, relation_names, edges)

    labels = {int(v): int(label) for v, label in zip(layers[0], labels_array)}
    truth = ScenarioGroundTruth(MetaPath(tuple(true_relations)), spec.threshold, layers[0].copy(),
                                target_counts, labels, terminal_mask)
    _audit(g, truth)
    log("Synthetic", f"{num_nodes} nodes, {g.num_edges} edges, {int(labels_array.sum())}/{n} positive; "
                     f"ground truth {truth.metapath.describe(g)} (c={spec.threshold}); audit passed")
    return g, labels, truth


def make_lookahead_fixture(num_targets: int = 600, threshold: int = 4,
                           seed: int = config.DEFAULT_SEED) -> Tuple[HeteroGraph, Labels, ScenarioGroundTruth]:
    """Three relations where the ground truth r1->r2 starts with an uninformative step.

    r1 links every target to the same number of intermediate nodes, r2 links an
    intermediate node to 0-3 leaves and also links targets directly to leaves with
    a label-correlated degree, r3 is noise. Labels follow the number of r1->r2
    occurrences.
    """
    if threshold < 1 or num_targets < 2:
        raise UsageError("lookahead fixture needs threshold >= 1 and at least two targets")
    rng = np.random.default_rng(seed)
    slots, max_leaves = 4, 3
    n = num_targets
    pool = max(n, 2 * _MIN_BUCKET * (max_leaves + 1))
    targets = np.arange(n)
    a_nodes = np.arange(n, n + pool)
    b_nodes = np.arange(n + pool, n + 2 * pool)
    c_nodes = np.arange(n + 2 * pool, n + 3 * pool)
    node_types = np.concatenate([np.zeros(n), np.ones(pool), np.full(pool, 2), np.full(pool, 3)]).astype(np.int64)
    r1, r2, r3 = 0, 1, 2

    edges: List[Tuple[int, int, int]] = []
    a_counts = _planned_counts(rng, pool, max_leaves)
    for u, q in zip(a_nodes, a_counts):
        edges.extend((int(u), r2, int(v)) for v in rng.choice(b_nodes, size=int(q), replace=False))
    buckets = _buckets(a_nodes, a_counts)

    labels_array = np.zeros(n, dtype=np.int64)
    labels_array[rng.permutation(n)[:int(round(config.POSITIVE_FRACTION * n))]] = 1
    counts = np.empty(n, dtype=np.int64)
    for i, (v, label) in enumerate(zip(targets, labels_array)):
        k = rng.integers(threshold, threshold + 4) if label else rng.integers(max(0, threshold - 2), threshold)
        k = int(min(k, slots * max_leaves))
        filled = np.zeros(slots, dtype=np.int64)
        for _ in range(k):
            open_slots = np.flatnonzero(filled < max_leaves)
            filled[rng.choice(open_slots)] += 1
        chosen = set()
        for value in filled:
            candidates = [int(u) for u in buckets[int(value)] if int(u) not in chosen]
            chosen.add(int(rng.choice(candidates)))
        edges.extend((int(v), r1, u) for u in sorted(chosen))
        counts[i] = k
        direct = rng.integers(2, 6) if label else rng.integers(0, 4)
        edges.extend((int(v), r2, int(u)) for u in rng.choice(b_nodes, size=int(direct), replace=False))
        edges.extend((int(v), r3, int(u)) for u in rng.choice(c_nodes, size=int(rng.integers(1, 4)), replace=False))

    type_names = ["target", "a", "b", "c"]
    features = _features(rng, node_types, len(type_names), config.NOISE_FEATURES)
    g = HeteroGraph(node_types, type_names, features, ["r1", "r2", "r3"], edges)
    labels = {int(v): int(label) for v, label in zip(targets, labels_array)}
    truth = ScenarioGroundTruth(MetaPath((r1, r2)), threshold, targets, counts, labels)
    _audit(g, truth)
    log("Synthetic", f"lookahead fixture: {n} targets, {int(labels_array.sum())} positive, threshold {threshold}")
    return g, labels, truth


def audit_labels(g: HeteroGraph, truth: ScenarioGroundTruth) -> bool:
    """Re-run the generator audit on a (possibly reloaded) scenario."""
    _audit(g, truth)
    return True


def ground_truth_from_dict(g: HeteroGraph, payload: Dict[str, Any]) -> ScenarioGroundTruth:
    rows = sorted(payload['targets'])
    targets = np.array([row[0] for row in rows], dtype=np.int64)
    counts = np.array([row[1] for row in rows], dtype=np.int64)
    labels = {int(row[0]): int(row[2]) for row in rows}
    metapath = MetaPath.from_names(g, payload['metapath'], l_max=max(len(payload['metapath']), 1))
    terminal_mask = None
    if payload.get('feature_constrained'):
        terminal_mask = g.features[:, -1] > 0.5
    return ScenarioGroundTruth(metapath, int(payload['threshold']), targets, counts, labels, terminal_mask)


def scenario_names() -> Sequence[str]:
    return tuple(PRESETS)
