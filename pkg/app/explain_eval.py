"""
Explanation Faithfulness - sufficiency and necessity of learned meta-paths.

Sufficiency: edits outside the meta-path induced subgraphs must leave every
predicted probability bit-identical. Necessity: destroying a fraction of the
meta-path occurrences of each target should lower the probability of the class
predicted on the untouched graph; the model is frozen, never retrained.
"""

from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from . import config
from .errors import UsageError
from .graph import HeteroGraph, MetaPath, enumerate_occurrences, induced_edge_union, occurrence_edges
from .model import MpsGnnModel, f1, forward, label_arrays
from .reporting import log
from .scoring import derive_seed

Edge = Tuple[int, int, int]

_INSERTION_ATTEMPTS = 50


@dataclass
class RemovalPlan:
    fraction: float
    seed: int = config.DEFAULT_SEED
    removed: Dict[int, List[Edge]] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise UsageError(f"Removal fraction must lie in [0, 1], got {self.fraction}")

    @property
    def removed_edges(self) -> Set[Edge]:
        return {edge for edges in self.removed.values() for edge in edges}


def remove_occurrences(g: HeteroGraph, mps: Sequence[MetaPath], targets: Sequence[int],
                       plan: RemovalPlan) -> HeteroGraph:
    """Destroy about ``plan.fraction`` of each target's meta-path occurrences.

    Every target gets a goal of ``fraction * occurrences`` destroyed walks,
    rounded stochastically. Targets are processed in id order and their walks
    in random order. A walk is cut at its final edge when that keeps every
    target within its goal, otherwise at the latest edge that does; cuts made
    for one target count towards the goals of the targets sharing the edge.
    Removed edges are recorded per target in ``plan.removed``.
    """
    rng = np.random.default_rng(plan.seed)
    order = sorted({int(t) for t in targets})
    walks: Dict[int, List[List[Edge]]] = {}
    through: Dict[Edge, List[Tuple[int, int]]] = defaultdict(list)
    for v in order:
        walks[v] = [occurrence_edges(mp, walk) for mp in mps for walk in enumerate_occurrences(g, v, mp)]
        for i, edges in enumerate(walks[v]):
            for edge in set(edges):
                through[edge].append((v, i))
    goal = {v: int(np.floor(plan.fraction * len(walks[v]) + rng.random())) for v in order}
    destroyed: Dict[int, Set[int]] = {v: set() for v in order}
    removed: Set[Edge] = set()

    def hits(edge: Edge) -> Counter:
        return Counter(w for w, i in through[edge] if i not in destroyed[w])

    for v in order:
        mine: List[Edge] = []
        for i in rng.permutation(len(walks[v])):
            done = len(destroyed[v])
            if done >= goal[v]:
                break
            if int(i) in destroyed[v]:
                continue
            choice, overshoot = None, None
            for edge in reversed(walks[v][int(i)]):
                counts = hits(edge)
                if any(len(destroyed[w]) + n > goal[w] for w, n in counts.items() if w != v):
                    continue
                after = done + counts[v]
                if after <= goal[v]:
                    choice = edge
                    break
                if overshoot is None or after < overshoot[1]:
                    overshoot = (edge, after)
            if choice is None and overshoot is not None and overshoot[1] - goal[v] < goal[v] - done:
                choice = overshoot[0]
            if choice is None:
                continue
            removed.add(choice)
            mine.append(choice)
            for w, j in through[choice]:
                destroyed[w].add(j)
        if mine:
            plan.removed[v] = mine
    if not removed:
        return g
    return g.with_edges(removed=sorted(removed))


def destroyed_share(g: HeteroGraph, g_removed: HeteroGraph, mps: Sequence[MetaPath], v: int) -> Optional[float]:
    """Share of v's occurrences missing from g_removed; None if v has none."""
    before = sum(len(enumerate_occurrences(g, v, mp)) for mp in mps)
    if before == 0:
        return None
    after = sum(len(enumerate_occurrences(g_removed, v, mp)) for mp in mps)
    return (before - after) / before


def necessity_from_probabilities(original: np.ndarray, modified: np.ndarray) -> float:
    """Mean drop of the originally predicted class probability.

    Both arrays have shape (targets, classes); the class is chosen on ``original``.
    """
    original = np.asarray(original, dtype=np.float64)
    modified = np.asarray(modified, dtype=np.float64)
    if original.shape != modified.shape:
        raise UsageError("Probability arrays must have the same shape")
    if len(original) == 0:
        return 0.0
    rows = np.arange(len(original))
    predicted = original.argmax(axis=1)
    return float(np.mean(original[rows, predicted] - modified[rows, predicted]))


def necessity(model: MpsGnnModel, g: HeteroGraph, g_removed: HeteroGraph, targets: Sequence[int]) -> float:
    targets = list(targets)
    return necessity_from_probabilities(model.predict_proba(g, targets), model.predict_proba(g_removed, targets))


@dataclass
class FaithfulnessReport:
    baseline_f1: float
    rows: List[Dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def csv_rows(self) -> List[Dict[str, float]]:
        return [{'fraction': row['fraction'], 'f1': row['f1'], 'necessity': row['necessity']} for row in self.rows]


def faithfulness_sweep(model: MpsGnnModel, g: HeteroGraph, labels: Mapping[int, int],
                       fractions: Sequence[float] = config.REMOVAL_FRACTIONS,
                       seed: int = config.DEFAULT_SEED) -> FaithfulnessReport:
    """Frozen-model F1 and necessity for every removal fraction."""
    targets, gold = label_arrays(labels)
    baseline_f1 = f1(model.predict(g, targets), gold)
    report = FaithfulnessReport(baseline_f1)
    for index, fraction in enumerate(fractions):
        plan = RemovalPlan(float(fraction), derive_seed(seed, index))
        g_removed = remove_occurrences(g, model.metapaths, targets, plan)
        shares = [s for s in (destroyed_share(g, g_removed, model.metapaths, int(v)) for v in targets) if s is not None]
        row = {
            'fraction': float(fraction),
            'f1': f1(model.predict(g_removed, targets), gold),
            'necessity': necessity(model, g, g_removed, targets),
            'destroyed_share': float(np.mean(shares)) if shares else 0.0,
            'removed_edges': len(plan.removed_edges),
        }
        report.rows.append(row)
        log("Evaluate", f"fraction {fraction}: F1={row['f1']:.3f} necessity={row['necessity']:.4f}")
    return report


@dataclass
class SufficiencyReport:
    passed: bool
    perturbations: int
    deletions: int = 0
    insertions: int = 0
    failure: Optional[Dict[str, Any]] = None

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload['verdict'] = self.verdict
        return payload


def _random_insertion(rng: np.random.Generator, g: HeteroGraph, targets: Sequence[int],
                      mps: Sequence[MetaPath], protected: Set[Edge]) -> Optional[Edge]:
    """A new edge whose insertion leaves every induced subgraph unchanged."""
    for _ in range(_INSERTION_ATTEMPTS):
        edge = (int(rng.integers(g.num_nodes)), int(rng.integers(g.num_relations)), int(rng.integers(g.num_nodes)))
        if g.has_edge(*edge):
            continue
        if induced_edge_union(g.with_edges(added=[edge]), targets, mps) == protected:
            return edge
    return None


def _random_deletion(rng: np.random.Generator, g: HeteroGraph, protected: Set[Edge]) -> Optional[Edge]:
    if g.num_edges <= len(protected):
        return None
    while True:
        edge = tuple(int(x) for x in g.edges[int(rng.integers(g.num_edges))])
        if edge not in protected:
            return edge


def sufficiency_check(model: MpsGnnModel, g: HeteroGraph, targets: Sequence[int],
                      mps: Optional[Sequence[MetaPath]] = None,
                      num_perturbations: int = config.SUFFICIENCY_PERTURBATIONS,
                      seed: int = config.DEFAULT_SEED) -> SufficiencyReport:
    """Apply random edits outside the induced subgraphs and compare probabilities bit for bit.

    Edits accumulate: each one is applied to the graph left by the previous ones.
    Stops at the first edit that changes any target's probabilities.
    """
    mps = list(model.metapaths if mps is None else mps)
    targets = sorted(int(t) for t in targets)
    protected = induced_edge_union(g, targets, mps)
    reference = forward(model, g, mps, targets)
    rng = np.random.default_rng(seed)
    report = SufficiencyReport(passed=True, perturbations=0)
    current = g

    for step in range(num_perturbations):
        edge = None
        if rng.random() < 0.5:
            edge = _random_insertion(rng, current, targets, mps, protected)
            kind = 'insert'
        if edge is None:
            edge = _random_deletion(rng, current, protected)
            kind = 'delete'
            if edge is None:
                continue
        if kind == 'insert':
            current = current.with_edges(added=[edge])
            report.insertions += 1
        else:
            current = current.with_edges(removed=[edge])
            report.deletions += 1
        report.perturbations += 1

        probabilities = forward(model, current, mps, targets)
        if not np.array_equal(probabilities, reference):
            changed = np.flatnonzero(np.any(probabilities != reference, axis=1))
            report.passed = False
            report.failure = {
                'step': step,
                'edit': kind,
                'edge': [current.relation_names[edge[1]], edge[0], edge[2]],
                'target': targets[int(changed[0])],
            }
            log("Evaluate", f"sufficiency FAILED at edit {step}: {kind} {edge}")
            return report
    log("Evaluate", f"sufficiency passed: {report.perturbations} edits "
                    f"({report.deletions} deletions, {report.insertions} insertions)")
    return report


def inside_edit_self_test(model: MpsGnnModel, g: HeteroGraph, targets: Sequence[int],
                          mps: Optional[Sequence[MetaPath]] = None,
                          seed: int = config.DEFAULT_SEED) -> Dict[str, Any]:
    """Delete one induced-subgraph edge and report whether any probability moved."""
    mps = list(model.metapaths if mps is None else mps)
    targets = sorted(int(t) for t in targets)
    protected = sorted(induced_edge_union(g, targets, mps))
    if not protected:
        return {'edge': None, 'changed': False}
    rng = np.random.default_rng(seed)
    edge = protected[int(rng.integers(len(protected)))]
    before = forward(model, g, mps, targets)
    after = forward(model, g.with_edges(removed=[edge]), mps, targets)
    changed = np.flatnonzero(np.any(before != after, axis=1))
    return {
        'edge': [g.relation_names[edge[1]], edge[0], edge[2]],
        'changed': bool(len(changed)),
        'targets_changed': [targets[int(i)] for i in changed],
    }
