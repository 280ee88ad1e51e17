"""
Meta-path Search - greedy, beam-searched construction of meta-paths.

Every live prefix scores all relations leaving its bag members. A relation passes if
its optimized loss is below eta times its random-parameter baseline; a prefix with
no passing relation stops. Among all passing one-step extensions the beam keeps the
``beam_k`` with the lowest loss (ties: parent order, then lowest relation id). Each
kept extension propagates its parent's bags and is evaluated by training a small
MPS-GNN; every beam entry carries the best prefix seen on its lineage, updated when
validation F1 strictly improves (or ties with a lower validation loss).

The comparator ``greedy_by_f1_baseline`` extends a single path with whichever
relation gives the best trained-model F1 right away.
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from . import config
from .errors import UsageError
from .graph import HeteroGraph, MetaPath, walk_counts
from .model import TrainConfig, label_arrays, train
from .reporting import log
from .scoring import (
    BagSets,
    OptimizerConfig,
    candidate_relations,
    derive_seed,
    propagate_bags,
    score_relation,
)


def _search_train_config() -> TrainConfig:
    return TrainConfig(max_epochs=config.SEARCH_EPOCHS, patience=config.SEARCH_PATIENCE)


@dataclass
class SearchConfig:
    l_max: int = config.L_MAX
    eta: float = config.ETA
    beam_k: int = config.BEAM_SIZE
    seed: int = config.DEFAULT_SEED
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    train: TrainConfig = field(default_factory=_search_train_config)

    def __post_init__(self):
        if self.l_max < 1:
            raise UsageError("l_max must be at least 1")
        if not 0 < self.eta <= 1:
            raise UsageError(f"eta must lie in (0, 1], got {self.eta}")
        if self.beam_k < 1:
            raise UsageError("beam_k must be at least 1")

    def train_config(self) -> TrainConfig:
        """Prefix-evaluation training settings seeded from the search seed."""
        settings = asdict(self.train)
        settings['seed'] = self.seed
        return TrainConfig(**settings)


@dataclass
class PrefixEvaluation:
    val_f1: float
    val_loss: float
    test_f1: float

    def better_than(self, f1_score: float, val_loss: float) -> bool:
        return self.val_f1 > f1_score or (self.val_f1 == f1_score and self.val_loss < val_loss)


@dataclass
class SearchTrace:
    """Everything the search looked at, serializable as a report."""

    num_relations: int
    l_max: int
    beam_k: int
    eta: float
    iterations: List[Dict[str, Any]] = field(default_factory=list)
    score_calls: int = 0
    metapaths: List[List[str]] = field(default_factory=list)
    ranking: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def call_bound(self) -> int:
        return self.beam_k * self.num_relations * self.l_max

    @property
    def best_f1_history(self) -> List[float]:
        return [it['best_f1'] for it in self.iterations]

    @property
    def best_metapath(self) -> List[str]:
        return self.metapaths[0] if self.metapaths else []

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload['call_bound'] = self.call_bound
        return payload


@dataclass
class _BeamEntry:
    path: MetaPath
    bags: BagSets
    best_path: MetaPath
    best_f1: float = 0.0
    best_val_loss: float = float('inf')


class _PrefixEvaluator:
    """Trains one MPS-GNN per distinct prefix and caches the result."""

    def __init__(self, g: HeteroGraph, labels: Mapping[int, int], train_cfg: TrainConfig):
        self.g = g
        self.labels = labels
        self.train_cfg = train_cfg
        self.cache: Dict[Tuple[int, ...], PrefixEvaluation] = {}

    def __call__(self, path: MetaPath) -> PrefixEvaluation:
        if path.relations not in self.cache:
            _, metrics = train(self.g, [path], self.labels, self.train_cfg)
            self.cache[path.relations] = PrefixEvaluation(metrics.val_f1, metrics.val_loss, metrics.test_f1)
        return self.cache[path.relations]


def learn_metapaths(g: HeteroGraph, labels: Mapping[int, int],
                    cfg: Optional[SearchConfig] = None) -> Tuple[List[MetaPath], SearchTrace]:
    """Learn up to ``beam_k`` meta-paths ranked by validation F1.

    Args:
        g: Graph
        labels: node id -> 0/1 for the target nodes
        cfg: Search settings

    Returns:
        (meta-paths, trace). The list is empty when no relation passes the eta guard
        in the first iteration.
    """
    cfg = cfg or SearchConfig()
    bags = BagSets.from_labels(labels)
    bags.require_both_classes()
    evaluate = _PrefixEvaluator(g, labels, cfg.train_config())
    trace = SearchTrace(g.num_relations, cfg.l_max, cfg.beam_k, cfg.eta)

    live = [_BeamEntry(MetaPath(), bags, MetaPath())]
    finished: List[_BeamEntry] = []
    running_best = 0.0

    for iteration in range(1, cfg.l_max + 1):
        if not live:
            break
        record: Dict[str, Any] = {'iteration': iteration, 'prefixes': [], 'selected': []}
        extensions = []
        stopped = set()
        for idx, entry in enumerate(live):
            prefix_record: Dict[str, Any] = {'prefix': entry.path.names(g), 'candidates': [], 'stop': None}
            record['prefixes'].append(prefix_record)
            if not entry.bags.positives or not entry.bags.negatives:
                prefix_record['stop'] = {'reason': 'single-class bags'}
                stopped.add(idx)
                continue
            relations = candidate_relations(g, entry.bags)
            if not relations:
                prefix_record['stop'] = {'reason': 'no outgoing relation'}
                stopped.add(idx)
                continue

            scored = []
            for r in relations:
                seed = derive_seed(cfg.seed, len(entry.path), *entry.path.relations, r)
                result = score_relation(g, entry.bags, r, cfg.optimizer, seed)
                trace.score_calls += 1
                scored.append(result)
                prefix_record['candidates'].append({
                    'relation': g.relation_names[r],
                    'loss': result.loss,
                    'baseline': result.baseline_loss,
                    'passed': result.passes(cfg.eta),
                })
            best = min(scored, key=lambda s: (s.loss, s.relation))
            passing = [s for s in scored if s.passes(cfg.eta)]
            if not passing:
                prefix_record['stop'] = {
                    'reason': 'eta',
                    'relation': g.relation_names[best.relation],
                    'loss': best.loss,
                    'baseline': best.baseline_loss,
                }
                stopped.add(idx)
                continue
            extensions.extend((s.loss, idx, s.relation, s) for s in passing)

        extensions.sort(key=lambda item: (item[0], item[1], item[2]))
        selected = extensions[:cfg.beam_k]
        expanded = {idx for _, idx, _, _ in selected}
        for idx, entry in enumerate(live):
            if idx in stopped or idx not in expanded:
                finished.append(entry)

        next_live = []
        for loss, idx, r, scored_relation in selected:
            parent = live[idx]
            path = parent.path.extend(r)
            child = _BeamEntry(path, propagate_bags(g, parent.bags, scored_relation),
                               parent.best_path, parent.best_f1, parent.best_val_loss)
            evaluation = evaluate(path)
            if evaluation.better_than(child.best_f1, child.best_val_loss):
                child.best_path = path
                child.best_f1 = evaluation.val_f1
                child.best_val_loss = evaluation.val_loss
            next_live.append(child)
            record['selected'].append({
                'metapath': path.names(g),
                'loss': loss,
                'val_f1': evaluation.val_f1,
                'val_loss': evaluation.val_loss,
            })

        for entry in next_live + finished:
            running_best = max(running_best, entry.best_f1)
        record['best_f1'] = running_best
        trace.iterations.append(record)
        log("Search", f"iteration {iteration}: "
                      + (", ".join(f"{'->'.join(s['metapath'])} loss={s['loss']:.4g} F1={s['val_f1']:.3f}"
                                   for s in record['selected']) or "no extension passed"))
        live = next_live

    finished.extend(live)

    best_by_path: Dict[Tuple[int, ...], _BeamEntry] = {}
    for entry in finished:
        if len(entry.best_path) == 0:
            continue
        key = entry.best_path.relations
        known = best_by_path.get(key)
        if known is None or (entry.best_f1, -entry.best_val_loss) > (known.best_f1, -known.best_val_loss):
            best_by_path[key] = entry
    ranked = sorted(best_by_path.values(),
                    key=lambda e: (-e.best_f1, e.best_val_loss, len(e.best_path), e.best_path.relations))
    result = [entry.best_path for entry in ranked[:cfg.beam_k]]
    trace.metapaths = [mp.names(g) for mp in result]
    trace.ranking = [{'metapath': e.best_path.names(g), 'val_f1': e.best_f1, 'val_loss': e.best_val_loss}
                     for e in ranked]
    log("Search", f"{trace.score_calls} relation scorings (bound {trace.call_bound}); "
                  f"result: {[mp.describe(g) for mp in result] or 'none'}")
    return result, trace


def _extensions(g: HeteroGraph, nodes: np.ndarray, path: MetaPath) -> List[int]:
    """Relations r such that path + r has at least one occurrence from the labelled nodes."""
    return [r for r in range(g.num_relations) if walk_counts(g, path.extend(r))[nodes].sum() > 0]


def greedy_by_f1_baseline(g: HeteroGraph, labels: Mapping[int, int],
                          cfg: Optional[SearchConfig] = None) -> Tuple[MetaPath, Dict[str, Any]]:
    """Extend one path with the relation whose trained MPS-GNN has the best validation F1.

    Stops at ``l_max``, when no extension has an occurrence, or when the best
    extension does not improve on the current path's F1.
    """
    cfg = cfg or SearchConfig()
    BagSets.from_labels(labels).require_both_classes()
    nodes, _ = label_arrays(labels)
    evaluate = _PrefixEvaluator(g, labels, cfg.train_config())

    path = MetaPath()
    current_f1 = -1.0
    steps = []
    for _ in range(cfg.l_max):
        relations = _extensions(g, nodes, path)
        if not relations:
            break
        scores = {r: evaluate(path.extend(r)).val_f1 for r in relations}
        choice = max(relations, key=lambda r: (scores[r], -r))
        steps.append({
            'prefix': path.names(g),
            'f1': {g.relation_names[r]: scores[r] for r in relations},
            'choice': g.relation_names[choice],
        })
        if len(path) and scores[choice] <= current_f1:
            break
        path = path.extend(choice)
        current_f1 = scores[choice]
    log("Search", f"greedy-by-F1 path: {path.describe(g)} (val F1={current_f1:.3f})")
    return path, {'steps': steps, 'metapath': path.names(g), 'val_f1': current_f1}


def compare_with_greedy(g: HeteroGraph, labels: Mapping[int, int], cfg: Optional[SearchConfig] = None,
                        ground_truth: Optional[MetaPath] = None,
                        final_train: Optional[TrainConfig] = None) -> Dict[str, Any]:
    """Side-by-side report of the scoring search and the greedy-by-F1 comparator.

    Contains the first-iteration scoring loss and single-relation F1 of every relation,
    the F1 of every one-step extension of the greedy first pick, and the final test F1
    of both learned paths (and of the ground truth when given).
    """
    cfg = cfg or SearchConfig()
    final_train = final_train or TrainConfig(seed=cfg.seed)
    bags = BagSets.from_labels(labels)
    nodes, _ = label_arrays(labels)
    evaluate = _PrefixEvaluator(g, labels, cfg.train_config())

    first_iteration = []
    for r in candidate_relations(g, bags):
        scored = score_relation(g, bags, r, cfg.optimizer, derive_seed(cfg.seed, 0, r))
        first_iteration.append({
            'relation': g.relation_names[r],
            'loss': scored.loss,
            'baseline': scored.baseline_loss,
            'f1': evaluate(MetaPath((r,))).test_f1,
        })

    greedy_path, greedy_trace = greedy_by_f1_baseline(g, labels, cfg)
    first_pick = MetaPath(greedy_path.relations[:1])
    pick_extensions = []
    if len(first_pick):
        for r in _extensions(g, nodes, first_pick):
            path = first_pick.extend(r)
            pick_extensions.append({'metapath': path.names(g), 'f1': evaluate(path).test_f1})

    learned, _ = learn_metapaths(g, labels, cfg)
    scoring_path = learned[0] if learned else MetaPath()

    def final_f1(path: MetaPath) -> Optional[float]:
        if len(path) == 0:
            return None
        return train(g, [path], labels, final_train)[1].test_f1

    report = {
        'first_iteration': first_iteration,
        'scoring_first_pick': min(first_iteration, key=lambda row: row['loss'])['relation'] if first_iteration else None,
        'greedy_first_pick': g.relation_names[first_pick[0]] if len(first_pick) else None,
        'greedy_extensions': pick_extensions,
        'greedy': {'metapath': greedy_path.names(g), 'f1': final_f1(greedy_path), 'steps': greedy_trace['steps']},
        'scoring': {'metapath': scoring_path.names(g), 'f1': final_f1(scoring_path)},
    }
    if ground_truth is not None:
        report['ground_truth'] = {'metapath': ground_truth.names(g), 'f1': final_f1(ground_truth)}
    return report


def format_comparison(report: Dict[str, Any]) -> str:
    """Plain-text table of a compare_with_greedy report."""
    lines = []
    lines.append(f"{'=' * 60}")
    lines.append("SCORING SEARCH vs GREEDY-BY-F1")
    lines.append(f"{'=' * 60}")
    lines.append("Iteration 1:")
    lines.append(f"  {'relation':<16}{'loss':>12}{'baseline':>12}{'F1':>8}")
    for row in report['first_iteration']:
        lines.append(f"  {row['relation']:<16}{row['loss']:>12.4g}{row['baseline']:>12.4g}{row['f1']:>8.2f}")
    if report['greedy_extensions']:
        lines.append(f"Extensions of greedy first pick '{report['greedy_first_pick']}':")
        for row in report['greedy_extensions']:
            lines.append(f"  {'->'.join(row['metapath']):<28}{row['f1']:>8.2f}")
    for key in ('scoring', 'greedy', 'ground_truth'):
        if key in report:
            entry = report[key]
            score = "n/a" if entry['f1'] is None else f"{entry['f1']:.2f}"
            lines.append(f"{key:<14}{'->'.join(entry['metapath']) or '[]':<28}F1 {score}")
    return "\n".join(lines)
