"""
Baselines - label-only and degree-only classifiers reported on the same split as the MPS-GNN.
"""

from typing import Any, Dict, Mapping, Optional

import numpy as np

from . import config
from .graph import HeteroGraph
from .model import f1, label_arrays, stratified_split


def majority_baseline(labels: Mapping[int, int], seed: int = config.DEFAULT_SEED) -> Dict[str, Any]:
    """Predict the most frequent training label for everyone."""
    nodes, gold = label_arrays(labels)
    split = stratified_split(labels, seed=seed)
    train_gold = gold[np.searchsorted(nodes, split.train)]
    majority = int(train_gold.sum() * 2 > len(train_gold))
    test_gold = gold[np.searchsorted(nodes, split.test)]
    return {
        'name': 'majority',
        'prediction': majority,
        'test_f1': f1(np.full(len(test_gold), majority), test_gold),
    }


def degree_baseline(g: HeteroGraph, labels: Mapping[int, int],
                    seed: int = config.DEFAULT_SEED) -> Dict[str, Any]:
    """Best single-relation out-degree threshold, fitted on training F1.

    Tries every relation, both directions (degree >= t and degree < t) and every
    observed degree as threshold t.
    """
    nodes, gold = label_arrays(labels)
    split = stratified_split(labels, seed=seed)
    train_at = np.searchsorted(nodes, split.train)
    test_at = np.searchsorted(nodes, split.test)
    best: Optional[Dict[str, Any]] = None
    for r in range(g.num_relations):
        degrees = g.out_degree(r)[nodes]
        for threshold in np.unique(degrees):
            for direction in ('>=', '<'):
                pred = degrees >= threshold if direction == '>=' else degrees < threshold
                score = f1(pred[train_at].astype(np.int64), gold[train_at])
                if best is None or score > best['train_f1']:
                    best = {'relation': r, 'threshold': int(threshold), 'direction': direction,
                            'train_f1': score, 'pred': pred.astype(np.int64)}
    if best is None:
        return {'name': 'degree', 'relation': None, 'test_f1': 0.0}
    return {
        'name': 'degree',
        'relation': g.relation_names[best['relation']],
        'threshold': best['threshold'],
        'direction': best['direction'],
        'train_f1': best['train_f1'],
        'test_f1': f1(best['pred'][test_at], gold[test_at]),
    }


def run_baselines(g: HeteroGraph, labels: Mapping[int, int], seed: int = config.DEFAULT_SEED) -> Dict[str, Any]:
    return {
        'majority': majority_baseline(labels, seed),
        'degree': degree_baseline(g, labels, seed),
    }
