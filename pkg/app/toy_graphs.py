"""
Toy Graphs - small hand-built graphs with known answers, used by the tests and by
``learn --fixture``.

medical_toy
    Patients, prescriptions and medications. Patient 0 is positive (two exempt
    prescriptions with two medications each), patient 1 negative.
    Relations: a (patient -> shared hospital), b (patient -> prescription),
    c (prescription -> pharmacy), d (prescription -> medication).

medical_toy_priced
    Same story, prescriptions additionally carry a normalized price.

chain_miniature
    Grey targets, r -> orange, s -> green; a grey node is positive iff it starts
    at least three r->s chains.
"""

from typing import Dict, List, Tuple

import numpy as np

from .graph import HeteroGraph, type_one_hot

Labels = Dict[int, int]

MEDICAL_RELATIONS = ["a", "b", "c", "d"]
MEDICAL_TYPES = ["patient", "prescription", "hospital", "medication", "pharmacy"]


def _medical_graph(node_types: List[int], prescription_features: Dict[int, List[float]],
                   block_width: int, edges: List[Tuple[str, int, int]]) -> HeteroGraph:
    num_types = len(MEDICAL_TYPES)
    features = np.zeros((len(node_types), num_types + block_width))
    features[:, :num_types] = type_one_hot(node_types, num_types)
    for node, values in prescription_features.items():
        features[node, num_types:] = values
    triples = [(u, MEDICAL_RELATIONS.index(r), v) for r, u, v in edges]
    return HeteroGraph(node_types, MEDICAL_TYPES, features, MEDICAL_RELATIONS, triples)


def medical_toy() -> Tuple[HeteroGraph, Labels]:
    """Two patients, five prescriptions, five medications.

    Node ids: patients 0-1, prescriptions 2-6, hospital 7, medications 8-12,
    pharmacies 13-15. Prescription 4 (non-exempt) is shared by both patients.
    """
    P, R, H, M, F = range(5)
    node_types = [P, P, R, R, R, R, R, H, M, M, M, M, M, F, F, F]
    exempt, not_exempt = [1.0, 0.0], [0.0, 1.0]
    prescription_features = {2: exempt, 3: exempt, 4: not_exempt, 5: exempt, 6: exempt}
    edges = [
        ("a", 0, 7), ("a", 1, 7),
        ("b", 0, 2), ("b", 0, 3), ("b", 0, 4),
        ("b", 1, 4), ("b", 1, 5), ("b", 1, 6),
        ("d", 2, 8), ("d", 2, 9), ("d", 3, 10), ("d", 3, 11),
        ("d", 5, 8), ("d", 5, 9), ("d", 6, 12),
        ("c", 2, 13), ("c", 3, 14), ("c", 4, 15), ("c", 5, 13), ("c", 6, 14),
    ]
    graph = _medical_graph(node_types, prescription_features, 2, edges)
    return graph, {0: 1, 1: 0}


def normalize_price(price: float, low: float = 20.0, high: float = 70.0) -> float:
    return (price - low) / (high - low)


def medical_toy_priced() -> Tuple[HeteroGraph, Labels]:
    """Prescriptions carry [exempt one-hot, normalized price].

    Node ids: patients 0-1, positive patient's prescriptions 2-5, hospital 6,
    pharmacy 7, medications 8-12, negative patient's prescriptions 13-16.
    Raw prices are 60, 70 and 20 dollars, normalized over the column range.
    """
    P, R, H, M, F = range(5)
    node_types = [P, P, R, R, R, R, H, F, M, M, M, M, M, R, R, R, R]
    exempt_60 = [1.0, 0.0, normalize_price(60)]
    exempt_70 = [1.0, 0.0, normalize_price(70)]
    plain_20 = [0.0, 1.0, normalize_price(20)]
    prescription_features = {
        2: exempt_60, 3: exempt_60, 4: exempt_70, 5: plain_20,
        13: exempt_60, 14: exempt_60, 15: plain_20, 16: exempt_70,
    }
    edges = [
        ("a", 0, 6), ("a", 1, 6),
        ("b", 0, 2), ("b", 0, 3), ("b", 0, 4), ("b", 0, 5),
        ("b", 1, 13), ("b", 1, 14), ("b", 1, 15), ("b", 1, 16),
        ("d", 2, 8), ("d", 2, 9), ("d", 3, 8), ("d", 3, 9), ("d", 4, 10), ("d", 4, 11),
        ("d", 13, 8), ("d", 13, 9), ("d", 14, 8), ("d", 14, 9), ("d", 15, 10), ("d", 15, 11),
        ("d", 16, 12),
        ("c", 4, 7), ("c", 16, 7),
    ]
    graph = _medical_graph(node_types, prescription_features, 3, edges)
    return graph, {0: 1, 1: 0}


def chain_miniature() -> Tuple[HeteroGraph, Labels]:
    """Grey nodes 0-3, orange 4-7, green 8-11; threshold 3 on r->s chains.

    Chain counts per grey node: 3, 2, 4, 1.
    """
    node_types = [0] * 4 + [1] * 4 + [2] * 4
    features = type_one_hot(node_types, 3)
    r, s = 0, 1
    edges = [
        (0, r, 4), (0, r, 5),
        (1, r, 5), (1, r, 6),
        (2, r, 7),
        (3, r, 6),
        (4, s, 8), (4, s, 9),
        (5, s, 10),
        (6, s, 11),
        (7, s, 8), (7, s, 9), (7, s, 10), (7, s, 11),
    ]
    graph = HeteroGraph(node_types, ["grey", "orange", "green"], features, ["r", "s"], edges)
    return graph, {0: 1, 1: 0, 2: 1, 3: 0}


FIXTURES = {
    'toy': medical_toy,
    'toy-price': medical_toy_priced,
    'chain': chain_miniature,
}
