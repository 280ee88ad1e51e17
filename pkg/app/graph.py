"""
Graph Core - the heterogeneous graph data model and the traversal primitives shared by
every other module.

OVERVIEW
--------
A HeteroGraph is a directed graph whose edges carry a relation id and whose nodes carry
a type id and a dense feature vector. All node types share one feature space: the
first ``num_types`` columns are a one-hot type indicator, the remaining columns are
laid out in per-type blocks (a node only fills its own block).

Edges are stored once as a sorted, de-duplicated ``(u, r, v)`` array and indexed per
relation in CSR form (``indptr``/``indices``), built at construction. Graphs are
immutable: edits return a new graph.

A graph may be a *masked view*: it keeps the full node id space and feature matrix of
the graph it came from but only a subset of nodes is active. ``induced_subgraph``
returns such views so node ids never need re-mapping.

PUBLIC API
----------
- HeteroGraph, MetaPath
- neighbors(g, v, r) -> set of node ids
- count_occurrences(g, v, mp) -> number of walks following mp from v
- walk_counts(g, mp) -> walk counts for every node at once
- enumerate_occurrences(g, v, mp) -> explicit walks (node tuples)
- induced_subgraph(g, targets, mp) -> HeteroGraph restricted to the occurrences
"""

from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from . import config
from .errors import UsageError


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class MetaPath:
    """Ordered sequence of relation ids r_1 ... r_L (L may be 0)."""

    relations: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'relations', tuple(int(r) for r in self.relations))

    def __len__(self) -> int:
        return len(self.relations)

    def __iter__(self) -> Iterator[int]:
        return iter(self.relations)

    def __getitem__(self, index):
        return self.relations[index]

    def extend(self, relation: int) -> 'MetaPath':
        return MetaPath(self.relations + (int(relation),))

    def names(self, graph: 'HeteroGraph') -> List[str]:
        return [graph.relation_names[r] for r in self.relations]

    def describe(self, graph: 'HeteroGraph') -> str:
        return "->".join(self.names(graph)) if self.relations else "[]"

    @classmethod
    def from_names(cls, graph: 'HeteroGraph', names: Sequence[str],
                   l_max: int = config.L_MAX) -> 'MetaPath':
        """Build a meta-path from relation names (or integer ids given as strings)."""
        if len(names) > l_max:
            raise UsageError(f"Meta-path of length {len(names)} exceeds the maximum length {l_max}")
        return cls(tuple(graph.relation_id(name) for name in names))


class HeteroGraph:
    """Immutable directed typed-edge graph with per-node feature vectors."""

    def __init__(self, node_types: Sequence[int], type_names: Sequence[str],
                 features: np.ndarray, relation_names: Sequence[str],
                 edges: Union[np.ndarray, Sequence[Tuple[int, int, int]]],
                 active_nodes: Optional[Sequence[int]] = None):
        """
        Args:
            node_types: Type id per node, length N
            type_names: Name per type id
            features: N x D feature matrix; the first len(type_names) columns must be
                the one-hot type indicator
            relation_names: Unique name per relation id
            edges: (u, r, v) triples; duplicates are collapsed
            active_nodes: Optional subset of node ids making this graph a masked view
        """
        node_types = np.asarray(node_types, dtype=np.int64).reshape(-1)
        features = np.array(features, dtype=np.float64, copy=True)
        type_names = [str(t) for t in type_names]
        relation_names = [str(r) for r in relation_names]
        n = len(node_types)

        if features.ndim != 2 or features.shape[0] != n:
            raise UsageError(f"Feature matrix has shape {features.shape}, expected ({n}, D)")
        num_types = len(type_names)
        if n and (node_types.min() < 0 or node_types.max() >= num_types):
            raise UsageError("Node type id out of range")
        if features.shape[1] < num_types:
            raise UsageError("Feature dimension is smaller than the type-indicator block")
        expected = np.zeros((n, num_types))
        expected[np.arange(n), node_types] = 1.0
        if not np.array_equal(features[:, :num_types], expected):
            raise UsageError("Type-indicator block of the features is not one-hot over node types")
        if len(set(relation_names)) != len(relation_names):
            raise UsageError("Relation names must be unique")
        if len(set(type_names)) != len(type_names):
            raise UsageError("Type names must be unique")

        self._node_types = _readonly(node_types)
        self._features = _readonly(features)
        self._type_names = tuple(type_names)
        self._relation_names = tuple(relation_names)
        self._relation_index = {name: i for i, name in enumerate(relation_names)}
        self._type_index = {name: i for i, name in enumerate(type_names)}
        self._build(self._check_edges(edges), active_nodes)

    # ------------------------------------------------------------------ construction

    def _check_edges(self, edges) -> np.ndarray:
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 3)
        if len(edges):
            n, num_rel = self.num_nodes, self.num_relations
            if edges[:, [0, 2]].min() < 0 or edges[:, [0, 2]].max() >= n:
                raise UsageError("Edge endpoint is not a valid node id")
            if edges[:, 1].min() < 0 or edges[:, 1].max() >= num_rel:
                raise UsageError("Edge relation is not a valid relation id")
        return edges

    def _build(self, edges: np.ndarray, active_nodes: Optional[Sequence[int]]):
        n = self.num_nodes
        edges = np.unique(edges, axis=0) if len(edges) else np.zeros((0, 3), dtype=np.int64)
        self._edges = _readonly(edges)

        if active_nodes is None:
            self._active = None
        else:
            active = np.unique(np.asarray(active_nodes, dtype=np.int64))
            if len(active) and (active[0] < 0 or active[-1] >= n):
                raise UsageError("Active node id out of range")
            mask = np.zeros(n, dtype=bool)
            mask[active] = True
            if len(edges) and not (mask[edges[:, 0]].all() and mask[edges[:, 2]].all()):
                raise UsageError("Edges must connect active nodes")
            self._active = _readonly(active)

        # per-relation CSR; rows of a relation are already sorted by (u, v)
        self._indptr: List[np.ndarray] = []
        self._indices: List[np.ndarray] = []
        self._sources: List[np.ndarray] = []
        for r in range(self.num_relations):
            rel_edges = edges[edges[:, 1] == r]
            src = rel_edges[:, 0].copy()
            indptr = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
            self._indptr.append(_readonly(indptr))
            self._indices.append(_readonly(rel_edges[:, 2].copy()))
            self._sources.append(_readonly(src))

    def _derive(self, edges: np.ndarray, active_nodes: Optional[Sequence[int]]) -> 'HeteroGraph':
        """New graph sharing this graph's nodes and features."""
        graph = object.__new__(HeteroGraph)
        graph._node_types = self._node_types
        graph._features = self._features
        graph._type_names = self._type_names
        graph._relation_names = self._relation_names
        graph._relation_index = self._relation_index
        graph._type_index = self._type_index
        graph._build(graph._check_edges(edges), active_nodes)
        return graph

    def with_edges(self, added: Optional[Iterable[Tuple[int, int, int]]] = None,
                   removed: Optional[Iterable[Tuple[int, int, int]]] = None) -> 'HeteroGraph':
        """Return a copy with edges inserted and/or deleted."""
        edges = self._edges
        if removed is not None:
            removed = np.asarray(list(removed), dtype=np.int64).reshape(-1, 3)
            if len(removed):
                drop = {tuple(e) for e in removed.tolist()}
                keep = np.array([tuple(e) not in drop for e in edges.tolist()], dtype=bool)
                edges = edges[keep] if len(edges) else edges
        if added is not None:
            added = self._check_edges(list(added))
            edges = np.concatenate([edges, added]) if len(added) else edges
        return self._derive(edges, self._active)

    def restrict(self, edges: np.ndarray, active_nodes: Sequence[int]) -> 'HeteroGraph':
        """Masked view containing only the given nodes and edges."""
        return self._derive(edges, active_nodes)

    # ------------------------------------------------------------------ accessors

    @property
    def num_nodes(self) -> int:
        """Size of the node id space (includes inactive ids of a masked view)."""
        return len(self._node_types)

    @property
    def num_relations(self) -> int:
        return len(self._relation_names)

    @property
    def num_types(self) -> int:
        return len(self._type_names)

    @property
    def feature_dim(self) -> int:
        return self._features.shape[1]

    @property
    def features(self) -> np.ndarray:
        return self._features

    @property
    def node_types(self) -> np.ndarray:
        return self._node_types

    @property
    def type_names(self) -> Tuple[str, ...]:
        return self._type_names

    @property
    def relation_names(self) -> Tuple[str, ...]:
        return self._relation_names

    @property
    def edges(self) -> np.ndarray:
        """Sorted (u, r, v) array."""
        return self._edges

    @property
    def num_edges(self) -> int:
        return len(self._edges)

    @property
    def is_view(self) -> bool:
        return self._active is not None

    def nodes(self) -> np.ndarray:
        if self._active is None:
            return np.arange(self.num_nodes, dtype=np.int64)
        return self._active

    def edge_set(self) -> Set[Tuple[int, int, int]]:
        return {tuple(e) for e in self._edges.tolist()}

    def relation_id(self, relation: Union[int, str]) -> int:
        if isinstance(relation, (int, np.integer)):
            self.check_relation(int(relation))
            return int(relation)
        if relation in self._relation_index:
            return self._relation_index[relation]
        if isinstance(relation, str) and relation.isdigit() and int(relation) < self.num_relations:
            return int(relation)
        raise UsageError(f"Unknown relation: {relation}")

    def type_id(self, node_type: Union[int, str]) -> int:
        if isinstance(node_type, (int, np.integer)) and 0 <= int(node_type) < self.num_types:
            return int(node_type)
        if node_type in self._type_index:
            return self._type_index[node_type]
        raise UsageError(f"Unknown node type: {node_type}")

    def check_node(self, v: int):
        if not 0 <= int(v) < self.num_nodes:
            raise UsageError(f"Invalid node id {v} (graph has {self.num_nodes} nodes)")

    def check_relation(self, r: int):
        if not 0 <= int(r) < self.num_relations:
            raise UsageError(f"Invalid relation id {r} (graph has {self.num_relations} relations)")

    def successors(self, v: int, r: int) -> np.ndarray:
        """Sorted successors of v under relation r."""
        indptr = self._indptr[r]
        return self._indices[r][indptr[v]:indptr[v + 1]]

    def relation_edges(self, r: int) -> Tuple[np.ndarray, np.ndarray]:
        """(sources, targets) arrays of relation r, sorted by (source, target)."""
        return self._sources[r], self._indices[r]

    def out_degree(self, r: int) -> np.ndarray:
        return np.diff(self._indptr[r])

    def has_edge(self, u: int, r: int, v: int) -> bool:
        succ = self.successors(u, r)
        i = np.searchsorted(succ, v)
        return bool(i < len(succ) and succ[i] == v)

    def __eq__(self, other) -> bool:
        if not isinstance(other, HeteroGraph):
            return NotImplemented
        same_active = (self._active is None and other._active is None) or (
            self._active is not None and other._active is not None
            and np.array_equal(self._active, other._active))
        return (same_active
                and self._type_names == other._type_names
                and self._relation_names == other._relation_names
                and np.array_equal(self._node_types, other._node_types)
                and np.array_equal(self._features, other._features)
                and np.array_equal(self._edges, other._edges))

    __hash__ = None

    def __repr__(self) -> str:
        return (f"HeteroGraph(nodes={len(self.nodes())}, edges={self.num_edges}, "
                f"relations={self.num_relations}, types={self.num_types}, dim={self.feature_dim})")


# ---------------------------------------------------------------------- traversal


def neighbors(g: HeteroGraph, v: int, r: int) -> Set[int]:
    """The set of nodes reachable from v by following relation r."""
    g.check_node(v)
    g.check_relation(r)
    return set(g.successors(int(v), int(r)).tolist())


def walk_counts(g: HeteroGraph, mp: MetaPath, terminal_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Number of walks following mp starting at every node.

    Backward dynamic programme over meta-path positions: the count at position k is the
    sum of the counts at position k+1 over r_{k+1}-successors.

    Args:
        g: Graph
        mp: Meta-path
        terminal_mask: Optional boolean mask; only walks ending in a masked node count

    Returns:
        int64 array of length g.num_nodes
    """
    for r in mp:
        g.check_relation(r)
    if terminal_mask is None:
        counts = np.ones(g.num_nodes, dtype=np.int64)
    else:
        counts = np.asarray(terminal_mask, dtype=np.int64).copy()
    for r in reversed(mp.relations):
        src, dst = g.relation_edges(r)
        step = np.zeros(g.num_nodes, dtype=np.int64)
        np.add.at(step, src, counts[dst])
        counts = step
    return counts


def _suffix_counts(g: HeteroGraph, mp: MetaPath) -> List[np.ndarray]:
    """suffix[k] = walk counts for mp.relations[k:]; suffix[L] is all ones."""
    counts = np.ones(g.num_nodes, dtype=np.int64)
    suffix = [counts]
    for r in reversed(mp.relations):
        src, dst = g.relation_edges(r)
        step = np.zeros(g.num_nodes, dtype=np.int64)
        np.add.at(step, src, counts[dst])
        counts = step
        suffix.append(counts)
    return suffix[::-1]


def count_occurrences(g: HeteroGraph, v: int, mp: MetaPath) -> int:
    """Number of distinct directed walks from v following mp's relations in order.

    Forward frontier with multiplicities; walks are never materialized.
    """
    g.check_node(v)
    for r in mp:
        g.check_relation(r)
    frontier = np.array([int(v)], dtype=np.int64)
    multiplicity = np.array([1], dtype=np.int64)
    for r in mp:
        if len(frontier) == 0:
            return 0
        degrees = g.out_degree(r)[frontier]
        if degrees.sum() == 0:
            return 0
        nxt = np.concatenate([g.successors(u, r) for u in frontier])
        mult = np.repeat(multiplicity, degrees)
        frontier, inverse = np.unique(nxt, return_inverse=True)
        multiplicity = np.zeros(len(frontier), dtype=np.int64)
        np.add.at(multiplicity, inverse, mult)
    return int(multiplicity.sum())


def enumerate_occurrences(g: HeteroGraph, v: int, mp: MetaPath) -> List[Tuple[int, ...]]:
    """Every walk (as a tuple of L+1 node ids) following mp from v, in sorted order."""
    g.check_node(v)
    walks: List[Tuple[int, ...]] = []
    stack: List[Tuple[int, ...]] = [(int(v),)]
    while stack:
        walk = stack.pop()
        depth = len(walk) - 1
        if depth == len(mp):
            walks.append(walk)
            continue
        for u in g.successors(walk[-1], mp[depth])[::-1].tolist():
            stack.append(walk + (u,))
    return walks


def occurrence_edges(mp: MetaPath, walk: Sequence[int]) -> List[Tuple[int, int, int]]:
    """The (u, r, v) edges traversed by one walk."""
    return [(walk[k], mp[k], walk[k + 1]) for k in range(len(mp))]


def induced_subgraph(g: HeteroGraph, targets: Iterable[int], mp: MetaPath) -> HeteroGraph:
    """Union of all nodes and edges on occurrences of mp starting at any target, plus the targets.

    The result is a masked view: node ids and features are those of g.
    """
    targets = np.unique(np.asarray(list(targets), dtype=np.int64))
    if len(targets) == 0:
        raise UsageError("induced_subgraph needs at least one target")
    for v in (targets[0], targets[-1]):
        g.check_node(v)
    suffix = _suffix_counts(g, mp)

    reached = np.zeros(g.num_nodes, dtype=bool)
    reached[targets] = True
    kept: List[np.ndarray] = []
    for k, r in enumerate(mp):
        src, dst = g.relation_edges(r)
        on_walk = reached[src] & (suffix[k + 1][dst] > 0)
        if on_walk.any():
            kept.append(np.stack([src[on_walk], np.full(on_walk.sum(), r, dtype=np.int64), dst[on_walk]], axis=1))
        reached = np.zeros(g.num_nodes, dtype=bool)
        reached[dst[on_walk]] = True

    edges = np.concatenate(kept) if kept else np.zeros((0, 3), dtype=np.int64)
    nodes = np.union1d(targets, edges[:, [0, 2]].reshape(-1)) if len(edges) else targets
    return g.restrict(edges, nodes)


def induced_edge_union(g: HeteroGraph, targets: Iterable[int], mps: Sequence[MetaPath]) -> Set[Tuple[int, int, int]]:
    """Edges of the union of the induced subgraphs of several meta-paths."""
    targets = list(targets)
    union: Set[Tuple[int, int, int]] = set()
    for mp in mps:
        union |= induced_subgraph(g, targets, mp).edge_set()
    return union


def type_one_hot(node_types: Sequence[int], num_types: int) -> np.ndarray:
    """The type-indicator block for the given node types."""
    node_types = np.asarray(node_types, dtype=np.int64)
    block = np.zeros((len(node_types), num_types))
    block[np.arange(len(node_types)), node_types] = 1.0
    return block
