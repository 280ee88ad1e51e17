"""
Supernode Grouping - merge the rows of a table that share a categorical value.
"""

from typing import Dict, Tuple

import numpy as np

from ..errors import UsageError
from ..graph import HeteroGraph
from ..reporting import log
from .encoding import EncodingReport


def group_supernodes(g: HeteroGraph, report: EncodingReport, table: str,
                     column: str) -> Tuple[HeteroGraph, np.ndarray]:
    """Replace all nodes of ``table`` sharing a value of ``column`` by one supernode.

    The supernode takes the id slot of its lowest-id member; remaining ids are
    compacted in order. The type and grouping one-hots are kept exactly, numerical
    attributes of the table are averaged over the members and its other categorical
    blocks are zeroed. Edges are redirected and duplicates collapsed.

    Returns:
        (grouped graph, old id -> new id array)
    """
    if table == report.target_table:
        raise UsageError(f"Cannot group the target table '{table}'")
    attr = report.attribute(table, column)
    if attr['kind'] != 'categorical':
        raise UsageError(f"{table}.{column} is {attr['kind']}, only categorical columns can be grouped")
    t = g.type_id(table)
    members = np.flatnonzero(g.node_types == t)
    block = g.features[members, attr['offset']:attr['offset'] + attr['width']]
    values = block.argmax(axis=1)

    groups: Dict[int, np.ndarray] = {int(value): members[values == value] for value in np.unique(values)}
    representative = np.arange(g.num_nodes)
    for group in groups.values():
        representative[group] = group[0]

    kept = np.flatnonzero(representative == np.arange(g.num_nodes))
    new_id = np.full(g.num_nodes, -1, dtype=np.int64)
    new_id[kept] = np.arange(len(kept))
    new_id = new_id[representative]

    features = g.features[kept].copy()
    for group in groups.values():
        row = features[new_id[group[0]]]
        for entry in report.attributes.get(table, []):
            if entry['column'] == column:
                continue
            cols = slice(entry['offset'], entry['offset'] + entry['width'])
            row[cols] = g.features[group, cols].mean(axis=0) if entry['kind'] == 'numerical' else 0.0

    edges = g.edges.copy()
    edges[:, 0] = new_id[edges[:, 0]]
    edges[:, 2] = new_id[edges[:, 2]]
    grouped = HeteroGraph(g.node_types[kept], g.type_names, features, g.relation_names, edges)
    log("Ingest", f"grouped {len(members)} '{table}' nodes into {len(groups)} supernodes by {column}")
    return grouped, new_id
