"""
Graph Files - plain-text graph directory.

    relations.tsv    index<TAB>name
    node_types.tsv   index<TAB>name
    nodes.tsv        id<TAB>type index<TAB>comma-separated features (repr floats)
    edges.tsv        u<TAB>relation name<TAB>v, sorted by (u, relation index, v)
    labels.tsv       node<TAB>0|1 (optional)
    encoding.json    EncodingReport (optional)

All files are UTF-8 with LF line endings.
"""

from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from ..errors import DataError
from ..graph import HeteroGraph
from ..reporting import read_json, write_json
from .encoding import EncodingReport

Labels = Dict[int, int]

RELATIONS_FILE = "relations.tsv"
NODE_TYPES_FILE = "node_types.tsv"
NODES_FILE = "nodes.tsv"
EDGES_FILE = "edges.tsv"
LABELS_FILE = "labels.tsv"
ENCODING_FILE = "encoding.json"


def _write_lines(path: Path, lines: List[str]):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for line in lines:
            f.write(line + "\n")


def _read_rows(path: Path, width: int) -> List[List[str]]:
    if not path.exists():
        raise DataError(f"Graph file {path} does not exist")
    rows = []
    with open(path, 'r', encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != width:
                raise DataError(f"{path.name}:{number}: expected {width} tab-separated fields, got {len(fields)}")
            rows.append(fields)
    return rows


def save_graph(g: HeteroGraph, directory: Path, labels: Optional[Mapping[int, int]] = None,
               report: Optional[EncodingReport] = None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_lines(directory / RELATIONS_FILE, [f"{i}\t{name}" for i, name in enumerate(g.relation_names)])
    _write_lines(directory / NODE_TYPES_FILE, [f"{i}\t{name}" for i, name in enumerate(g.type_names)])
    _write_lines(directory / NODES_FILE, [
        f"{v}\t{int(g.node_types[v])}\t{','.join(repr(float(x)) for x in g.features[v])}"
        for v in range(g.num_nodes)
    ])
    _write_lines(directory / EDGES_FILE, [f"{u}\t{g.relation_names[r]}\t{v}" for u, r, v in g.edges.tolist()])
    if labels is not None:
        _write_lines(directory / LABELS_FILE, [f"{v}\t{int(labels[v])}" for v in sorted(labels)])
    if report is not None:
        write_json(directory / ENCODING_FILE, report.to_dict())


def _parse_int(value: str, where: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise DataError(f"{where}: '{value}' is not an integer")


def load_graph(directory: Path) -> Tuple[HeteroGraph, Labels, Optional[EncodingReport]]:
    """Load a graph directory written by save_graph.

    Raises:
        DataError: missing or malformed files
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"Graph directory {directory} does not exist")
    relation_names = [name for _, name in _read_rows(directory / RELATIONS_FILE, 2)]
    type_names = [name for _, name in _read_rows(directory / NODE_TYPES_FILE, 2)]
    relation_index = {name: i for i, name in enumerate(relation_names)}

    node_rows = _read_rows(directory / NODES_FILE, 3)
    node_types = np.zeros(len(node_rows), dtype=np.int64)
    features: List[List[float]] = []
    for number, (node, node_type, values) in enumerate(node_rows, start=1):
        where = f"{NODES_FILE}:{number}"
        if _parse_int(node, where) != number - 1:
            raise DataError(f"{where}: node ids must be consecutive from 0")
        node_types[number - 1] = _parse_int(node_type, where)
        try:
            features.append([float(x) for x in values.split(",")])
        except ValueError:
            raise DataError(f"{where}: unparseable feature vector")
    if len({len(row) for row in features}) > 1:
        raise DataError(f"{NODES_FILE}: feature vectors have different lengths")

    edges = []
    for number, (u, name, v) in enumerate(_read_rows(directory / EDGES_FILE, 3), start=1):
        where = f"{EDGES_FILE}:{number}"
        if name not in relation_index:
            raise DataError(f"{where}: unknown relation '{name}'")
        edges.append((_parse_int(u, where), relation_index[name], _parse_int(v, where)))

    labels: Labels = {}
    if (directory / LABELS_FILE).exists():
        for number, (node, label) in enumerate(_read_rows(directory / LABELS_FILE, 2), start=1):
            where = f"{LABELS_FILE}:{number}"
            value = _parse_int(label, where)
            if value not in (0, 1):
                raise DataError(f"{where}: label {value} is not 0 or 1")
            labels[_parse_int(node, where)] = value

    report = None
    if (directory / ENCODING_FILE).exists():
        report = EncodingReport.from_dict(read_json(directory / ENCODING_FILE))

    feature_matrix = np.array(features, dtype=np.float64).reshape(len(node_rows), -1)
    g = HeteroGraph(node_types, type_names, feature_matrix, relation_names, edges)
    return g, labels, report
