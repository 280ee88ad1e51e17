"""
Database Loader - CSV tables + schema manifest to a HeteroGraph.

One node per row, nodes numbered table by table in manifest order. Every
foreign-key column ``c`` of table ``t`` yields relation ``t.c`` (row -> referenced
row) and its inverse ``t.c_inv``.
"""

from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from .. import config
from ..errors import DataError
from ..graph import HeteroGraph, type_one_hot
from ..reporting import log
from .encoding import EncodingReport, encode_table, parse_label
from .schema import SchemaManifest

Labels = Dict[int, int]


def read_table(path: Path) -> pd.DataFrame:
    """Read a CSV table as strings; empty cells stay empty strings."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"Table file {path} does not exist")
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"Cannot read {path}: {e}")


def relation_name(table: str, column: str, inverse: bool = False) -> str:
    name = f"{table}{config.TYPE_PREFIX_SEPARATOR}{column}"
    return name + config.INVERSE_SUFFIX if inverse else name


def _key_index(frame: pd.DataFrame, table: str, primary_key: str, start: int) -> Dict[str, int]:
    if primary_key not in frame.columns:
        raise DataError(f"Table '{table}' has no primary key column '{primary_key}'")
    index: Dict[str, int] = {}
    for row, key in enumerate(frame[primary_key].astype(str).str.strip()):
        if key == '':
            raise DataError(f"{table} row {row + 2}: empty primary key")
        if key in index:
            raise DataError(f"{table} row {row + 2}: duplicate primary key '{key}'")
        index[key] = start + row
    return index


def _labels(manifest: SchemaManifest, frames: Dict[str, pd.DataFrame], keys: Dict[str, Dict[str, int]],
            data_dir: Path) -> Labels:
    target = manifest.target
    table = manifest.table(target.table)
    labels: Labels = {}
    if target.label_column is not None:
        frame = frames[table.name]
        if target.label_column not in frame.columns:
            raise DataError(f"Table '{table.name}' has no label column '{target.label_column}'")
        for row, (key, value) in enumerate(zip(frame[table.primary_key].astype(str).str.strip(),
                                               frame[target.label_column].astype(str))):
            if value.strip() == '':
                continue
            labels[keys[table.name][key]] = parse_label(value, f"{table.name} row {row + 2}")
        return labels

    label_path = data_dir / target.label_file
    frame = read_table(label_path)
    if frame.shape[1] < 2:
        raise DataError(f"{label_path}: expected two columns (key, label)")
    for row, (key, value) in enumerate(zip(frame.iloc[:, 0].astype(str).str.strip(), frame.iloc[:, 1].astype(str))):
        location = f"{label_path.name} row {row + 2}"
        if key not in keys[table.name]:
            raise DataError(f"{location}: key '{key}' is not a row of '{table.name}'")
        labels[keys[table.name][key]] = parse_label(value, location)
    return labels


def load_database(manifest: SchemaManifest, data_dir: Path) -> Tuple[HeteroGraph, Labels, EncodingReport]:
    """Load every table of the manifest from data_dir.

    Raises:
        DataError: missing files or columns, duplicate or dangling keys, unparseable
            numbers, non-binary labels
    """
    data_dir = Path(data_dir)
    manifest.validate()
    tables = manifest.tables
    table_names = [t.name for t in tables]

    frames: Dict[str, pd.DataFrame] = {}
    keys: Dict[str, Dict[str, int]] = {}
    node_ranges: Dict[str, List[int]] = {}
    start = 0
    for table in tables:
        frame = read_table(data_dir / table.file)
        frames[table.name] = frame
        keys[table.name] = _key_index(frame, table.name, table.primary_key, start)
        node_ranges[table.name] = [start, len(frame)]
        start += len(frame)
    num_nodes = start

    encoded = {}
    attributes = {}
    type_slices = {}
    offset = len(tables)
    for table in tables:
        block, entries = encode_table(frames[table.name], table)
        for entry in entries:
            entry['offset'] += offset
        encoded[table.name] = (offset, block)
        attributes[table.name] = entries
        type_slices[table.name] = [offset, offset + block.shape[1]]
        offset += block.shape[1]
    feature_dim = offset

    node_types = np.zeros(num_nodes, dtype=np.int64)
    for t, table in enumerate(tables):
        first, count = node_ranges[table.name]
        node_types[first:first + count] = t
    features = np.zeros((num_nodes, feature_dim))
    features[:, :len(tables)] = type_one_hot(node_types, len(tables))
    for table in tables:
        first, count = node_ranges[table.name]
        block_start, block = encoded[table.name]
        features[first:first + count, block_start:block_start + block.shape[1]] = block

    relation_names: List[str] = []
    edges: List[Tuple[int, int, int]] = []
    for table in tables:
        frame = frames[table.name]
        own_keys = frame[table.primary_key].astype(str).str.strip().tolist()
        for fk in table.foreign_keys:
            if fk.column not in frame.columns:
                raise DataError(f"Table '{table.name}' has no foreign key column '{fk.column}'")
            forward = len(relation_names)
            relation_names += [relation_name(table.name, fk.column), relation_name(table.name, fk.column, True)]
            referenced = keys[fk.references]
            for row, value in enumerate(frame[fk.column].astype(str).str.strip()):
                if value == '':
                    continue
                if value not in referenced:
                    raise DataError(f"{table.name} row {row + 2}: foreign key {fk.column}='{value}' "
                                    f"has no matching row in '{fk.references}'")
                u, v = keys[table.name][own_keys[row]], referenced[value]
                edges.append((u, forward, v))
                edges.append((v, forward + 1, u))

    labels = _labels(manifest, frames, keys, data_dir)
    g = HeteroGraph(node_types, table_names, features, relation_names, edges)
    report = EncodingReport(feature_dim, manifest.target.table, type_slices, attributes, node_ranges)
    log("Ingest", f"{len(tables)} tables, {num_nodes} nodes, {g.num_edges} edges, "
                  f"{len(relation_names)} relations, D={feature_dim}, {len(labels)} labels")
    return g, labels, report
