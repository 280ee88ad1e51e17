"""
Attribute Encoding - table columns to node feature blocks.

Feature layout: the type one-hot over all tables, then one block per table in
manifest order. Inside a table block, attributes follow manifest order; a
categorical attribute takes one column per vocabulary entry, a numerical one a
single min-max normalized column.
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

from .. import config
from ..errors import DataError, UsageError
from .schema import TableSchema

LABEL_VALUES = {
    '1': 1, '+': 1, 'true': 1, 'yes': 1, 'pos': 1, 'positive': 1,
    '0': 0, '-': 0, 'false': 0, 'no': 0, 'neg': 0, 'negative': 0,
}


def parse_label(value: str, location: str) -> int:
    key = str(value).strip().lower()
    if key not in LABEL_VALUES:
        raise DataError(f"{location}: label '{value}' is not binary")
    return LABEL_VALUES[key]


@dataclass
class EncodingReport:
    feature_dim: int
    target_table: str
    type_slices: Dict[str, List[int]] = field(default_factory=dict)
    attributes: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)
    node_ranges: Dict[str, List[int]] = field(default_factory=dict)

    def attribute(self, table: str, column: str) -> Dict[str, Any]:
        for attr in self.attributes.get(table, []):
            if attr['column'] == column:
                return attr
        raise UsageError(f"Table '{table}' has no encoded attribute '{column}'")

    def with_node_ranges(self, node_types: np.ndarray, tables: List[str]) -> 'EncodingReport':
        """Copy with node ranges recomputed from contiguous per-type node ids."""
        ranges = {}
        for t, name in enumerate(tables):
            ids = np.flatnonzero(node_types == t)
            ranges[name] = [int(ids[0]) if len(ids) else 0, int(len(ids))]
        payload = self.to_dict()
        payload['node_ranges'] = ranges
        return EncodingReport.from_dict(payload)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'EncodingReport':
        return cls(
            feature_dim=int(payload['feature_dim']),
            target_table=payload['target_table'],
            type_slices={k: list(v) for k, v in payload.get('type_slices', {}).items()},
            attributes={k: [dict(a) for a in v] for k, v in payload.get('attributes', {}).items()},
            node_ranges={k: list(v) for k, v in payload.get('node_ranges', {}).items()},
        )


def _numerical(series: pd.Series, table: str, column: str) -> Tuple[np.ndarray, Dict[str, Any]]:
    raw = series.str.strip()
    missing = raw == ''
    values = pd.to_numeric(raw.where(~missing), errors='coerce')
    bad = values.isna() & ~missing
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(f"{table}.{column}: cannot parse '{series.iloc[row]}' as a number (row {row + 2})")
    present = values[~missing]
    mean = float(present.mean()) if len(present) else 0.0
    filled = values.fillna(mean).to_numpy(dtype=np.float64)
    low, high = (float(filled.min()), float(filled.max())) if len(filled) else (0.0, 0.0)
    if high > low:
        encoded = (filled - low) / (high - low)
    else:
        encoded = np.zeros_like(filled)
    return encoded.reshape(-1, 1), {'min': low, 'max': high, 'mean': mean, 'width': 1}


def _categorical(series: pd.Series) -> Tuple[np.ndarray, Dict[str, Any]]:
    values = series.str.strip().replace('', config.MISSING_CATEGORY)
    vocabulary = sorted(values.unique().tolist())
    index = {value: i for i, value in enumerate(vocabulary)}
    encoded = np.zeros((len(values), len(vocabulary)))
    encoded[np.arange(len(values)), [index[v] for v in values]] = 1.0
    return encoded, {'vocabulary': vocabulary, 'width': len(vocabulary)}


def encode_table(frame: pd.DataFrame, schema: TableSchema) -> Tuple[np.ndarray, List[Dict[str, Any]]]:
    """Encoded attribute block of one table and its per-attribute report entries."""
    blocks = []
    entries = []
    offset = 0
    for attr in schema.attributes:
        if attr.column not in frame.columns:
            raise DataError(f"Table '{schema.name}' has no column '{attr.column}'")
        series = frame[attr.column].astype(str)
        if attr.kind == 'numerical':
            block, entry = _numerical(series, schema.name, attr.column)
        else:
            block, entry = _categorical(series)
        entries.append({'column': attr.column, 'kind': attr.kind, 'offset': offset, **entry})
        offset += block.shape[1]
        blocks.append(block)
    if not blocks:
        return np.zeros((len(frame), 0)), entries
    return np.hstack(blocks), entries
