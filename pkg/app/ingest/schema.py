"""
Schema Manifest - declarative description of a CSV database.

{
  "tables": [
    {"name": "patient", "file": "patient.csv", "primary_key": "pid",
     "foreign_keys": [], "attributes": [{"column": "age", "kind": "numerical"}]},
    {"name": "prescription", "file": "prescription.csv", "primary_key": "prid",
     "foreign_keys": [{"column": "pid", "references": "patient"}],
     "attributes": [{"column": "exempt", "kind": "categorical"}]}
  ],
  "target": {"table": "patient", "label_column": "label"}
}

``target`` may name a ``label_file`` (CSV: key, label) instead of a label column.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..errors import DataError

ATTRIBUTE_KINDS = ('categorical', 'numerical')


@dataclass(frozen=True)
class ForeignKey:
    column: str
    references: str


@dataclass(frozen=True)
class AttributeSpec:
    column: str
    kind: str


@dataclass
class TableSchema:
    name: str
    file: str
    primary_key: str
    foreign_keys: List[ForeignKey] = field(default_factory=list)
    attributes: List[AttributeSpec] = field(default_factory=list)

    def attribute(self, column: str) -> Optional[AttributeSpec]:
        return next((a for a in self.attributes if a.column == column), None)


@dataclass
class TargetSpec:
    table: str
    label_column: Optional[str] = None
    label_file: Optional[str] = None


@dataclass
class SchemaManifest:
    tables: List[TableSchema]
    target: TargetSpec

    def table(self, name: str) -> TableSchema:
        for table in self.tables:
            if table.name == name:
                return table
        raise DataError(f"Manifest has no table '{name}'")

    def validate(self):
        names = [t.name for t in self.tables]
        if not names:
            raise DataError("Manifest declares no tables")
        if len(set(names)) != len(names):
            raise DataError("Table names in the manifest must be unique")
        for table in self.tables:
            for fk in table.foreign_keys:
                if fk.references not in names:
                    raise DataError(f"Foreign key {table.name}.{fk.column} references unknown table '{fk.references}'")
            for attr in table.attributes:
                if attr.kind not in ATTRIBUTE_KINDS:
                    raise DataError(f"Attribute {table.name}.{attr.column} has kind '{attr.kind}', "
                                    f"expected one of {', '.join(ATTRIBUTE_KINDS)}")
        self.table(self.target.table)
        if (self.target.label_column is None) == (self.target.label_file is None):
            raise DataError("Target must name exactly one of label_column or label_file")

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'SchemaManifest':
        try:
            tables = [
                TableSchema(
                    name=t['name'],
                    file=t.get('file', f"{t['name']}.csv"),
                    primary_key=t['primary_key'],
                    foreign_keys=[ForeignKey(fk['column'], fk['references']) for fk in t.get('foreign_keys', [])],
                    attributes=[AttributeSpec(a['column'], a['kind']) for a in t.get('attributes', [])],
                )
                for t in payload['tables']
            ]
            target = payload['target']
            manifest = cls(tables, TargetSpec(target['table'], target.get('label_column'), target.get('label_file')))
        except (KeyError, TypeError) as e:
            raise DataError(f"Malformed schema manifest: missing or invalid field {e}")
        manifest.validate()
        return manifest


def load_manifest(path: Path) -> SchemaManifest:
    path = Path(path)
    if not path.exists():
        raise DataError(f"Schema manifest {path} does not exist")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"Schema manifest {path} is not valid JSON: {e}")
    return SchemaManifest.from_dict(payload)
