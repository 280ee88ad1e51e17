"""
Relational Ingest - CSV databases to heterogeneous graphs, and graph files.
"""

from .schema import SchemaManifest, load_manifest
from .encoding import EncodingReport, parse_label
from .tables import load_database, relation_name
from .supernodes import group_supernodes
from .graph_files import load_graph, save_graph

__all__ = [
    'SchemaManifest',
    'load_manifest',
    'EncodingReport',
    'parse_label',
    'load_database',
    'relation_name',
    'group_supernodes',
    'load_graph',
    'save_graph',
]
