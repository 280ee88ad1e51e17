"""
Reporting helpers - progress lines on stderr, JSON/CSV artifacts and the run manifest.

Every artifact is written with sorted keys and LF line endings so two runs with
the same config and seed produce byte-identical files.
"""

import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from . import config


def log(component: str, message: str):
    """Print a progress line to stderr, e.g. ``[Search] iteration 1 ...``."""
    if config.VERBOSE:
        print(f"[{component}] {message}", file=sys.stderr, flush=True)


def warn(component: str, message: str):
    """Print a warning to stderr regardless of verbosity."""
    print(f"[{component}] Warning: {message}", file=sys.stderr, flush=True)


def write_json(path: Path, payload: Any):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: Path) -> Any:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def write_csv(path: Path, rows: List[Dict[str, Any]], columns: Sequence[str]):
    """Write records as CSV with a fixed column order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(rows, columns=list(columns))
    df.to_csv(path, index=False, lineterminator='\n', float_format='%.12g')


def write_run_manifest(output_dir: Path, command: str, resolved_config: Dict[str, Any],
                       seed: int, inputs: Optional[Dict[str, Any]] = None) -> Path:
    """Record everything needed to rerun a command from scratch.

    Args:
        output_dir: Directory the command wrote its artifacts to
        command: Subcommand name
        resolved_config: Final parameter values after flags/config-file/defaults resolution
        seed: Master seed
        inputs: Input paths or fixture names

    Returns:
        Path of the written manifest
    """
    manifest = {
        'command': command,
        'seed': seed,
        'config': resolved_config,
        'inputs': {k: str(v) for k, v in (inputs or {}).items()},
    }
    path = Path(output_dir) / "run_manifest.json"
    write_json(path, manifest)
    return path
