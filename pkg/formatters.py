"""Report row schemas and their CSV / JSON encodings."""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from config import CSV_SCHEMA_FILE

SCHEMA_VERSION = 1

PROVENANCE_COLUMNS = ["family", "value", "seed", "lambda", "resolution"]
STATUS_COLUMNS = ["status", "error"]

# One table per scan; good_balls is the per-ball companion of the doubling scan
TABLES: Dict[str, List[str]] = {
    "w1": PROVENANCE_COLUMNS
    + [
        "engine",
        "w1",
        "l1_norm",
        "w1_sqrtlambda_over_l1",
        "lower_bound",
        "marginal_err",
        "imbalance",
        "atoms",
        "distortion",
    ]
    + STATUS_COLUMNS,
    "tube_mass": [
        "family",
        "seed",
        "lambda",
        "p",
        "delta",
        "delta_sqrtlambda",
        "ratio_total",
        "ratio_pos",
        "ratio_neg",
        "value",
        "resolution",
        "tube_mass_fraction",
    ]
    + STATUS_COLUMNS,
    "doubling": PROVENANCE_COLUMNS
    + [
        "d",
        "p",
        "balls",
        "multiplicity",
        "good_count",
        "mass_fraction",
        "bad_mass_bound",
        "max_doubling",
        "max_doubling_over_sqrtlambda",
        "sandwich_a",
        "sandwich_b",
        "sandwich_a_prime",
        "sandwich_b_prime",
    ]
    + STATUS_COLUMNS,
    "good_balls": ["family", "value", "seed", "d"]
    + [
        "ball_index",
        "center",
        "r",
        "Np_ratio",
        "good_doubling",
        "N_lift",
        "good_frequency",
        "deep_flag",
    ],
    "uncertainty": PROVENANCE_COLUMNS
    + ["engine", "w1", "nodal_length", "product", "l1_norm"]
    + STATUS_COLUMNS,
}

# Main table written by each scan subcommand
SCAN_TABLES = {
    "scan-w1": "w1",
    "scan-tube-mass": "tube_mass",
    "scan-doubling": "doubling",
    "scan-uncertainty": "uncertainty",
}


def format_value(value: Any) -> str:
    """Stable text form of one CSV cell."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".12g")
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(format_value(v) for v in value)
    return str(value)


def format_row(table: str, row: Dict[str, Any]) -> List[str]:
    """Cells of ``row`` in the column order of ``table``; missing columns are blank."""
    return [format_value(row.get(column)) for column in TABLES[table]]


def error_row(base: Dict[str, Any], exc: BaseException) -> Dict[str, Any]:
    row = dict(base)
    row["status"] = "error"
    row["error"] = str(exc) if str(exc).startswith(type(exc).__name__) else f"{type(exc).__name__}: {exc}"
    return row


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if hasattr(value, "to_json"):
        return to_jsonable(value.to_json())
    return value


def dumps(value: Any) -> str:
    """Canonical JSON text (sorted keys, two-space indent, trailing newline)."""
    return json.dumps(to_jsonable(value), indent=2, sort_keys=True) + "\n"


def nodal_geometry_json(ng) -> dict:
    """Segments, domain count, length and density radius of one traced nodal set."""
    return to_jsonable(ng.describe())


def load_schema(path: Optional[Union[str, Path]] = None) -> dict:
    path = Path(path) if path is not None else CSV_SCHEMA_FILE
    with open(path, "r") as f:
        return json.load(f)


def schema_drift(path: Optional[Union[str, Path]] = None) -> List[str]:
    """Differences between the frozen schema file and the headers in code."""
    try:
        frozen = load_schema(path)
    except FileNotFoundError:
        return [f"schema file missing: {path or CSV_SCHEMA_FILE}"]
    problems = []
    if frozen.get("version") != SCHEMA_VERSION:
        problems.append(f"schema version {frozen.get('version')} != {SCHEMA_VERSION}")
    tables = frozen.get("tables", {})
    for name in sorted(set(tables) | set(TABLES)):
        if tables.get(name) != TABLES.get(name):
            problems.append(f"table '{name}' headers differ from the frozen schema")
    return problems
