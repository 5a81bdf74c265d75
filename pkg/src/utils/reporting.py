"""Artifact writers: CSV tables and JSON reports."""

from pathlib import Path
from typing import Any, Dict, List, Union
import json
import logging

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

# 17 significant digits round-trip every double
FLOAT_FORMAT = "%.17g"


def to_jsonable(obj: Any) -> Any:
    """Convert numpy scalars and arrays (nested in dicts and lists) to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if np.isfinite(value) else None
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_csv(table: Union[pd.DataFrame, List[Dict]], path: Path) -> Path:
    """Write a table with a header row, '.' decimals and fixed float formatting.

    Args:
        table: DataFrame or list of row dicts
        path: Output path, parent directories are created

    Returns:
        The path written
    """
    df = table if isinstance(table, pd.DataFrame) else pd.DataFrame(table)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {len(df)} rows to {path}")
    return path


def write_json(data: Dict, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(to_jsonable(data), f, indent=2, sort_keys=False)
        f.write("\n")
    logger.info(f"Wrote {path}")
    return path
