"""
Artifact writers.  Outputs carry no timestamps so that identical runs produce
byte-identical files.
"""

import json
import math
from enum import Enum

import numpy as np
import pandas as pd

from .errors import PoolIOError
from .feature_store import ensure_parent


def to_builtin(obj):
    """Convert numpy scalars/arrays, enums and tuples to JSON-ready builtins (NaN -> None)."""
    if isinstance(obj, dict):
        return {str(k): to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_builtin(i) for i in obj]
    if isinstance(obj, np.ndarray):
        return to_builtin(obj.tolist())
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return None if math.isnan(value) or math.isinf(value) else value
    return obj


def save_json(path, data) -> None:
    try:
        ensure_parent(path)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(to_builtin(data), f, indent=4)
            f.write("\n")
    except OSError as e:
        raise PoolIOError(f"cannot write report ({e.strerror})", path) from e


def save_csv(path, frame: pd.DataFrame) -> None:
    try:
        ensure_parent(path)
        frame.to_csv(path, index=False)
    except OSError as e:
        raise PoolIOError(f"cannot write table ({e.strerror})", path) from e


def write_index_list(path, indices) -> None:
    try:
        ensure_parent(path)
        with open(path, "w", encoding="utf-8") as f:
            f.writelines(f"{int(i)}\n" for i in indices)
    except OSError as e:
        raise PoolIOError(f"cannot write index list ({e.strerror})", path) from e


def read_index_list(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return [int(line) for line in f if line.strip()]
    except OSError as e:
        raise PoolIOError(f"cannot read index list ({e.strerror})", path) from e
