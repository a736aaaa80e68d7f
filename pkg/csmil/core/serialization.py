# csmil/core/serialization.py
import json
import logging
import math
from pathlib import Path
from typing import Any, List, Mapping, Sequence, Union

import numpy as np
import pandas as pd

from csmil.core.config import get_settings
from csmil.core.errors import ConfigurationError, DataFormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def format_float(value: float) -> str:
    if not math.isfinite(value):
        raise DataFormatError(f"refusing to serialize non-finite value {value!r}")
    return format(value, f".{get_settings().FLOAT_DIGITS}g")


def _to_plain(obj: Any) -> Any:
    """Turn numpy containers / pydantic models into JSON-ready Python values"""
    if hasattr(obj, "model_dump"):
        return _to_plain(obj.model_dump(mode="python"))
    if isinstance(obj, np.ndarray):
        return _to_plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Mapping):
        return {str(k): _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [_to_plain(v) for v in items]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _encode(value: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    close = " " * (indent * level)
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        parts = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(parts) + "\n" + close + "}"
    if isinstance(value, list):
        if not value:
            return "[]"
        # numeric rows stay on one line
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in value) + "]"
        parts = [f"{pad}{_encode(v, indent, level + 1)}" for v in value]
        return "[\n" + ",\n".join(parts) + "\n" + close + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps_json(obj: Any, indent: int = 2) -> str:
    """JSON text with insertion-ordered keys and fixed float formatting"""
    return _encode(_to_plain(obj), indent, 0) + "\n"


def dump_json(obj: Any, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(obj), encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def load_json(path: PathLike) -> Any:
    path = Path(path)
    if not path.is_file():
        raise DataFormatError(f"file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")


def write_csv(rows: Sequence[Mapping[str, Any]], columns: List[str], path: PathLike) -> Path:
    """Flat table export; None / NaN become empty cells"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([{c: _to_plain(row.get(c)) for c in columns} for row in rows], columns=columns)
    frame.to_csv(
        path,
        index=False,
        float_format=f"%.{get_settings().FLOAT_DIGITS}g",
        lineterminator="\n",
        na_rep="",
    )
    logger.info(f"Wrote {path} ({len(frame)} rows)")
    return path


def read_csv(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataFormatError(f"file not found: {path}")
    return pd.read_csv(path)
