"""Report and table writers.

Floats are written with 17 significant digits so every table reloads
bit-exactly; JSON objects keep their insertion order.
"""
import json
import math
import os
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

FLOAT_FORMAT = '%.17g'


def format_float(x: float) -> str:
    if not math.isfinite(x):
        return 'null'
    text = FLOAT_FORMAT % x
    if all(c not in text for c in '.eEn'):
        text += '.0'
    return text


def _encode(obj: Any, indent: Optional[int], level: int) -> str:
    width = indent or 0
    pad = ' ' * (width * (level + 1))
    end = ' ' * (width * level)
    newline, sep = ('', ', ') if indent is None else ('\n', ',\n')
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return '{}'
        items = [f'{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}' for k, v in obj.items()]
        return '{' + newline + sep.join(items) + newline + end + '}'
    if isinstance(obj, (list, tuple)):
        if not obj:
            return '[]'
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return '[' + newline + sep.join(items) + newline + end + ']'
    if hasattr(obj, 'to_dict'):
        return _encode(obj.to_dict(), indent, level)
    raise TypeError(f'Cannot serialize {type(obj).__name__}')


def dumps(obj: Any, indent: Optional[int] = 2) -> str:
    """JSON text with 17-digit floats and stable field order; indent=None gives one line"""
    return _encode(obj, indent, 0) + '\n'


def write_json(path: str, obj: Any) -> str:
    _ensure_parent(path)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(dumps(obj))
    return path


def read_json(path: str) -> Any:
    with open(path, encoding='utf-8') as f:
        return json.load(f)


def write_csv(path: str, columns: Sequence[str], rows: np.ndarray,
              metadata: Optional[Dict[str, Any]] = None) -> str:
    """Writes a numeric table, optionally preceded by a JSON header block"""
    _ensure_parent(path)
    rows = np.asarray(rows, dtype=float).reshape(-1, len(columns))
    with open(path, 'w', encoding='utf-8') as f:
        if metadata is not None:
            f.write('# ' + dumps(metadata, indent=None))
        f.write(','.join(columns) + '\n')
        np.savetxt(f, rows, fmt=FLOAT_FORMAT, delimiter=',')
    return path


def read_csv(path: str) -> Tuple[Dict[str, Any], Sequence[str], np.ndarray]:
    """Reads a table written by write_csv: (metadata, columns, rows)"""
    metadata: Dict[str, Any] = {}
    with open(path, encoding='utf-8') as f:
        line = f.readline()
        if line.startswith('#'):
            metadata = json.loads(line[1:].strip())
            line = f.readline()
        columns = line.strip().split(',')
        rows = np.loadtxt(f, delimiter=',', ndmin=2)
    if rows.size == 0:
        rows = np.zeros((0, len(columns)))
    return metadata, columns, rows


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
