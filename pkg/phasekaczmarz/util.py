# /phasekaczmarz/phasekaczmarz/util.py

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor

from .config import Config
from .errors import ContractViolation


def resolve_threads(value=None):
    """Turns a --threads value ('auto', int or None) into a worker count."""
    if value is None:
        value = Config.THREADS
    if isinstance(value, str):
        if value.strip().lower() == 'auto':
            return os.cpu_count() or 1
        try:
            value = int(value)
        except ValueError:
            raise ContractViolation(f"threads must be a positive integer or 'auto', got '{value}'")
    if value < 1:
        raise ContractViolation(f"threads must be positive, got {value}")
    return value


def parallel_map(func, items, threads=1):
    """Order-preserving map; runs inline when one thread is enough."""
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as executor:
        return list(executor.map(func, items))


def chunk_ranges(n, chunk):
    """[start, stop) ranges of at most `chunk` items covering range(n)."""
    return [range(start, min(start + chunk, n)) for start in range(0, n, chunk)]


def _json_default(value):
    # numpy scalars and arrays
    if hasattr(value, 'tolist'):
        return value.tolist()
    if hasattr(value, 'value'):
        return value.value
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _clean(value):
    """JSON has no Infinity/NaN; encode them as strings."""
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def to_json(data):
    """Canonical JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(_clean(data), indent=2, sort_keys=True, default=_json_default) + '\n'


def write_json(data, path):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(to_json(data))
    return path


def format_float(value, digits=6):
    if value is None:
        return "N/A"
    return f"{value:.{digits}g}"
