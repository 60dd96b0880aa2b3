"""
Utility functions for the ews_signatures package.
"""
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, List, Sequence, TypeVar, Union

import numpy as np
import pandas as pd

T = TypeVar("T")
R = TypeVar("R")


# -----------------------
# Validation
# -----------------------


def _as_float_array(values: Any, name: str, ndim: Union[int, None] = None) -> np.ndarray:
    """Converts values to a float64 array and checks that every entry is finite.

    Args:
        values: Anything numpy can turn into an array.
        name: Name of the argument, used in error messages.
        ndim: Optional required number of dimensions.

    Returns:
        A new float64 array.

    Raises:
        TypeError: If `values` is not numeric.
        ValueError: If `values` has the wrong number of dimensions or non-finite entries.
    """
    try:
        array = np.array(values, dtype=np.float64)
    except (TypeError, ValueError) as error:
        raise TypeError(f"Expected numeric values for `{name}`: {error}") from error
    if ndim is not None and array.ndim != ndim:
        raise ValueError(
            f"Expected `{name}` with {ndim} dimension(s), but received shape {array.shape}"
        )
    if not np.all(np.isfinite(array)):
        raise ValueError(f"`{name}` has non-finite entries")
    return array


def _as_square_matrix(values: Any, name: str) -> np.ndarray:
    matrix = _as_float_array(values, name, ndim=2)
    if matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"`{name}` must be square, but has shape {matrix.shape}")
    return matrix


def _check_positive_int(value: Any, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise TypeError(f"`{name}` must be an integer, but received {type(value)}")
    if value < minimum:
        raise ValueError(f"`{name}` must be at least {minimum}, but received {value}")
    return int(value)


# -----------------------
# Deterministic linear algebra
# -----------------------


def _matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched matrix product by broadcast multiply-and-sum.

    Each output entry is reduced over the same axis in the same order whatever
    the batch shape, so results do not depend on how many items are stacked.
    """
    return (a[..., :, :, None] * b[..., None, :, :]).sum(axis=-2)


def _matvec(a: np.ndarray, v: np.ndarray) -> np.ndarray:
    return (a * v[..., None, :]).sum(axis=-1)


# -----------------------
# Serialization
# -----------------------


def _float_digits() -> int:
    return pd.get_option("ews.float_digits")


def _format_float(value: float, digits: Union[int, None] = None) -> str:
    """Formats a float as a JSON number with a fixed count of significant digits."""
    value = float(value)
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    return f"{value:.{digits or _float_digits()}g}"


def _to_json_text(obj: Any, digits: Union[int, None] = None, indent: int = 0) -> str:
    """Serializes nested dicts, lists and arrays to JSON, writing every float with `ews.float_digits` significant digits.

    Args:
        obj: The object to serialize. May contain numpy arrays and scalars.
        digits: Optional override for the number of significant digits.
        indent: Current indent level, used when recursing.

    Returns:
        The JSON text.
    """
    pad = "  " * (indent + 1)
    close = "  " * indent
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(obj, digits)
    if isinstance(obj, (complex, np.complexfloating)):
        return _to_json_text([obj.real, obj.imag], digits, indent)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{pad}{json.dumps(str(key))}: {_to_json_text(value, digits, indent + 1)}"
            for key, value in obj.items()
        ]
        return "{\n" + ",\n".join(items) + f"\n{close}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        # Numeric rows stay on one line
        if all(
            isinstance(item, (int, float, np.integer, np.floating))
            and not isinstance(item, bool)
            for item in obj
        ):
            return "[" + ", ".join(_to_json_text(item, digits) for item in obj) + "]"
        items = [f"{pad}{_to_json_text(item, digits, indent + 1)}" for item in obj]
        return "[\n" + ",\n".join(items) + f"\n{close}]"
    raise TypeError(f"Cannot serialize object of type {type(obj)} to JSON")


def _write_json(obj: Any, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(_to_json_text(obj) + "\n", encoding="utf-8")
    return path


def _read_json(path: Union[str, Path]) -> Any:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _write_csv(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    table.to_csv(path, index=False, float_format=f"%.{_float_digits()}g")
    return path


def _sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


# -----------------------
# Parallelism
# -----------------------


def _resolve_threads(threads: Union[int, None] = None) -> int:
    """Number of workers to use. 0 or None means the `ews.threads` option, whose 0 means all cores."""
    if not threads:
        threads = pd.get_option("ews.threads")
    return threads if threads else (os.cpu_count() or 1)


def _parallel_map(
    fn: Callable[[T], R], items: Iterable[T], threads: Union[int, None] = None
) -> List[R]:
    """Maps `fn` over `items` with a thread pool, returning results in input order.

    Each item is computed by a single call, so results do not depend on the number of workers.
    """
    items = list(items)
    workers = min(_resolve_threads(threads), max(len(items), 1))
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))


def _word_label(word: Sequence[int]) -> str:
    """Label for a word such as (1, 2), with letters 1-based."""
    return "(" + ",".join(str(letter) for letter in word) + ")"
