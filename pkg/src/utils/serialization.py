"""
Flat-file output helpers
CSV and JSON writers with full float precision, and the matching CSV reader
"""

import csv
import io
import json
import logging
import math
import sys
from contextlib import contextmanager
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


def format_value(value: Any) -> str:
    """Render a CSV cell; floats keep 17 significant digits"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        # JSON has no NaN or infinity
        return float(value) if math.isfinite(value) else None
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@contextmanager
def open_output(path: Optional[str]):
    """Yield a text stream for path, or stdout when path is None or '-'"""
    if path in (None, "-"):
        yield sys.stdout
        return
    try:
        handle = open(path, "w", newline="")
    except OSError as e:
        raise OSError(f"Could not open {path} for writing: {e}") from e
    with handle:
        yield handle
    logger.info(f"Wrote {path}")


def write_csv(path: Optional[str], header: Sequence[str], rows: Iterable[Sequence[Any]]):
    """
    Write rows under a fixed header

    Args:
        path: Output file, stdout when None or '-'
        header: Column names
        rows: Row values in header order
    """
    with open_output(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def write_json(path: Optional[str], data: Any):
    """Write a JSON document (stdout when path is None or '-')"""
    with open_output(path) as handle:
        json.dump(_jsonable(data), handle, indent=2, allow_nan=False)
        handle.write("\n")


def _parse_cell(text: str) -> Any:
    if text == "":
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def read_csv_records(path: str) -> List[Dict[str, Any]]:
    """
    Read a CSV written by write_csv back into dicts

    Numeric cells are parsed to int or float, empty cells to None.
    """
    try:
        with open(path, "r", newline="") as f:
            text = f.read()
    except OSError as e:
        raise OSError(f"Could not read {path}: {e}") from e
    reader = csv.DictReader(io.StringIO(text))
    return [{key: _parse_cell(value) for key, value in row.items()} for row in reader]


def read_json(path: str) -> Any:
    try:
        with open(path, "r") as f:
            return json.load(f)
    except OSError as e:
        raise OSError(f"Could not read {path}: {e}") from e


def dump_amplitudes(path: Optional[str], snapshots: Sequence[np.ndarray]):
    """
    Write site probabilities after every step

    Args:
        path: Output CSV
        snapshots: One probability vector per step
    """
    rows = (
        (step, site, probability)
        for step, probabilities in enumerate(snapshots)
        for site, probability in enumerate(probabilities)
    )
    write_csv(path, ("step", "site", "probability"), rows)
