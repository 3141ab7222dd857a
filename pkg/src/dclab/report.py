"""CSV, JSON and two-column data output with fixed float formatting.

Every file is written once through a temporary file in the target directory
followed by ``os.replace``, so readers never see partial output.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

FLOAT_FMT = "{:.12g}"


def fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v))
    if v is None:
        return ""
    return str(v)


def clean(obj: Any) -> Any:
    """JSON-ready copy: floats rounded to 12 significant digits, non-finite as strings."""
    if isinstance(obj, Mapping):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return str(v)
        return float(FLOAT_FMT.format(v))
    return obj


def atomic_write(path: str | os.PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(rows: Iterable[Mapping], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(path, rows: Iterable[Mapping], columns: Sequence[str]) -> Path:
    return atomic_write(path, csv_text(rows, columns))


def write_json(path, obj: Any) -> Path:
    return atomic_write(path, json.dumps(clean(obj), indent=2, sort_keys=True) + "\n")


def write_dat(path, xs: Sequence[float], ys: Sequence[float], header: str = "") -> Path:
    """Two whitespace-separated columns, ready for plotting."""
    lines = [f"# {header}"] if header else []
    lines += [f"{fmt(float(x))} {fmt(float(y))}" for x, y in zip(xs, ys)]
    return atomic_write(path, "\n".join(lines) + "\n")
