"""CSV/JSON writers with a fixed float format so repeated runs are byte-identical."""

import csv
import json
import math
from pathlib import Path


def fmt(x):
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(x) for x in row])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def _clean(obj):
    # NaN/inf are not valid JSON; they become null.
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return _clean(obj.item())
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj):
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def write_dat(path, header, rows):
    """Whitespace-separated columns with a ``#`` header line (gnuplot style)."""
    path = Path(path)
    lines = ["# " + " ".join(header)]
    for row in rows:
        lines.append(" ".join(fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n")
    return path
