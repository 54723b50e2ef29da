"""CSV iteration logs and JSON run summaries.

Floats are written with ``repr``, the shortest round-trip representation,
so a run repeated with the same configuration and seeds reproduces its log
byte-identically. Wall-clock time is recorded only in the JSON summary and
is documented as the one non-reproducible field.
"""

import csv
import json
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path


def _fmt(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_iteration_log(records, path):
    """Write iteration records as CSV, one row per outer iteration."""
    path = Path(path)
    if not records:
        path.write_text("")
        return
    first = records[0]
    d = len(getattr(first, "distances", []) or [])
    header = ["k", "objective", "kkt_raw", "kkt_scaled", "aug_lagrangian", "comm_bytes"]
    per_node = []
    if d:
        header.append("c2_measured")
        for name in ("d", "beta", "inner", "x1_ok", "x2_ok"):
            per_node.extend(f"{name}_{i}" for i in range(d))
        header.extend(per_node)
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for rec in records:
            row = [
                rec.k,
                _fmt(rec.objective),
                _fmt(rec.kkt_raw),
                _fmt(rec.kkt_scaled),
                _fmt(rec.aug_lagrangian),
                rec.comm_bytes,
            ]
            if d:
                row.append(_fmt(rec.c2_measured))
                row.extend(_fmt(v) for v in rec.distances)
                row.extend(_fmt(v) for v in rec.betas)
                row.extend(_fmt(v) for v in rec.inner_iterations)
                row.extend(_fmt(v) for v in rec.x1_ok)
                row.extend(_fmt(v) for v in rec.x2_ok)
            writer.writerow(row)


def read_iteration_log(path):
    """Read a CSV iteration log back into a list of plain dicts."""
    rows = []
    with open(path, newline="", encoding="ascii") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for key, val in raw.items():
                if key == "k" or key == "comm_bytes" or key.startswith("inner"):
                    row[key] = int(val)
                elif key.startswith(("x1_ok", "x2_ok")):
                    row[key] = bool(int(val))
                else:
                    row[key] = float(val)
            rows.append(row)
    return rows


def _jsonable(value):
    if is_dataclass(value) and not isinstance(value, type):
        return _jsonable(asdict(value))
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def write_json(payload, path):
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
