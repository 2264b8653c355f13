"""Plain-text result tables with typed headers.

A table is tab-separated.  The first line holds ``name:type`` cells with
``type`` one of ``int``, ``float``, ``str``, ``bool``; every further line is a
row.  Floats are written with ``repr`` so they round-trip exactly and the
bytes depend only on the values.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = ["TYPES", "infer_type", "write_table", "read_table", "format_value"]

TYPES = ("int", "float", "str", "bool")


def infer_type(values: Iterable) -> str:
    """Narrowest column type that holds every value (``None`` allowed anywhere)."""
    kinds = set()
    for v in values:
        if v is None:
            continue
        if isinstance(v, (bool, np.bool_)):
            kinds.add("bool")
        elif isinstance(v, (int, np.integer)):
            kinds.add("int")
        elif isinstance(v, (float, np.floating)):
            kinds.add("float")
        else:
            kinds.add("str")
    if not kinds:
        return "str"
    if len(kinds) == 1:
        return kinds.pop()
    if kinds <= {"int", "float"}:
        return "float"
    return "str"


def format_value(v, kind: str) -> str:
    if v is None:
        return ""
    if kind == "float":
        v = float(v)
        return repr(v) if math.isfinite(v) else str(v)
    if kind == "int":
        return str(int(v))
    if kind == "bool":
        return "true" if v else "false"
    text = str(v)
    if "\t" in text or "\n" in text:
        raise ValueError(f"string cell contains a tab or newline: {text!r}")
    return text


def _parse(cell: str, kind: str):
    if cell == "":
        return None
    if kind == "float":
        return float(cell)
    if kind == "int":
        return int(cell)
    if kind == "bool":
        if cell not in ("true", "false"):
            raise ValueError(f"bad bool cell {cell!r}")
        return cell == "true"
    return cell


def write_table(path: str | Path, rows: Sequence[Mapping], columns: Sequence[str] | None = None) -> Path:
    """Write ``rows`` (dicts) to ``path``; columns default to first-seen key order."""
    if columns is None:
        columns = []
        for row in rows:
            columns += [k for k in row if k not in columns]
    kinds = [infer_type(row.get(c) for row in rows) for c in columns]
    lines = ["\t".join(f"{c}:{k}" for c, k in zip(columns, kinds))]
    for row in rows:
        lines.append("\t".join(format_value(row.get(c), k) for c, k in zip(columns, kinds)))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_table(path: str | Path) -> list[dict]:
    """Read a table written by :func:`write_table`, restoring cell types."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError("empty table")
    header = []
    for cell in lines[0].split("\t"):
        name, _, kind = cell.rpartition(":")
        if kind not in TYPES or not name:
            raise ValueError(f"bad header cell {cell!r}")
        header.append((name, kind))
    rows = []
    for n, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(header):
            raise ValueError(f"line {n}: expected {len(header)} cells, got {len(cells)}")
        rows.append({name: _parse(c, kind) for (name, kind), c in zip(header, cells)})
    return rows
