"""Plain-text field files.

::

    weightlab-field v1 dim=1 depth=3 kind=matrix d=2
    1 0 0 1
    ...

One line per finest cell in row-major order.  Matrices are written row-major.
Body lines carry a tag: ``segment v_1 .. v_d``, ``ellipsoid a_11 .. a_dd`` or
``sampled h_1 .. h_m`` (samples on the default direction set with ``m``
directions); bodies are stored internally as samples either way.
"""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .convex import DirectionSet, ellipsoid, segment
from .grid import DomainError, DyadicGrid, Field

MAGIC = "weightlab-field"
VERSION = "v1"


class FieldFormatError(DomainError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def format_field(f: Field) -> str:
    extra = f" m={len(f.dirs)}" if f.kind == "body" else ""
    off = ""
    if f.grid.offset is not None:
        off = " offset=" + ",".join(str(o) for o in f.grid.offset)
    lines = [f"{MAGIC} {VERSION} dim={f.grid.dim} depth={f.grid.depth} kind={f.kind} d={f.d}{extra}{off}"]
    vals = f.values.reshape(f.grid.n_cells, -1)
    tag = "sampled " if f.kind == "body" else ""
    lines += [tag + " ".join(_fmt(x) for x in row) for row in vals]
    return "\n".join(lines) + "\n"


def write_field(f: Field, path) -> None:
    Path(path).write_text(format_field(f))


def _parse_header(line: str) -> dict:
    parts = line.split()
    if len(parts) < 2 or parts[0] != MAGIC:
        raise FieldFormatError("missing 'weightlab-field' header")
    if parts[1] != VERSION:
        raise FieldFormatError(f"unsupported version {parts[1]!r}")
    hdr = {}
    for kv in parts[2:]:
        key, sep, val = kv.partition("=")
        if not sep:
            raise FieldFormatError(f"bad header token {kv!r}")
        hdr[key] = val
    for key in ("dim", "depth", "kind", "d"):
        if key not in hdr:
            raise FieldFormatError(f"header lacks {key}=")
    return hdr


def parse_field(text: str) -> Field:
    lines = [ln for ln in io.StringIO(text).read().splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise FieldFormatError("empty field file")
    hdr = _parse_header(lines[0])
    try:
        dim, depth, d = int(hdr["dim"]), int(hdr["depth"]), int(hdr["d"])
    except ValueError as exc:
        raise FieldFormatError(f"non-integer header value: {exc}") from None
    kind = hdr["kind"]
    offset = tuple(int(o) for o in hdr["offset"].split(",")) if "offset" in hdr else None
    grid = DyadicGrid(dim, depth, offset)
    rows = lines[1:]
    if len(rows) != grid.n_cells:
        raise FieldFormatError(f"expected {grid.n_cells} cell lines, found {len(rows)}")
    if kind == "body":
        return _parse_bodies(grid, rows, d, hdr)
    width = {"scalar": 1, "vector": d, "matrix": d * d}.get(kind)
    if width is None:
        raise FieldFormatError(f"unknown kind {kind!r}")
    try:
        vals = np.array([[float(x) for x in r.split()] for r in rows])
    except ValueError as exc:
        raise FieldFormatError(str(exc)) from None
    if vals.shape[1:] != (width,):
        raise FieldFormatError(f"each {kind} line needs {width} numbers")
    shape = {"scalar": (grid.n_cells,), "vector": (grid.n_cells, d), "matrix": (grid.n_cells, d, d)}[kind]
    return Field(grid, vals.reshape(shape), kind)


def _parse_bodies(grid, rows, d, hdr) -> Field:
    dirs = DirectionSet.default(d, int(hdr["m"])) if "m" in hdr else DirectionSet.default(d)
    out = np.empty((grid.n_cells, len(dirs)))
    for n, row in enumerate(rows):
        tag, *nums = row.split()
        x = np.array([float(v) for v in nums])
        if tag == "segment" and x.size == d:
            out[n] = segment(x).support_on(dirs)
        elif tag == "ellipsoid" and x.size == d * d:
            out[n] = ellipsoid(x.reshape(d, d)).support_on(dirs)
        elif tag == "sampled" and x.size == len(dirs):
            out[n] = x
        else:
            raise FieldFormatError(f"cell {n}: bad body line {tag!r} with {x.size} numbers")
    return Field(grid, out, "body", dirs)


def read_field(path) -> Field:
    return parse_field(Path(path).read_text())
