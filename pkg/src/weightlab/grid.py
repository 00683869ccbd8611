"""Dyadic grids on the unit cube and piecewise-constant fields.

Every function handled by the library is constant on the finest-level cells
of a :class:`DyadicGrid`, so integrals and cube averages are exact finite
sums.  Cells are stored in row-major order of their multi-index.

A grid may carry an integer ``offset`` (in finest cells, per axis).  The
cubes of an offset grid are the standard dyadic cubes translated by that many
cells, with the domain treated as periodic so that every cube is still a
union of finest cells.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from itertools import product
from typing import Iterator

import numpy as np

KINDS = ("scalar", "vector", "matrix", "body")


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


@dataclass(frozen=True, order=True)
class Cube:
    level: int
    index: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.index)

    @property
    def measure(self) -> float:
        return 2.0 ** (-self.dim * self.level)

    def __str__(self) -> str:
        idx = ",".join(str(i) for i in self.index)
        return f"L{self.level}[{idx}]"

    def to_dict(self) -> dict:
        return {"level": self.level, "index": list(self.index)}


@dataclass(frozen=True)
class DyadicGrid:
    dim: int = 1
    depth: int = 0
    offset: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise DomainError(f"dim must be 1 or 2, got {self.dim}")
        if self.depth < 0:
            raise DomainError(f"depth must be >= 0, got {self.depth}")
        if self.offset is not None:
            off = tuple(int(o) % self.side for o in self.offset)
            if len(off) != self.dim:
                raise DomainError("offset length must equal dim")
            object.__setattr__(self, "offset", off if any(off) else None)

    @property
    def side(self) -> int:
        return 2 ** self.depth

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.dim

    @property
    def n_cells(self) -> int:
        return self.side ** self.dim

    @property
    def cell_measure(self) -> float:
        return 2.0 ** (-self.dim * self.depth)

    def with_offset(self, offset) -> "DyadicGrid":
        return DyadicGrid(self.dim, self.depth, tuple(offset))

    def cubes(self, level: int) -> list[Cube]:
        """Cubes of one level, in the row-major order used by :func:`blocks`."""
        self._check_level(level)
        return [Cube(level, idx) for idx in product(range(2 ** level), repeat=self.dim)]

    def all_cubes(self) -> Iterator[Cube]:
        for k in range(self.depth + 1):
            yield from self.cubes(k)

    def cube_at(self, level: int, flat: int) -> Cube:
        return Cube(level, tuple(int(i) for i in np.unravel_index(flat, (2 ** level,) * self.dim)))

    def contains_cube(self, cube: Cube) -> bool:
        return (
            cube.dim == self.dim
            and 0 <= cube.level <= self.depth
            and all(0 <= i < 2 ** cube.level for i in cube.index)
        )

    def check_cube(self, cube: Cube) -> None:
        if not self.contains_cube(cube):
            raise DomainError(f"cube {cube} does not belong to {self}")

    def cube_cells(self, cube: Cube) -> np.ndarray:
        """Flat indices of the finest cells making up ``cube``."""
        self.check_cube(cube)
        s = 2 ** (self.depth - cube.level)
        ranges = []
        for axis, i in enumerate(cube.index):
            r = np.arange(i * s, (i + 1) * s)
            if self.offset is not None:
                r = (r + self.offset[axis]) % self.side
            ranges.append(r)
        mesh = np.meshgrid(*ranges, indexing="ij")
        return np.ravel_multi_index(tuple(m.ravel() for m in mesh), self.shape)

    def cube_of_cell(self, cell: int, level: int) -> Cube:
        self._check_level(level)
        idx = np.unravel_index(cell, self.shape)
        s = 2 ** (self.depth - level)
        off = self.offset or (0,) * self.dim
        return Cube(level, tuple(int((i - o) % self.side) // s for i, o in zip(idx, off)))

    def parent(self, cube: Cube) -> Cube:
        if cube.level == 0:
            raise DomainError("the root cube has no parent")
        return Cube(cube.level - 1, tuple(i // 2 for i in cube.index))

    def children(self, cube: Cube) -> list[Cube]:
        if cube.level >= self.depth:
            return []
        return [
            Cube(cube.level + 1, tuple(2 * i + b for i, b in zip(cube.index, bits)))
            for bits in product((0, 1), repeat=self.dim)
        ]

    def cell_centers(self) -> np.ndarray:
        """Centres of the cells, shape ``(n_cells, dim)``."""
        h = 1.0 / self.side
        axes = [(np.arange(self.side) + 0.5) * h] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def _check_level(self, level: int) -> None:
        if not 0 <= level <= self.depth:
            raise DomainError(f"level {level} outside 0..{self.depth}")


def blocks(values: np.ndarray, grid: DyadicGrid, level: int) -> np.ndarray:
    """Group per-cell values by the cubes of ``level``.

    Returns an array of shape ``(n_cubes, cells_per_cube, *value_shape)``
    whose first axis follows :meth:`DyadicGrid.cubes` order.
    """
    grid._check_level(level)
    vshape = values.shape[1:]
    a = values.reshape(grid.shape + vshape)
    if grid.offset is not None:
        a = np.roll(a, [-o for o in grid.offset], axis=tuple(range(grid.dim)))
    nb, s = 2 ** level, 2 ** (grid.depth - level)
    if grid.dim == 1:
        return a.reshape((nb, s) + vshape)
    a = a.reshape((nb, s, nb, s) + vshape)
    a = np.swapaxes(a, 1, 2)
    return a.reshape((nb * nb, s * s) + vshape)


def unblocks(b: np.ndarray, grid: DyadicGrid, level: int) -> np.ndarray:
    """Inverse of :func:`blocks`."""
    vshape = b.shape[2:]
    nb, s = 2 ** level, 2 ** (grid.depth - level)
    if grid.dim == 1:
        a = b.reshape((grid.side,) + vshape)
    else:
        a = b.reshape((nb, nb, s, s) + vshape)
        a = np.swapaxes(a, 1, 2).reshape(grid.shape + vshape)
    if grid.offset is not None:
        a = np.roll(a, list(grid.offset), axis=tuple(range(grid.dim)))
    return a.reshape((grid.n_cells,) + vshape)


def spread(per_cube: np.ndarray, grid: DyadicGrid, level: int) -> np.ndarray:
    """Broadcast one value per cube of ``level`` to every cell of that cube."""
    s = 2 ** (grid.dim * (grid.depth - level))
    b = np.broadcast_to(per_cube[:, None], (per_cube.shape[0], s) + per_cube.shape[1:])
    return unblocks(np.ascontiguousarray(b), grid, level)


def level_means(values: np.ndarray, grid: DyadicGrid, level: int) -> np.ndarray:
    return blocks(values, grid, level).mean(axis=1)


@dataclass(frozen=True, eq=False)
class Field:
    """Piecewise-constant field: one value per finest cell.

    ``values`` has shape ``(n_cells,)`` for scalars, ``(n_cells, d)`` for
    vectors, ``(n_cells, d, d)`` for matrices and ``(n_cells, m)`` for convex
    bodies, stored as support-function samples on ``dirs``.
    """

    grid: DyadicGrid
    values: np.ndarray
    kind: str = "scalar"
    dirs: object = dc_field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown field kind {self.kind!r}")
        v = np.array(self.values, dtype=float)
        if v.shape[:1] != (self.grid.n_cells,):
            raise DomainError(
                f"expected {self.grid.n_cells} cell values, got shape {v.shape}"
            )
        ndim = {"scalar": 1, "vector": 2, "matrix": 3, "body": 2}[self.kind]
        if v.ndim != ndim:
            raise DomainError(f"{self.kind} field needs {ndim}-d values, got {v.ndim}-d")
        if self.kind == "matrix" and v.shape[1] != v.shape[2]:
            raise DomainError("matrix values must be square")
        if self.kind == "body":
            if self.dirs is None:
                raise DomainError("body fields need a direction set")
            if v.shape[1] != len(self.dirs):
                raise DomainError("support samples do not match the direction set")
        if not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        if self.kind == "scalar":
            return 1
        if self.kind == "body":
            return self.dirs.d
        return self.values.shape[1]

    def replace(self, values, kind=None, dirs=None) -> "Field":
        kind = kind or self.kind
        if dirs is None and kind == "body":
            dirs = self.dirs
        return Field(self.grid, values, kind, dirs)

    def refine(self) -> "Field":
        """The same function sampled on a grid one level deeper."""
        g = DyadicGrid(self.grid.dim, self.grid.depth + 1)
        a = self.values.reshape(self.grid.shape + self.values.shape[1:])
        for axis in range(self.grid.dim):
            a = np.repeat(a, 2, axis=axis)
        return Field(g, a.reshape((g.n_cells,) + self.values.shape[1:]), self.kind, self.dirs)

    def on_grid(self, grid: DyadicGrid) -> "Field":
        if (grid.dim, grid.depth) != (self.grid.dim, self.grid.depth):
            raise DomainError("grids differ in dimension or depth")
        return Field(grid, self.values, self.kind, self.dirs)


def scalar_field(grid: DyadicGrid, values) -> Field:
    return Field(grid, values, "scalar")


def average(f: Field, cube: Cube):
    """Mean of a scalar or vector field over ``cube``."""
    if f.kind not in ("scalar", "vector", "matrix"):
        raise DomainError("average() takes scalar, vector or matrix fields")
    cells = f.grid.cube_cells(cube)
    return f.values[cells].mean(axis=0)


def lp_norm(f: Field, p: float, weight: Field | None = None) -> float:
    """(Weighted) L^p norm of a scalar or vector field.

    A scalar weight multiplies ``|f|^p``; a matrix weight ``W`` enters as
    ``|W^{1/p} f|^p``.
    """
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    if f.kind == "scalar":
        mag = np.abs(f.values)
    elif f.kind == "vector":
        mag = None
    else:
        raise DomainError("lp_norm takes scalar or vector fields")
    if weight is None:
        if mag is None:
            mag = np.linalg.norm(f.values, axis=1)
        integrand = mag ** p
    elif weight.kind == "scalar":
        if np.any(weight.values <= 0):
            raise DomainError("scalar weight must be positive on every cell")
        if mag is None:
            mag = np.linalg.norm(f.values, axis=1)
        integrand = mag ** p * weight.values
    elif weight.kind == "matrix":
        from .spd import check_pd, power

        if f.kind != "vector":
            raise DomainError("matrix weights act on vector fields")
        check_pd(weight.values, where="lp_norm weight cell")
        root = power(weight.values, 1.0 / p)
        integrand = np.linalg.norm(np.einsum("nij,nj->ni", root, f.values), axis=1) ** p
    else:
        raise DomainError("weight must be a scalar or matrix field")
    return float(np.sum(integrand) * f.grid.cell_measure) ** (1.0 / p)
