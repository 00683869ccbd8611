"""Sparse families of dyadic cubes and the operators built on them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..convex import DirectionSet, ConvexBody, sampled, segment
from ..grid import Cube, DomainError, DyadicGrid, Field


@dataclass(frozen=True, eq=False)
class SparseFamily:
    """Cubes with witness sets ``E(Q)`` given as arrays of finest-cell indices.

    ``witness`` may be ``None``; :func:`is_sparse` then searches for one.
    """

    grid: DyadicGrid
    members: tuple
    witness: dict | None = None

    def __post_init__(self):
        members = tuple(self.members)
        for Q in members:
            self.grid.check_cube(Q)
        if len(set(members)) != len(members):
            raise DomainError("repeated cube in family")
        object.__setattr__(self, "members", members)
        if self.witness is not None:
            object.__setattr__(
                self, "witness", {Q: np.asarray(E, dtype=np.int64) for Q, E in self.witness.items()}
            )

    def __len__(self) -> int:
        return len(self.members)

    def to_dict(self) -> dict:
        out = {"members": [Q.to_dict() for Q in self.members]}
        if self.witness is not None:
            out["witness"] = [sorted(int(i) for i in self.witness[Q]) for Q in self.members]
        return out


def _check_witness(grid, members, witness) -> bool:
    used = np.zeros(grid.n_cells, dtype=bool)
    for Q in members:
        if Q not in witness:
            return False
        E = witness[Q]
        cells = grid.cube_cells(Q)
        if len(np.unique(E)) != len(E) or not np.all(np.isin(E, cells)):
            return False
        if np.any(used[E]):
            return False
        used[E] = True
        if len(cells) > 2 * len(E):
            return False
    return True


def find_witness(grid: DyadicGrid, members) -> dict | None:
    """Witness sets for a family of dyadic cubes, or ``None`` if none exist.

    Cubes are processed finest first and each takes the smallest admissible
    number of still-free cells.  Dyadic cubes are nested or disjoint, and a
    free cell of ``Q`` serves every ancestor of ``Q`` equally well, so this
    greedy choice succeeds whenever any witness exists.
    """
    free = np.ones(grid.n_cells, dtype=bool)
    witness = {}
    for Q in sorted(members, key=lambda c: (-c.level, c.index)):
        cells = grid.cube_cells(Q)
        avail = np.sort(cells[free[cells]])
        need = -(-len(cells) // 2)
        if len(avail) < need:
            return None
        witness[Q] = avail[:need]
        free[witness[Q]] = False
    return witness


def is_sparse(S: SparseFamily) -> bool:
    if S.witness is None:
        return find_witness(S.grid, S.members) is not None
    return _check_witness(S.grid, S.members, S.witness)


def family(grid: DyadicGrid, members, witness=None) -> SparseFamily:
    return SparseFamily(grid, tuple(members), witness)


def _nested_halves(grid: DyadicGrid) -> SparseFamily:
    origin = (0,) * grid.dim
    members, witness = [], {}
    for k in range(grid.depth + 1):
        Q = Cube(k, origin)
        cells = grid.cube_cells(Q)
        if k < grid.depth:
            inner = grid.cube_cells(Cube(k + 1, origin))
            cells = np.setdiff1d(cells, inner)
        members.append(Q)
        witness[Q] = cells
    return SparseFamily(grid, tuple(members), witness)


def _random_family(grid: DyadicGrid, seed: int, stride: int, prob: float = 0.5) -> SparseFamily:
    if stride < 1:
        raise DomainError("level stride must be >= 1")
    rng = np.random.default_rng(seed)
    covered = np.zeros(grid.n_cells, dtype=bool)
    members, witness = [], {}
    for k in sorted(range(0, grid.depth + 1, stride), reverse=True):
        chosen = []
        for Q in grid.cubes(k):
            cells = grid.cube_cells(Q)
            if rng.random() < prob and 2 * np.count_nonzero(covered[cells]) <= len(cells):
                witness[Q] = cells[~covered[cells]]
                chosen.append(cells)
                members.append(Q)
        for cells in chosen:
            covered[cells] = True
    members.sort()
    return SparseFamily(grid, tuple(members), witness)


def _stopping_time(grid: DyadicGrid, f: Field, threshold: float) -> SparseFamily:
    if threshold < 2:
        raise DomainError("stopping-time threshold must be >= 2 for a sparse family")
    a = np.abs(f.values)
    root = Cube(0, (0,) * grid.dim)
    members, witness = [], {}
    stack = [root]
    while stack:
        Q = stack.pop()
        members.append(Q)
        avg = a[grid.cube_cells(Q)].mean()
        stops = []
        frontier = grid.children(Q)
        while frontier and avg > 0:
            nxt = []
            for R in frontier:
                if a[grid.cube_cells(R)].mean() > threshold * avg:
                    stops.append(R)
                else:
                    nxt.extend(grid.children(R))
            frontier = nxt
        E = grid.cube_cells(Q)
        for R in stops:
            E = np.setdiff1d(E, grid.cube_cells(R))
        witness[Q] = E
        stack.extend(stops)
    members.sort()
    return SparseFamily(grid, tuple(members), witness)


def sparse_generate(grid: DyadicGrid, strategy: str, *, seed: int = 0, stride: int = 2,
                    f: Field | None = None, threshold: float = 2.0) -> SparseFamily:
    """Build a sparse family.

    ``nested-halves``: the cubes at the origin, each owning what its origin
    child leaves.  ``random``: cubes on levels ``0, stride, 2 stride, ...``
    kept at random when their deeper members leave half of them free.
    ``stopping-time``: maximal subcubes where the average of ``|f|`` exceeds
    ``threshold`` times the parent's.  ``single``: the root cube alone.
    """
    if strategy == "nested-halves":
        S = _nested_halves(grid)
    elif strategy == "random":
        S = _random_family(grid, seed, stride)
    elif strategy == "stopping-time":
        if f is None:
            raise DomainError("stopping-time strategy needs a field f")
        S = _stopping_time(grid, f, threshold)
    elif strategy == "single":
        root = Cube(0, (0,) * grid.dim)
        S = SparseFamily(grid, (root,), {root: grid.cube_cells(root)})
    else:
        raise DomainError(f"unknown strategy {strategy!r}")
    if not is_sparse(S):
        raise DomainError(f"{strategy} construction failed to produce a sparse family")
    return S


def sparse_scalar(S: SparseFamily, f: Field) -> Field:
    """``T_S f = sum_Q <f>_Q 1_Q``."""
    if f.kind != "scalar":
        raise DomainError("sparse_scalar takes a scalar field")
    out = np.zeros(f.grid.n_cells)
    for Q in S.members:
        cells = S.grid.cube_cells(Q)
        out[cells] += f.values[cells].mean()
    return f.replace(out)


def convex_average(f: Field, Q: Cube, dirs: DirectionSet | None = None) -> ConvexBody:
    """Body of averages of ``k f`` over ``Q`` with ``|k| <= 1``.

    Its support function is ``avg_Q |<f(y), u>|``.
    """
    if f.kind != "vector":
        raise DomainError("convex_average takes a vector field")
    vals = f.values[f.grid.cube_cells(Q)]
    if np.all(vals == vals[0]):
        return segment(vals[0])
    dirs = dirs or DirectionSet.default(f.d)
    return sampled(np.abs(vals @ dirs.dirs.T).mean(axis=0), dirs)


def convex_sparse(S: SparseFamily, f: Field, dirs: DirectionSet | None = None) -> Field:
    """Cellwise Minkowski sum of the convex averages over members containing the cell.

    ``f`` is a vector field (averages ``<<f>>_Q``) or a body field (Aumann
    averages of ``F``).
    """
    if f.kind == "vector":
        dirs = dirs or DirectionSet.default(f.d)
        proj = np.abs(f.values @ dirs.dirs.T)
    elif f.kind == "body":
        dirs, proj = f.dirs, f.values
    else:
        raise DomainError("convex_sparse takes a vector or body field")
    H = np.zeros((f.grid.n_cells, len(dirs)))
    for Q in S.members:
        cells = S.grid.cube_cells(Q)
        H[cells] += proj[cells].mean(axis=0)
    return Field(f.grid, H, "body", dirs)
