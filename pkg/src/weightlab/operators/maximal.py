"""Dyadic maximal operators: scalar, weighted, matrix-weighted and set-valued."""
from __future__ import annotations

import numpy as np

from .. import spd
from ..convex import field_vertices, reducing_matrix
from ..grid import DomainError, DyadicGrid, Field, blocks, spread, unblocks


def _grids(grid: DyadicGrid, offsets):
    yield grid
    for off in offsets or ():
        g = grid.with_offset(off)
        if g.offset is not None:
            yield g


def _to_tree(a: np.ndarray, grid: DyadicGrid) -> np.ndarray:
    a = a.reshape(grid.shape + a.shape[1:])
    if grid.offset is not None:
        a = np.roll(a, [-o for o in grid.offset], axis=tuple(range(grid.dim)))
    return a


def _from_tree(a: np.ndarray, grid: DyadicGrid) -> np.ndarray:
    if grid.offset is not None:
        a = np.roll(a, list(grid.offset), axis=tuple(range(grid.dim)))
    return a.reshape((grid.n_cells,) + a.shape[grid.dim:])


def _coarsen(a: np.ndarray, dim: int, op=np.mean) -> np.ndarray:
    s = a.shape[0] // 2
    if dim == 1:
        return op(a.reshape((s, 2) + a.shape[1:]), axis=1)
    return op(a.reshape((s, 2, s, 2) + a.shape[2:]), axis=(1, 3))


def _refine(a: np.ndarray, dim: int) -> np.ndarray:
    for axis in range(dim):
        a = np.repeat(a, 2, axis=axis)
    return a


def _tree_max(num: np.ndarray, grid: DyadicGrid, den: np.ndarray | None = None) -> np.ndarray:
    """Per cell, max over its ancestors of mean(num)/mean(den) (den=None: plain mean)."""
    levels = [(_to_tree(num, grid), None if den is None else _to_tree(den, grid))]
    for _ in range(grid.depth):
        n, d = levels[0]
        levels.insert(0, (_coarsen(n, grid.dim), None if d is None else _coarsen(d, grid.dim)))
    best = None
    for n, d in levels:
        val = n if d is None else n / d
        best = val if best is None else np.maximum(_refine(best, grid.dim), val)
    return _from_tree(best, grid)


def maximal_scalar(f: Field, offsets=None) -> Field:
    """``M^d f(x) = max_{Q ni x} <|f|>_Q`` over the dyadic cubes containing x."""
    if f.kind != "scalar":
        raise DomainError("maximal_scalar takes a scalar field")
    a = np.abs(f.values)
    out = np.max([_tree_max(a, g) for g in _grids(f.grid, offsets)], axis=0)
    return f.replace(out)


def maximal_weighted_universal(f: Field, w: Field, offsets=None) -> Field:
    """``max_{Q ni x} w(Q)^{-1} int_Q |f| w``."""
    if f.kind != "scalar" or w.kind != "scalar":
        raise DomainError("expected scalar fields")
    if np.any(w.values <= 0):
        raise DomainError("weight must be positive")
    num = np.abs(f.values) * w.values
    out = np.max([_tree_max(num, g, w.values) for g in _grids(f.grid, offsets)], axis=0)
    return f.replace(out)


def _generators(f: Field) -> np.ndarray:
    """Points whose symmetric hull is f(y): (N, k, d)."""
    if f.kind == "vector":
        return f.values[:, None, :]
    if f.kind == "body":
        return field_vertices(f)
    raise DomainError("expected a vector or body field")


PAIR_TILE = 1 << 16


def _compact(P: np.ndarray, decimals: int = 12) -> np.ndarray:
    """Drop repeated points (up to sign) per cell; pad by repetition."""
    N, k, d = P.shape
    if k == 1:
        return P
    lead = np.take_along_axis(P, np.argmax(np.abs(P) > 0, axis=-1)[..., None], axis=-1)
    canon = np.round(np.where(lead < 0, -P, P), decimals).reshape(N * k, d)
    cell = np.repeat(np.arange(N), k)
    order = np.lexsort(tuple(canon[:, i] for i in range(d - 1, -1, -1)) + (cell,))
    c, cs = canon[order], cell[order]
    new = np.ones(N * k, dtype=bool)
    new[1:] = (cs[1:] != cs[:-1]) | np.any(c[1:] != c[:-1], axis=1)
    c, cs = c[new], cs[new]
    counts = np.bincount(cs, minlength=N)
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    width = int(counts.max())
    # slot j of a cell takes its j-th unique point, or its first one when short
    j = np.arange(width)
    src = start[:, None] + np.where(j[None, :] < counts[:, None], j[None, :], 0)
    return c[src]


def _quad_coords(d: int):
    iu = np.triu_indices(d)
    return iu, np.where(iu[0] == iu[1], 1.0, 2.0)


def _point_features(V: np.ndarray) -> np.ndarray:
    """Features with ``|A v|^2 = <sym(A^T A), feat(v)>``."""
    (i, j), coef = _quad_coords(V.shape[-1])
    return V[..., i] * V[..., j] * coef


def _matrix_features(Q: np.ndarray) -> np.ndarray:
    (i, j), _ = _quad_coords(Q.shape[-1])
    return Q[..., i, j]


def _block_chunks(nb: int, cost: int, budget: int = 1 << 22):
    step = max(1, budget // max(cost, 1))
    for i in range(0, nb, step):
        yield slice(i, i + step)


def _mean_pair_norm(FQ: np.ndarray, FG: np.ndarray, tile: int = PAIR_TILE) -> np.ndarray:
    """Blocks FQ (nb, s, f), FG (nb, s, k, f): mean_y max_j |A_x G_{y,j}| per x.

    Work proceeds in cache-sized tiles of (blocks, x rows) so the running
    maximum over the k points stays resident.
    """
    nb, s, k, f = FG.shape
    out = np.empty((nb, s))
    GT = np.ascontiguousarray(np.moveaxis(FG, 2, 1).swapaxes(2, 3))  # (nb, k, f, s)
    bstep = max(1, tile // (s * s))
    xstep = s if bstep > 1 else max(1, tile // s)
    for b0 in range(0, nb, bstep):
        bs = slice(b0, b0 + bstep)
        for x0 in range(0, s, xstep):
            xs = slice(x0, x0 + xstep)
            A = FQ[bs, xs]
            q = np.matmul(A, GT[bs, 0])
            for j in range(1, k):
                np.maximum(q, np.matmul(A, GT[bs, j]), out=q)
            np.maximum(q, 0.0, out=q)
            np.sqrt(q, out=q)
            out[bs, xs] = q.mean(axis=-1)
    return out


def christ_goldberg(W: Field, f: Field, r: float = 1.0) -> Field:
    """``max_{Q ni x} avg_{y in Q} |W(x)^{1/r} W(y)^{-1/r} f(y)|``.

    ``f`` may also be a body field, in which case the integrand is the
    magnitude of the image body.
    """
    return christ_goldberg_points(W, _generators(f), r)


def _cg_powers(W: Field, r: float):
    if r < 1:
        raise DomainError(f"r must be >= 1, got {r}")
    if W.kind != "matrix":
        raise DomainError("expected a matrix weight")
    Q = spd.power(W.values, 2.0 / r)
    B = spd.power(W.values, -1.0 / r, clamp=True, where="christ_goldberg weight")
    return Q, B


def christ_goldberg_points(W: Field, P: np.ndarray, r: float = 1.0) -> Field:
    """Christ-Goldberg maximal function of the body field ``conv{+-P[y, j]}``."""
    Q, B = _cg_powers(W, r)
    G = _compact(np.einsum("nij,nkj->nki", B, P))
    FQ, FG = _matrix_features(Q), _point_features(G)
    out = np.zeros(W.grid.n_cells)
    for k in range(W.grid.depth + 1):
        bQ, bG = blocks(FQ, W.grid, k), blocks(FG, W.grid, k)
        vals = _mean_pair_norm(bQ, bG)
        out = np.maximum(out, unblocks(vals, W.grid, k))
    return Field(W.grid, out)


def christ_goldberg_ellipsoids(W: Field, E: Field, r: float = 1.0) -> Field:
    """Christ-Goldberg maximal function of the ellipsoid field ``E(y) B`` (B the unit ball)."""
    if E.kind != "matrix":
        raise DomainError("expected a matrix field of ellipsoid shapes")
    if r < 1:
        raise DomainError(f"r must be >= 1, got {r}")
    A = spd.power(W.values, 1.0 / r)
    M = spd.power(W.values, -1.0 / r, clamp=True, where="christ_goldberg weight") @ E.values
    out = np.zeros(W.grid.n_cells)
    for k in range(W.grid.depth + 1):
        vals = spd.pair_op_norms(blocks(A, W.grid, k), blocks(M, W.grid, k), lambda n: n.mean(axis=-1))
        out = np.maximum(out, unblocks(vals, W.grid, k))
    return Field(W.grid, out)


def christ_goldberg_aux(W: Field, f: Field, p: float) -> Field:
    """``max_{Q ni x} avg_{y in Q} |R_Q W(y)^{-1} f(y)|`` with ``R_Q`` the reducing matrix."""
    if p <= 1:
        raise DomainError(f"p must be > 1, got {p}")
    Winv = spd.power(W.values, -1.0, clamp=True, where="christ_goldberg_aux weight")
    G = np.einsum("nij,nkj->nki", Winv, _generators(f))
    out = np.zeros(W.grid.n_cells)
    for k in range(W.grid.depth + 1):
        bG = blocks(G, W.grid, k)
        vals = np.empty(bG.shape[0])
        for c, Q in enumerate(W.grid.cubes(k)):
            R = reducing_matrix(W, Q, p)
            vals[c] = np.linalg.norm(bG[c] @ R.T, axis=-1).max(axis=-1).mean()
        out = np.maximum(out, spread(vals, W.grid, k))
    return Field(W.grid, out)


def convex_maximal(F: Field, offsets=None) -> Field:
    """Support function of ``MF(x)``: cube averages of ``h_F``, then max over cubes."""
    if F.kind != "body":
        raise DomainError("convex_maximal takes a body field")
    H = F.values
    out = np.zeros_like(H)
    for g in _grids(F.grid, offsets):
        for k in range(g.depth + 1):
            out = np.maximum(out, spread(blocks(H, g, k).mean(axis=1), g, k))
    return F.replace(out)
