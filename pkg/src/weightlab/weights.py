"""Weight classes and their characteristics over dyadic cubes.

Each characteristic is an exact supremum over every dyadic cube of the grid
(and optionally of a few offset grids).  The result records which cube
attains it.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterable

import numpy as np

from . import spd
from .convex import DirectionSet, NormFunction
from .grid import Cube, DomainError, DyadicGrid, Field, blocks


@dataclass(frozen=True)
class CharacteristicReport:
    value: float
    variant: str
    argmax_cube: Cube
    clamped: bool = False
    p: float | None = None
    extra: dict = dc_field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        out = {
            "variant": self.variant,
            "p": self.p,
            "value": self.value,
            "argmax_cube": self.argmax_cube.to_dict(),
            "clamped": self.clamped,
        }
        if self.grid_offset is not None:
            out["grid_offset"] = list(self.grid_offset)
        return out

    @property
    def grid_offset(self):
        return self.extra.get("offset")

    def __float__(self) -> float:
        return self.value


def conjugate(p: float) -> float:
    if p <= 1:
        raise DomainError(f"p must be > 1, got {p}")
    return p / (p - 1.0)


def _check_scalar_weight(w: Field) -> np.ndarray:
    if w.kind != "scalar":
        raise DomainError("expected a scalar weight field")
    if np.any(w.values <= 0):
        raise DomainError(f"weight not positive at cell {int(np.argmin(w.values))}")
    return w.values


def _grids(grid: DyadicGrid, offsets: Iterable | None):
    yield grid
    for off in offsets or ():
        g = grid.with_offset(off)
        if g.offset is not None:
            yield g


def _sup(grid: DyadicGrid, per_level: Callable, offsets=None):
    """Max of ``per_level(g, k)`` (one value per cube of level k) over all cubes."""
    best, where = -np.inf, None
    for g in _grids(grid, offsets):
        for k in range(grid.depth + 1):
            vals = per_level(g, k)
            i = int(np.argmax(vals))
            if vals[i] > best:
                best, where = float(vals[i]), (g.offset, g.cube_at(k, i))
    return best, where


def _report(best, where, variant, p=None, clamped=False):
    offset, cube = where
    extra = {"offset": offset} if offset is not None else {}
    return CharacteristicReport(best, variant, cube, bool(clamped), p, extra)


# ---------------------------------------------------------------------------
# scalar weights


def scalar_ap(w: Field, p: float, offsets=None) -> CharacteristicReport:
    """``sup_Q <w>_Q <w^{1-p'}>_Q^{p-1}``."""
    pc = conjugate(p)
    v = _check_scalar_weight(w)
    s = v ** (1.0 - pc)

    def level(g, k):
        return blocks(v, g, k).mean(axis=1) * blocks(s, g, k).mean(axis=1) ** (p - 1.0)

    return _report(*_sup(w.grid, level, offsets), "scalar-ap", p)


def scalar_a1(w: Field, offsets=None) -> CharacteristicReport:
    """``sup_Q <w>_Q / min_Q w``."""
    v = _check_scalar_weight(w)

    def level(g, k):
        b = blocks(v, g, k)
        return b.mean(axis=1) / b.min(axis=1)

    return _report(*_sup(w.grid, level, offsets), "scalar-a1")


def dual_weight(w: Field, p: float) -> Field:
    """``sigma = w^{1-p'}``."""
    v = _check_scalar_weight(w)
    return w.replace(v ** (1.0 - conjugate(p)))


def reverse_factorization_scalar(w0: Field, w1: Field, p: float) -> Field:
    """``w0 * w1^{1-p}``."""
    if p <= 1:
        raise DomainError(f"p must be > 1, got {p}")
    a, b = _check_scalar_weight(w0), _check_scalar_weight(w1)
    return w0.replace(a * b ** (1.0 - p))


def reverse_factorization_check(w0: Field, w1: Field, p: float) -> dict:
    """Compare ``[w0 w1^{1-p}]_{A_p}`` with ``[w0]_{A_1} [w1]_{A_1}^{p-1}``."""
    a0, a1 = scalar_a1(w0).value, scalar_a1(w1).value
    lhs = scalar_ap(reverse_factorization_scalar(w0, w1, p), p).value
    rhs = a0 * a1 ** (p - 1.0)
    return {"lhs": lhs, "rhs": rhs, "a1_w0": a0, "a1_w1": a1, "ok": bool(lhs <= rhs * (1 + 1e-12))}


# ---------------------------------------------------------------------------
# matrix weights


def _check_matrix_weight(W: Field) -> np.ndarray:
    if W.kind != "matrix":
        raise DomainError("expected a matrix weight field")
    spd.symmetrize(W.values, "matrix weight")
    return W.values


def _inverse_powers(W: Field, t: float):
    """``W^{-t}`` per cell, clamping tiny eigenvalues (flag returned)."""
    return spd.power(W.values, -t, clamp=True, return_clamped=True, where="matrix weight")


def matrix_a2_tv(W: Field, offsets=None) -> CharacteristicReport:
    """``sup_Q |<W>_Q^{1/2} <W^{-1}>_Q^{1/2}|_op``."""
    Wv = _check_matrix_weight(W)
    Winv, clamped = _inverse_powers(W, 1.0)

    def level(g, k):
        A = spd.power(blocks(Wv, g, k).mean(axis=1), 0.5)
        B = spd.power(blocks(Winv, g, k).mean(axis=1), 0.5)
        return spd.op_norm_fast(A @ B)

    return _report(*_sup(W.grid, level, offsets), "matrix-a2-tv", 2.0, clamped)


def matrix_ap_roudenko(W: Field, p: float, offsets=None) -> CharacteristicReport:
    """``sup_Q avg_x (avg_y |W^{1/p}(x) W^{-1/p}(y)|^{p'})^{p/p'}``."""
    pc = conjugate(p)
    _check_matrix_weight(W)
    Wp = spd.power(W.values, 1.0 / p)
    Wm, clamped = _inverse_powers(W, 1.0 / p)

    def level(g, k):
        inner = spd.pair_op_norms(blocks(Wp, g, k), blocks(Wm, g, k),
                                  lambda n: np.mean(n ** pc, axis=-1))
        return np.mean(inner ** (p / pc), axis=1)

    return _report(*_sup(W.grid, level, offsets), "matrix-ap-roudenko", p, clamped)


def matrix_a1(W: Field, offsets=None) -> CharacteristicReport:
    """``sup_Q max_{x in Q} avg_y |W^{-1}(x) W(y)|_op``."""
    Wv = _check_matrix_weight(W)
    Winv, clamped = _inverse_powers(W, 1.0)

    def level(g, k):
        inner = spd.pair_op_norms(blocks(Winv, g, k), blocks(Wv, g, k), lambda n: n.mean(axis=-1))
        return inner.max(axis=1)

    return _report(*_sup(W.grid, level, offsets), "matrix-a1", None, clamped)


def matrix_characteristic(W: Field, variant: str, p: float = 2.0, offsets=None) -> CharacteristicReport:
    if variant in ("roudenko", "matrix-ap-roudenko"):
        return matrix_ap_roudenko(W, p, offsets)
    if variant in ("tv", "matrix-a2-tv"):
        return matrix_a2_tv(W, offsets)
    if variant in ("a1", "matrix-a1"):
        return matrix_a1(W, offsets)
    raise DomainError(f"unknown matrix variant {variant!r}")


def tv_norm_ap_constant(rho: NormFunction, p: float, test_vectors=None,
                        dirs: DirectionSet | None = None) -> CharacteristicReport:
    """Smallest C with ``<rho*>_{p',Q}(v) <= C (<rho>_{p,Q})^*(v)`` on the tests.

    The dual of the averaged norm is a max over ``dirs``; the ratio is an
    empirical lower estimate of the best constant.
    """
    pc = conjugate(p)
    dirs = dirs or DirectionSet.default(rho.d)
    V = dirs.dirs if test_vectors is None else np.atleast_2d(np.asarray(test_vectors, dtype=float))
    U = dirs.dirs
    rho.check_nondegenerate(dirs)
    r_u = rho.values(U) ** p  # (N, m)
    r_dual = rho.dual_values(V) ** pc  # (N, k)
    proj = np.abs(V @ U.T)  # (k, m)

    def level(g, k):
        avg = blocks(r_u, g, k).mean(axis=1) ** (1.0 / p)  # (cubes, m)
        dual_avg = (proj[None, :, :] / avg[:, None, :]).max(axis=-1)  # (cubes, k)
        num = blocks(r_dual, g, k).mean(axis=1) ** (1.0 / pc)
        return (num / dual_avg).max(axis=1)

    return _report(*_sup(rho.grid, level), "tv-norm-ap", p)


def a1k_characteristic(F: Field) -> CharacteristicReport:
    """``max_{x,u} h_{MF(x)}(u) / h_{F(x)}(u)``."""
    from .operators.maximal import convex_maximal

    if F.kind != "body":
        raise DomainError("expected a body field")
    H = F.values
    if np.any(H <= 0):
        n, k = np.argwhere(H <= 0)[0]
        raise DomainError(f"body at cell {n} is not absorbing (zero support along {F.dirs.dirs[k]})")
    ratio = convex_maximal(F).values / H
    n = int(np.argmax(ratio.max(axis=1)))
    cube = F.grid.cube_of_cell(n, F.grid.depth)
    return CharacteristicReport(float(ratio.max()), "a1-convex", cube)


def a1k_vs_matrix_a1(W: Field, dirs: DirectionSet | None = None) -> dict:
    """Both sides of the convex/matrix A_1 comparison for ``F = W B``."""
    from .convex import ball_field

    fk = a1k_characteristic(ball_field(W, dirs)).value
    fm = matrix_a1(W).value
    return {"a1_convex": fk, "a1_matrix": fm, "ratio": fk / fm, "d": W.d}
