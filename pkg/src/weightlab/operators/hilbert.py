"""Truncated Hilbert transform on 1D dyadic grids.

Kernel ``K(x, y) = 1/(x - y)``.  Cell contributions are integrated exactly
with the antiderivative ``-log|x - y|``; evaluation points are cell centres
(or arbitrary points in extended-domain mode).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grid import DomainError, Field


@dataclass(frozen=True)
class TruncatedKernel:
    """Size/regularity constants of the kernel, kept for reporting."""

    C: float = 1.0
    delta: float = 1.0
    n: int = 1

    def __call__(self, x, y):
        return 1.0 / (np.asarray(x) - np.asarray(y))


def _check_1d(f: Field):
    if f.grid.dim != 1 or f.kind != "scalar":
        raise DomainError("the Hilbert transform needs a scalar field on a 1D grid")


def _segment_integral(x: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``int_a^b dy / (x - y)`` for intervals not containing x."""
    return np.log(np.abs(x - a)) - np.log(np.abs(x - b))


def hilbert_truncated(f: Field, x: int | None = None, eps: float = 0.0, *, point: float | None = None) -> float:
    """``T_eps f`` at the centre of cell ``x`` or at an arbitrary ``point``."""
    _check_1d(f)
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    h = f.grid.cell_measure
    n = f.grid.n_cells
    if point is None:
        if x is None or not 0 <= x < n:
            raise DomainError("need a cell index or a point")
        point = (x + 0.5) * h
    a = np.arange(n) * h
    b = a + h
    # a cell containing the point keeps only its principal value, which the
    # symmetric part around the point cancels
    own = (a < point) & (point < b) & (eps < np.minimum(point - a, b - point))
    # parts of the other cells left of point - eps and right of point + eps
    lo_a, lo_b = a, np.minimum(b, point - eps)
    hi_a, hi_b = np.maximum(a, point + eps), b
    left = (lo_b > lo_a) & ~own
    right = (hi_b > hi_a) & ~own
    total = np.sum(f.values[own] * _segment_integral(point, a[own], b[own]))
    total += np.sum(f.values[left] * _segment_integral(point, lo_a[left], lo_b[left]))
    total += np.sum(f.values[right] * _segment_integral(point, hi_a[right], hi_b[right]))
    return float(total)


def _cell_kernel(m: np.ndarray) -> np.ndarray:
    """Integral of 1/(x_i - y) over cell i - m, in grid-free units."""
    am = np.abs(m).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.sign(m) * np.log((am + 0.5) / (am - 0.5))
    return np.where(m == 0, 0.0, g)


def hilbert_levels(f: Field) -> np.ndarray:
    """``T_eps f`` at every cell centre for ``eps = (k + 1/2) h``, k = 0..N: shape (N+1, N)."""
    _check_1d(f)
    n = f.grid.n_cells
    v = f.values
    i = np.arange(n)
    m = np.arange(1, n)
    # pair offsets +m and -m: c[i, m-1] = g(m) f(i-m) + g(-m) f(i+m)
    g = _cell_kernel(m)
    left = i[:, None] - m[None, :]
    right = i[:, None] + m[None, :]
    fl = np.where(left >= 0, v[np.clip(left, 0, n - 1)], 0.0)
    fr = np.where(right < n, v[np.clip(right, 0, n - 1)], 0.0)
    c = g[None, :] * (fl - fr)
    tails = np.cumsum(c[:, ::-1], axis=1)[:, ::-1]  # tails[:, k] = sum_{m > k}
    out = np.zeros((n + 1, n))
    out[: n - 1] = tails.T
    return out


def hilbert_maximal(f: Field) -> Field:
    """``T* f = max_eps |T_eps f|`` over cell-boundary truncations."""
    return f.replace(np.abs(hilbert_levels(f)).max(axis=0))


def size_bound_holds(f: Field, x: int, eps: float) -> bool:
    """``|T_eps f(x)| <= ||f||_1 / eps``."""
    lhs = abs(hilbert_truncated(f, x, eps))
    l1 = np.sum(np.abs(f.values)) * f.grid.cell_measure
    return lhs <= l1 / eps * (1 + 1e-12)
