"""Operator-norm estimates and Rubio de Francia iteration (scalar and convex)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import spd
from ..convex import ball_field, field_magnitudes, segment_field
from ..grid import Cube, DomainError, DyadicGrid, Field, lp_norm
from .maximal import christ_goldberg_ellipsoids, christ_goldberg_points, convex_maximal, maximal_scalar


def lp_norm_bodyfield(F: Field, p: float, W: Field | None = None) -> float:
    """``(int |W^{1/p}(x) F(x)|^p dx)^{1/p}`` with ``|K| = sup{|v| : v in K}``."""
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    if F.kind != "body":
        raise DomainError("expected a body field")
    if W is None:
        mags = field_magnitudes(F)
    elif W.kind == "scalar":
        if np.any(W.values <= 0):
            raise DomainError("scalar weight must be positive")
        mags = field_magnitudes(F) * W.values ** (1.0 / p)
    else:
        mags = field_magnitudes(F, spd.power(W.values, 1.0 / p))
    return float(np.sum(mags ** p) * F.grid.cell_measure) ** (1.0 / p)


def _field_norm(f: Field, p: float, weight: Field | None) -> float:
    if f.kind == "body":
        return lp_norm_bodyfield(f, p, weight)
    return lp_norm(f, p, weight)


def _distance_to_origin(grid: DyadicGrid) -> np.ndarray:
    return np.linalg.norm(grid.cell_centers(), axis=1)


def _scalar_tests(grid: DyadicGrid, p: float, weight: Field | None, trials: int, seed: int):
    rng = np.random.default_rng(seed)
    n = grid.n_cells
    yield np.ones(n)
    r = _distance_to_origin(grid)
    sigma = None
    if weight is not None and p > 1:
        sigma = weight.values ** (-1.0 / (p - 1.0))
    for k in range(grid.depth + 1):
        ind = np.zeros(n)
        ind[grid.cube_cells(Cube(k, (0,) * grid.dim))] = 1.0
        yield ind
        if sigma is not None:
            yield ind * sigma
    for gam in np.linspace(0.1, 0.95, 6):
        yield r ** (-gam * grid.dim / p)
        if sigma is not None:
            yield sigma * r ** (-gam * grid.dim / p)
    for _ in range(trials):
        kind = rng.integers(3)
        if kind == 0:
            yield rng.lognormal(0.0, rng.uniform(0.2, 2.0), n)
        elif kind == 1:
            v = np.zeros(n)
            v[rng.choice(n, size=max(1, n // 16), replace=False)] = rng.uniform(0.5, 2.0, max(1, n // 16))
            yield v
        else:
            yield rng.uniform(0.0, 1.0, n) * (sigma if sigma is not None else 1.0)


def scalar_test_fields(grid: DyadicGrid, p: float, weight: Field | None = None, trials: int = 16,
                       seed: int = 0):
    """The scalar test functions used by :func:`operator_norm_estimate`."""
    return _scalar_tests(grid, p, weight, trials, seed)


def _body_tests(grid: DyadicGrid, d: int, p: float, W: Field | None, trials: int, seed: int):
    rng = np.random.default_rng(seed)
    n = grid.n_cells
    eye = Field(grid, np.broadcast_to(np.eye(d), (n, d, d)), "matrix")
    dual = None
    if W is not None and p > 1:
        dual = Field(grid, spd.power(W.values, -1.0 / (p - 1.0), clamp=True), "matrix")
    yield ball_field(eye)
    for k in range(grid.depth + 1):
        ind = np.zeros(n)
        ind[grid.cube_cells(Cube(k, (0,) * grid.dim))] = 1.0
        yield ball_field(eye.replace(eye.values * ind[:, None, None]))
        if dual is not None:
            yield ball_field(dual.replace(dual.values * ind[:, None, None]))
    for _ in range(trials):
        if rng.integers(2) == 0:
            yield segment_field(Field(grid, rng.standard_normal((n, d)) * rng.lognormal(0, 1, (n, 1)), "vector"))
        else:
            scale = rng.lognormal(0, 1, (n, 1, 1))
            if dual is not None and rng.integers(2) == 0:
                A = dual.values * scale
            else:
                A = spd.random_spd(rng, d, 10.0, n) * scale
            yield ball_field(Field(grid, A, "matrix"))


def operator_norm_estimate(op: Callable[[Field], Field], p: float, weight: Field | None = None,
                           trials: int = 16, seed: int = 0, grid: DyadicGrid | None = None,
                           d: int | None = None) -> float:
    """Largest observed ``||op f|| / ||f||`` over deterministic test fields.

    This is a lower bound for the operator norm on ``L^p(weight)``.  A
    matrix weight (or ``d`` given) switches to body-valued test fields.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    grid = grid or (weight.grid if weight is not None else None)
    if grid is None:
        raise DomainError("need a grid or a weight")
    bodies = d is not None or (weight is not None and weight.kind == "matrix")
    if bodies:
        d = d or weight.d
        tests = _body_tests(grid, d, p, weight, trials, seed)
    else:
        tests = (Field(grid, v) for v in _scalar_tests(grid, p, weight, trials, seed))
    best = 0.0
    for f in tests:
        den = _field_norm(f, p, weight)
        if not den > 0 or not np.isfinite(den):
            continue
        best = max(best, _field_norm(op(f), p, weight) / den)
    return best


def christ_goldberg_norm_estimate(W: Field, r: float = 2.0, p: float = 2.0, trials: int = 8,
                                  seed: int = 0) -> float:
    """Largest observed ``||M_W F||_{L^p} / ||F||_{L^p_K}`` (a lower bound for the norm).

    Test fields are ellipsoids (the unit ball, ``W^{1/r}`` on the first
    origin subcube, ``trials`` random shapes) and ``trials`` random segments.
    """
    grid, d, n = W.grid, W.d, W.grid.n_cells
    rng = np.random.default_rng(seed)
    cm = grid.cell_measure
    ind = np.zeros(n)
    ind[grid.cube_cells(Cube(min(1, grid.depth), (0,) * grid.dim))] = 1.0
    tests = [np.broadcast_to(np.eye(d), (n, d, d)).copy(),
             spd.power(W.values, 1.0 / r) * ind[:, None, None]]
    for _ in range(trials):
        tests.append(spd.random_spd(rng, d, 10.0, n) * rng.lognormal(0, 1, (n, 1, 1)))
    best = 0.0
    for E in tests:
        den = float(np.sum(spd.op_norm_fast(E) ** p) * cm) ** (1 / p)
        if den > 0:
            M = christ_goldberg_ellipsoids(W, Field(grid, E, "matrix"), r).values
            best = max(best, float(np.sum(M ** p) * cm) ** (1 / p) / den)
    for _ in range(trials):
        P = rng.standard_normal((n, 1, d)) * rng.lognormal(0, 1, (n, 1, 1))
        den = float(np.sum(np.linalg.norm(P[:, 0], axis=1) ** p) * cm) ** (1 / p)
        M = christ_goldberg_points(W, P, r).values
        best = max(best, float(np.sum(M ** p) * cm) ** (1 / p) / den)
    return best


@dataclass(frozen=True, eq=False)
class IterationResult:
    field: Field
    a: float
    a_estimate: float
    realized_ratio: float
    K: int
    input_norm: float
    output_norm: float
    tail_bound: float

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "a_estimate": self.a_estimate,
            "realized_ratio": self.realized_ratio,
            "K": self.K,
            "input_norm": self.input_norm,
            "output_norm": self.output_norm,
            "tail_bound": self.tail_bound,
        }


def _iterate(h: Field, op, norm, K: int, a_est: float) -> IterationResult:
    if K < 1:
        raise DomainError("truncation order K must be >= 1")
    terms = [h.values]
    cur = h
    for _ in range(K + 1):
        cur = op(cur)
        terms.append(cur.values)
    norms = [norm(h.replace(t)) for t in terms]
    ratios = [norms[k + 1] / norms[k] for k in range(K + 1) if norms[k] > 0]
    realized = max(ratios, default=0.0)
    # any constant above every realized ratio keeps the series bounds valid
    a = max(a_est, realized)
    if not a > 0:
        a = 1.0
    out = np.zeros_like(h.values)
    for k in range(K, -1, -1):
        out = out / (2.0 * a) + terms[k]
    R = h.replace(out)
    return IterationResult(R, a, a_est, realized, K, norms[0], norm(R), 2.0 ** (-K) * norms[0])


def rubio_iteration_scalar(h: Field, w: Field | None, p: float, K: int = 40, a: float | None = None,
                           op: Callable[[Field], Field] = maximal_scalar) -> IterationResult:
    """``R h = sum_{k<=K} M^k h / (2a)^k`` on ``L^p(w)``."""
    if p <= 1:
        raise DomainError(f"p must be > 1, got {p}")
    if h.kind != "scalar" or np.any(h.values < 0):
        raise DomainError("h must be a nonnegative scalar field")
    if a is None:
        a = operator_norm_estimate(op, p, w, grid=h.grid)
    return _iterate(h, op, lambda f: lp_norm(f, p, w), K, a)


def rubio_iteration_convex(F: Field, W: Field | None, p: float, K: int = 40, a: float | None = None) -> IterationResult:
    """Minkowski series ``sum_{k<=K} M^k F / (2a)^k`` on ``L^p_K(W)``."""
    if p <= 1:
        raise DomainError(f"p must be > 1, got {p}")
    if F.kind != "body":
        raise DomainError("expected a body field")
    if a is None:
        a = operator_norm_estimate(convex_maximal, p, W, grid=F.grid, d=F.d)
    return _iterate(F, convex_maximal, lambda G: lp_norm_bodyfield(G, p, W), K, a)
