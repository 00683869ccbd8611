"""Origin-symmetric convex bodies in R^d via support functions.

A body is a segment ``[-v, v]``, an ellipsoid ``A B`` (``A`` SPD, ``B`` the
unit ball) or a *sampled* body.  A sampled body stores support values
``h_i`` on a fixed :class:`DirectionSet` and denotes the polytope
``{x : |<x, u_i>| <= h_i}``; supports, vertices and magnitudes are computed
exactly for that polytope.  Sampled geometry is therefore an outer
approximation of whatever body produced the samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property, lru_cache
from math import gamma, pi, sqrt

import numpy as np
from scipy.spatial import ConvexHull, HalfspaceIntersection

from . import spd
from .grid import Cube, DomainError, Field

DEFAULT_M = {1: 1, 2: 180, 3: 512}
JOHN_MAX_ITER = 10_000
JOHN_TOL = 1e-10
JOHN_STALL = 1_000
JOHN_ACCEPT = 1e-6


class NonAbsorbingError(DomainError):
    pass


class JohnConvergenceError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class DirectionSet:
    """Antipodally reduced unit directions; in 2D sorted by angle in [0, pi)."""

    dirs: np.ndarray

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.dirs, dtype=float))
        if np.any(np.abs(np.linalg.norm(u, axis=1) - 1.0) > 1e-14):
            raise DomainError("directions must be unit vectors")
        u.setflags(write=False)
        object.__setattr__(self, "dirs", u)

    @property
    def d(self) -> int:
        return self.dirs.shape[1]

    def __len__(self) -> int:
        return self.dirs.shape[0]

    @staticmethod
    @lru_cache(maxsize=None)
    def default(d: int, m: int | None = None) -> "DirectionSet":
        m = DEFAULT_M.get(d) if m is None else m
        if d == 1:
            return DirectionSet(np.ones((1, 1)))
        if d == 2:
            t = pi * np.arange(m) / m
            return DirectionSet(np.stack([np.cos(t), np.sin(t)], axis=1))
        if d == 3:
            # Fibonacci points on the open upper hemisphere
            i = np.arange(m)
            z = 1.0 - (i + 0.5) / m
            r = np.sqrt(1.0 - z * z)
            phi = i * pi * (3.0 - sqrt(5.0))
            u = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
            return DirectionSet(u / np.linalg.norm(u, axis=1, keepdims=True))
        raise DomainError(f"no default direction set for d={d}")


# ---------------------------------------------------------------------------
# polytope helpers for sampled bodies


def _polygon_vertices(h: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vertices of ``{|<x,u_i>| <= h_i}`` in 2D, for stacked ``h`` (..., m).

    Returns half of the vertex set, shape (..., m, 2); the other half is the
    negation.  Exact whenever every constraint touches the polytope.
    """
    m = u.shape[0]
    if m == 1:
        raise DomainError("a 2D polygon needs at least two directions")
    a = u
    b = np.concatenate([u[1:], -u[:1]], axis=0)
    hb = np.concatenate([h[..., 1:], h[..., :1]], axis=-1)
    det = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    vx = (h * b[:, 1] - a[:, 1] * hb) / det
    vy = (a[:, 0] * hb - h * b[:, 0]) / det
    return np.stack([vx, vy], axis=-1)


def _halfspace_vertices(h: np.ndarray, u: np.ndarray) -> np.ndarray:
    if np.min(h) <= 0:
        raise NonAbsorbingError("sampled body is not absorbing")
    hs = np.concatenate([np.concatenate([u, -h[:, None]], axis=1),
                         np.concatenate([-u, -h[:, None]], axis=1)])
    return HalfspaceIntersection(hs, np.zeros(u.shape[1])).intersections


def _slack_cells(h: np.ndarray, u: np.ndarray, V: np.ndarray) -> np.ndarray:
    # every edge must run counterclockwise, otherwise a constraint is slack
    t = np.stack([-u[:, 1], u[:, 0]], axis=1)
    prev = np.concatenate([-V[..., -1:, :], V[..., :-1, :]], axis=-2)
    edge = np.einsum("...ki,ki->...k", V - prev, t)
    return np.any(edge < -1e-9 * np.maximum(h.max(axis=-1, keepdims=True), 1e-300), axis=-1)


def tight_supports(h: np.ndarray, dirs: DirectionSet) -> np.ndarray:
    """Supports of the sampled polytopes at their own directions, shape like ``h``.

    Equal to ``h`` except where a constraint does not touch the polytope.
    """
    h = np.asarray(h, dtype=float)
    flat = h.reshape(-1, h.shape[-1])
    out = flat.copy()
    U = dirs.dirs
    if dirs.d == 2:
        bad = np.flatnonzero(_slack_cells(flat, U, _polygon_vertices(flat, U)))
    elif dirs.d == 1:
        bad = np.array([], dtype=int)
    else:
        bad = np.arange(len(flat))
    for n in bad:
        V = _halfspace_vertices(flat[n], U)
        out[n] = np.minimum(np.abs(V @ U.T).max(axis=0), flat[n])
    return out.reshape(h.shape)


def sampled_vertices(h: np.ndarray, dirs: DirectionSet) -> np.ndarray:
    """Vertices (up to sign) of sampled bodies; ``h`` is (m,) or (N, m)."""
    h = np.asarray(h, dtype=float)
    if dirs.d == 1:
        return h[..., :, None]
    if dirs.d == 2:
        u = dirs.dirs
        V = _polygon_vertices(h, u)
        bad = _slack_cells(h, u, V)
        if not np.any(bad):
            return V
        if h.ndim == 1:
            return _halfspace_vertices(h, u)
        full = np.concatenate([V, -V], axis=-2)
        for n in np.flatnonzero(bad):
            w = _halfspace_vertices(h[n], u)
            full[n] = np.concatenate([w, np.repeat(w[:1], full.shape[1] - len(w), axis=0)])
        return full
    if h.ndim == 1:
        return _halfspace_vertices(h, dirs.dirs)
    # per-cell vertex counts differ in d >= 3; pad by repeating a vertex
    vs = [_halfspace_vertices(hi, dirs.dirs) for hi in h]
    k = max(len(v) for v in vs)
    return np.stack([np.concatenate([v, np.repeat(v[:1], k - len(v), axis=0)]) for v in vs])


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConvexBody:
    kind: str
    data: np.ndarray
    dirs: DirectionSet | None = dc_field(default=None, repr=False)

    def __post_init__(self):
        a = np.array(self.data, dtype=float)
        if self.kind == "segment":
            a = a.reshape(-1)
        elif self.kind == "ellipsoid":
            a = spd.symmetrize(a, "ellipsoid matrix")
            spd.power(a, 1.0)  # PSD check
        elif self.kind == "sampled":
            if self.dirs is None or a.shape != (len(self.dirs),):
                raise DomainError("sampled body needs one support value per direction")
            if np.any(a < 0):
                raise DomainError("support values must be nonnegative")
        else:
            raise DomainError(f"unknown body kind {self.kind!r}")
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def d(self) -> int:
        return self.dirs.d if self.kind == "sampled" else self.data.shape[0]

    @cached_property
    def vertices(self) -> np.ndarray:
        if self.kind != "sampled":
            raise DomainError("only sampled bodies have a vertex list")
        return sampled_vertices(self.data, self.dirs)

    def support_many(self, U) -> np.ndarray:
        """Support function at the rows of ``U`` (any lengths)."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        if U.shape[1] != self.d:
            raise DomainError("direction dimension mismatch")
        if self.kind == "segment":
            return np.abs(U @ self.data)
        if self.kind == "ellipsoid":
            return np.linalg.norm(U @ self.data, axis=1)
        if self.d >= 3 and np.min(self.data) <= 0:
            return _lp_support(self.data, self.dirs.dirs, U)
        return np.abs(U @ self.vertices.T).max(axis=1)

    def support_on(self, dirs: DirectionSet) -> np.ndarray:
        if self.kind == "sampled" and dirs is self.dirs:
            return self.data
        return self.support_many(dirs.dirs)

    def as_sampled(self, dirs: DirectionSet | None = None) -> "ConvexBody":
        dirs = dirs or (self.dirs if self.kind == "sampled" else DirectionSet.default(self.d))
        return sampled(self.support_on(dirs), dirs)


def _lp_support(h, u, U):
    from scipy.optimize import linprog

    A = np.concatenate([u, -u])
    b = np.concatenate([h, h])
    out = []
    for w in U:
        res = linprog(-w, A_ub=A, b_ub=b, bounds=[(None, None)] * u.shape[1])
        out.append(-res.fun)
    return np.array(out)


def segment(v) -> ConvexBody:
    return ConvexBody("segment", v)


def ellipsoid(A) -> ConvexBody:
    return ConvexBody("ellipsoid", A)


def sampled(h, dirs: DirectionSet) -> ConvexBody:
    return ConvexBody("sampled", h, dirs)


def unit_ball(d: int) -> ConvexBody:
    return ellipsoid(np.eye(d))


def zero_body(d: int) -> ConvexBody:
    return segment(np.zeros(d))


def _unit(u):
    u = np.asarray(u, dtype=float).reshape(-1)
    if abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise DomainError(f"direction must be a unit vector, |u| = {np.linalg.norm(u)}")
    return u


def support(K: ConvexBody, u) -> float:
    u = _unit(u)
    return float(K.support_many(u[None])[0])


def _check_same_d(K, L):
    if K.d != L.d:
        raise DomainError(f"dimension mismatch: {K.d} vs {L.d}")


def _shared_dirs(K, L) -> DirectionSet:
    for B in (K, L):
        if B.kind == "sampled":
            return B.dirs
    return DirectionSet.default(K.d)


def _collinear_factor(v, w):
    """c with w = c v, or None."""
    nv = np.linalg.norm(v)
    if nv == 0:
        return None
    c = float(v @ w) / nv ** 2
    return c if np.linalg.norm(w - c * v) <= 1e-12 * max(nv, np.linalg.norm(w)) else None


def _ellipsoid_factor(A, B):
    na = np.linalg.norm(A)
    c = float(np.sum(A * B)) / na ** 2
    return c if c >= 0 and np.linalg.norm(B - c * A) <= 1e-12 * max(na, np.linalg.norm(B)) else None


def _is_zero(K):
    return K.kind == "segment" and not np.any(K.data)


def minkowski_sum(K: ConvexBody, L: ConvexBody) -> ConvexBody:
    _check_same_d(K, L)
    if _is_zero(K):
        return L
    if _is_zero(L):
        return K
    if K.kind == L.kind == "segment":
        c = _collinear_factor(K.data, L.data)
        if c is not None:
            return segment((1.0 + abs(c)) * K.data)
    if K.kind == L.kind == "ellipsoid":
        c = _ellipsoid_factor(K.data, L.data)
        if c is not None:
            return ellipsoid((1.0 + c) * K.data)
    dirs = _shared_dirs(K, L)
    return sampled(K.support_on(dirs) + L.support_on(dirs), dirs)


def scale(alpha: float, K: ConvexBody) -> ConvexBody:
    if alpha < 0:
        raise DomainError("scale factor must be nonnegative")
    return ConvexBody(K.kind, alpha * K.data, K.dirs)


def hull_union(K: ConvexBody, L: ConvexBody) -> ConvexBody:
    _check_same_d(K, L)
    if K is L:
        return K
    if _is_zero(L):
        return K
    if _is_zero(K):
        return L
    if K.kind == L.kind == "segment":
        c = _collinear_factor(K.data, L.data)
        if c is not None:
            return K if abs(c) <= 1.0 else L
    if K.kind == L.kind == "ellipsoid":
        c = _ellipsoid_factor(K.data, L.data)
        if c is not None:
            return K if c <= 1.0 else L
    if K.kind == L.kind == "sampled" and K.dirs is L.dirs and np.array_equal(K.data, L.data):
        return K
    dirs = _shared_dirs(K, L)
    return sampled(np.maximum(K.support_on(dirs), L.support_on(dirs)), dirs)


def contains(K: ConvexBody, L: ConvexBody, slack: float = 0.0) -> bool:
    """``L`` inside ``K`` up to relative ``slack``, tested on sampled directions."""
    _check_same_d(K, L)
    U = [B.dirs.dirs for B in (K, L) if B.kind == "sampled"]
    U = np.concatenate(U) if U else DirectionSet.default(K.d).dirs
    hk, hl = K.support_many(U), L.support_many(U)
    tiny = 1e-14 * max(float(hk.max(initial=0.0)), float(hl.max(initial=0.0)), 1e-300)
    if not np.all(hl <= hk * (1.0 + slack) + tiny):
        return False
    # a polytope sits in a nondegenerate ellipsoid iff its vertices do
    if K.kind == "ellipsoid" and L.kind != "ellipsoid" and np.linalg.matrix_rank(K.data) == K.d:
        try:
            P = L.vertices if L.kind == "sampled" else L.data[None, :]
        except NonAbsorbingError:
            return True
        r = np.linalg.norm(np.linalg.solve(K.data, P.T), axis=0)
        return bool(np.all(r <= 1.0 + slack + 1e-14))
    return True


def magnitude(K: ConvexBody) -> float:
    """``sup{|v| : v in K}``."""
    if K.kind == "segment":
        return float(np.linalg.norm(K.data))
    if K.kind == "ellipsoid":
        return float(spd.op_norm(K.data))
    if K.d >= 3 and np.min(K.data) <= 0:
        return float(K.data.max())
    return float(np.linalg.norm(K.vertices, axis=-1).max())


def apply_matrix(A, K: ConvexBody) -> ConvexBody:
    """Image ``A K`` of a body under a symmetric matrix."""
    A = spd.symmetrize(A, "apply_matrix")
    if A.shape[0] != K.d:
        raise DomainError("matrix and body dimensions differ")
    if K.kind == "segment":
        return segment(A @ K.data)
    if K.kind == "ellipsoid":
        # A B_K B = (A B_K^2 A)^{1/2} B by polar decomposition
        M = A @ K.data
        return ellipsoid(spd.power(M @ M.T, 0.5))
    U = K.dirs.dirs
    return sampled(K.support_many(U @ A), K.dirs)


# ---------------------------------------------------------------------------
# John ellipsoid


def _newton_polish(P, lam, iters=30):
    """Newton ascent of log det restricted to the support of ``lam``."""
    for _ in range(iters):
        idx = np.flatnonzero(lam > 0)
        Q, l = P[idx], lam[idx]
        S = (Q.T * l) @ Q
        G = Q @ np.linalg.solve(S, Q.T)
        g = np.diag(G).copy()
        s = len(idx)
        K = np.zeros((s + 1, s + 1))
        K[:s, :s] = G * G
        K[:s, s] = K[s, :s] = 1.0
        step = np.linalg.lstsq(K, np.append(g, 0.0), rcond=None)[0][:s]
        if np.abs(step).max() <= 1e-15:
            break
        neg = step < 0
        amax = np.min(-l[neg] / step[neg]) if np.any(neg) else np.inf
        alpha = min(1.0, amax)
        f0 = np.linalg.slogdet(S)[1]
        while alpha > 1e-12:
            trial = np.maximum(l + alpha * step, 0.0)
            if alpha == amax:
                trial[np.argmin(np.where(neg, -l / np.where(neg, step, 1.0), np.inf))] = 0.0
            sign, f1 = np.linalg.slogdet((Q.T * trial) @ Q)
            if sign > 0 and f1 >= f0:
                break
            alpha *= 0.5
        else:
            break
        lam = lam.copy()
        lam[idx] = trial / trial.sum()
        if f1 - f0 <= 1e-15 * max(1.0, abs(f0)):
            break
    return lam


def _john_weights(P: np.ndarray, tol: float, max_iter: int, lam: np.ndarray | None = None):
    """Optimal design weights for ``max log det sum_i lam_i p_i p_i^T``.

    Frank-Wolfe with away steps on the simplex (Khachiyan / Todd-Yildirim),
    interleaved with Newton polishing on the current support.
    ``P^T diag(lam) P`` then determines the maximal inscribed ellipsoid of
    ``{|<p_i, x>| <= 1}``.  Returns (lam, residual) with residual
    ``max_i p_i^T S^{-1} p_i / d - 1``.
    """
    m, d = P.shape
    lam = np.full(m, 1.0 / m) if lam is None else lam
    it = 0
    while True:
        S = (P.T * lam) @ P
        Sinv = np.linalg.inv(S)
        kap = np.einsum("ij,jk,ik->i", P, Sinv, P)
        resid = kap.max() / d - 1.0
        if resid <= tol or it >= max_iter:
            return lam, resid
        for _ in range(32):
            it += 1
            j = int(np.argmax(kap))
            if kap[j] / d - 1.0 <= tol:
                break
            act = lam > 0
            i = int(np.argmin(np.where(act, kap, np.inf)))
            if kap[j] / d - 1.0 >= 1.0 - kap[i] / d:
                k, beta = j, (kap[j] - d) / (d * (kap[j] - 1.0))
            else:
                k = i
                cap = -lam[i] / (1.0 - lam[i]) if lam[i] < 1.0 else -np.inf
                beta = (kap[i] - d) / (d * (kap[i] - 1.0)) if kap[i] > 1.0 else cap
                beta = max(beta, cap)
            # rank-one update of S^{-1} for S' = (1-beta) S + beta p p^T
            p = P[k]
            Sp = Sinv @ p
            r = beta / (1.0 - beta)
            denom = 1.0 + r * kap[k]
            Sinv = (Sinv - r * np.outer(Sp, Sp) / denom) / (1.0 - beta)
            kap = (kap - r * (P @ Sp) ** 2 / denom) / (1.0 - beta)
            lam = (1.0 - beta) * lam
            lam[k] += beta
            if lam[k] < 1e-15:
                lam[k] = 0.0
        if np.count_nonzero(lam) <= 8 * d:
            lam = _newton_polish(P, lam / lam.sum())


def _design_residual(P: np.ndarray, lam: np.ndarray) -> float:
    kap = np.einsum("ij,jk,ik->i", P, np.linalg.inv((P.T * lam) @ P), P)
    return float(kap.max() / P.shape[1] - 1.0)


def _barrier_weights(P: np.ndarray, gap: float = 1e-6, max_newton: int = 2000) -> np.ndarray:
    """Design weights from the log-barrier central path of ``max log det X``.

    Minimizes ``-t log det X - sum_i log(1 - p_i^T X p_i)`` over symmetric
    ``X`` by damped Newton steps, raising ``t`` tenfold until ``m / t <= gap``.
    At a central point ``lam_i ~ 1 / (t s_i)`` is a near-optimal design.
    """
    m, d = P.shape
    iu = np.triu_indices(d)
    k = len(iu[0])
    off = iu[0] != iu[1]
    A = P[:, iu[0]] * P[:, iu[1]] * np.where(off, 2.0, 1.0)  # p^T X p = A @ x
    B = np.zeros((k, d, d))
    B[np.arange(k), iu[0], iu[1]] = 1.0
    B[np.arange(k), iu[1], iu[0]] = 1.0

    def obj(x, t):
        s = 1.0 - A @ x
        if np.any(s <= 0):
            return np.inf
        try:
            L = np.linalg.cholesky(np.einsum("k,kij->ij", x, B))
        except np.linalg.LinAlgError:
            return np.inf
        return -2.0 * t * np.sum(np.log(np.diag(L))) - np.sum(np.log(s))

    x = np.where(off, 0.0, 0.5 / np.max(np.sum(P * P, axis=1)))
    t, steps = 1.0, 0
    while True:
        for _ in range(60):
            steps += 1
            XB = np.einsum("ij,kjl->kil", np.linalg.inv(np.einsum("k,kij->ij", x, B)), B)
            s = 1.0 - A @ x
            g = -t * np.einsum("kii->k", XB) + A.T @ (1.0 / s)
            As = A / s[:, None]
            H = t * np.einsum("kij,lji->kl", XB, XB) + As.T @ As
            dx = -np.linalg.solve(H, g)
            dec = -g @ dx
            if dec < 1e-12:
                break
            f0, a = obj(x, t), 1.0
            while obj(x + a * dx, t) > f0 - 0.25 * a * dec:
                a *= 0.5
                if a < 1e-12:
                    break
            else:
                x = x + a * dx
                continue
            break
        if m / t <= gap or steps >= max_newton:
            break
        t *= 10.0
    lam = 1.0 / (t * (1.0 - A @ x))
    return lam / lam.sum()


def john_from_constraints(normals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Maximal-volume ellipsoid ``A B`` in ``{|<n_i, x>| <= c_i}``; returns ``A``."""
    normals = np.asarray(normals, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    if np.any(offsets <= 0):
        raise NonAbsorbingError(f"body not absorbing: zero support along {normals[np.argmin(offsets)]}")
    d = normals.shape[1]
    P = normals / offsets[:, None]
    if d == 1:
        return np.array([[1.0 / np.abs(P).max()]])
    if np.linalg.matrix_rank(P) < d:
        raise NonAbsorbingError("constraints do not bound the body")
    lam, resid = _john_weights(P, JOHN_TOL, JOHN_STALL)
    if resid > JOHN_TOL:
        # nearly elliptic bodies keep every constraint almost active and
        # first-order steps crawl; the central path does not
        lb = _barrier_weights(P)
        rb = _design_residual(P, lb)
        if rb < resid:
            lam, resid = lb, rb
        if resid > JOHN_ACCEPT:
            lam, resid = _john_weights(P, JOHN_TOL, JOHN_MAX_ITER - JOHN_STALL, lam)
    if resid > JOHN_ACCEPT:
        raise JohnConvergenceError(f"John ellipsoid not converged: residual {resid:.3e}")
    S = (P.T * lam) @ P
    X = np.linalg.inv(S) / d
    # scale down to exact feasibility
    X /= max(1.0, float(np.einsum("ij,jk,ik->i", P, X, P).max()))
    return spd.power(X, 0.5)


def john_ellipsoid(K: ConvexBody) -> np.ndarray:
    """Matrix ``A`` with ``A B`` the maximal-volume ellipsoid inside ``K``.

    For symmetric bodies ``K`` also lies inside ``sqrt(d) A B``.
    """
    if K.kind == "ellipsoid":
        spd.check_pd(K.data, "john_ellipsoid")
        return K.data.copy()
    if K.kind == "segment":
        if K.d == 1 and np.any(K.data):
            return np.abs(K.data).reshape(1, 1)
        raise NonAbsorbingError("a segment is not absorbing for d >= 2")
    return john_from_constraints(K.dirs.dirs, K.data)


# ---------------------------------------------------------------------------
# norm functions


class NormFunction:
    """A norm ``rho(x, .)`` on R^d for every cell ``x`` of a grid."""

    def __init__(self, grid, d, values, dual=None, name="norm"):
        self.grid = grid
        self.d = d
        self._values = values
        self._dual = dual
        self.name = name

    @classmethod
    def from_matrix_field(cls, W: Field) -> "NormFunction":
        """``rho_W(x, v) = |W(x) v|``."""
        if W.kind != "matrix":
            raise DomainError("expected a matrix field")
        Wv = W.values
        Winv = None

        def values(V):
            return np.linalg.norm(np.einsum("nij,kj->nki", Wv, V), axis=-1)

        def dual(V):
            nonlocal Winv
            if Winv is None:
                spd.check_pd(Wv, "norm function cell")
                Winv = spd.power(Wv, -1.0)
            return np.linalg.norm(np.einsum("nij,kj->nki", Winv, V), axis=-1)

        return cls(W.grid, W.d, values, dual, "matrix")

    @classmethod
    def from_scalar_weight(cls, w: Field) -> "NormFunction":
        W = Field(w.grid, w.values[:, None, None], "matrix")
        return cls.from_matrix_field(W)

    @classmethod
    def from_body_field(cls, F: Field) -> "NormFunction":
        """Minkowski gauge of each cell's body."""
        if F.kind != "body":
            raise DomainError("expected a body field")
        H, U = F.values, F.dirs.dirs

        def values(V):
            proj = np.abs(V @ U.T)  # (k, m)
            with np.errstate(divide="ignore", invalid="ignore"):
                r = proj[None, :, :] / H[:, None, :]
            r = np.where(proj[None] == 0, 0.0, r)
            return r.max(axis=-1)

        verts = None

        def dual(V):
            nonlocal verts
            if verts is None:
                verts = sampled_vertices(H, F.dirs)
            return np.abs(np.einsum("nmi,ki->nkm", verts, V)).max(axis=-1)

        return cls(F.grid, F.d, values, dual, "gauge")

    def values(self, V, cells=None) -> np.ndarray:
        """rho(x, v) for every cell and every row of ``V``: shape (cells, k)."""
        V = np.atleast_2d(np.asarray(V, dtype=float))
        out = self._values(V)
        return out if cells is None else out[cells]

    def __call__(self, v, cells=None) -> np.ndarray:
        return self.values(np.asarray(v, dtype=float)[None], cells)[:, 0]

    def dual_values(self, V, cells=None, dirs: DirectionSet | None = None) -> np.ndarray:
        V = np.atleast_2d(np.asarray(V, dtype=float))
        if self._dual is not None and dirs is None:
            out = self._dual(V)
        else:
            out = sampled_dual(self, V, dirs)
        return out if cells is None else out[cells]

    def check_nondegenerate(self, dirs: DirectionSet | None = None) -> None:
        dirs = dirs or DirectionSet.default(self.d)
        r = self.values(dirs.dirs)
        if np.any(r <= 0):
            n, k = np.argwhere(r <= 0)[0]
            raise DomainError(f"degenerate norm at cell {n} along direction {dirs.dirs[k]}")


def sampled_dual(rho: NormFunction, V, dirs: DirectionSet | None = None) -> np.ndarray:
    """``max_u |<v,u>| / rho(x,u)`` over sampled unit directions ``u``."""
    dirs = dirs or DirectionSet.default(rho.d)
    r = rho.values(dirs.dirs)  # (N, m)
    if np.any(r <= 0):
        n, k = np.argwhere(r <= 0)[0]
        raise DomainError(f"degenerate norm at cell {n} along direction {dirs.dirs[k]}")
    proj = np.abs(np.atleast_2d(V) @ dirs.dirs.T)  # (k, m)
    return (proj[None] / r[:, None, :]).max(axis=-1)


def dual_norm(rho: NormFunction, x: int, v) -> float:
    return float(rho.dual_values(v, cells=[x])[0, 0])


def p_average_norm(rho: NormFunction, Q: Cube, p: float, v) -> float:
    """``(avg_Q rho(x, v)^p)^{1/p}``."""
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    cells = rho.grid.cube_cells(Q)
    r = rho(v, cells)
    return float(np.mean(r ** p) ** (1.0 / p))


def reducing_matrix(W: Field, Q: Cube, p: float) -> np.ndarray:
    """John matrix of the unit ball of ``v -> (avg_Q |W(x) v|^p)^{1/p}``.

    For ``p = 2`` that ball is exactly the ellipsoid ``(avg_Q W^2)^{-1/2} B``.
    Otherwise the ball is approximated from inside by the convex hull of its
    boundary points along the default directions.
    """
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    if W.kind != "matrix":
        raise DomainError("expected a matrix field")
    cells = W.grid.cube_cells(Q)
    Wq = W.values[cells]
    spd.check_pd(Wq, f"reducing_matrix cube {Q}")
    d = W.d
    if np.all(Wq == Wq[0]):
        return spd.power(Wq[0], -1.0)
    if p == 2:
        return spd.power(np.mean(Wq @ Wq, axis=0), -0.5)
    if d == 1:
        return np.array([[np.mean(np.abs(Wq[:, 0, 0]) ** p) ** (-1.0 / p)]])
    U = DirectionSet.default(d).dirs
    r = np.mean(np.linalg.norm(np.einsum("nij,kj->nki", Wq, U), axis=-1) ** p, axis=0) ** (1.0 / p)
    pts = U / r[:, None]
    hull = ConvexHull(np.concatenate([pts, -pts]))
    normals, offs = hull.equations[:, :-1], -hull.equations[:, -1]
    return john_from_constraints(normals, offs)


# ---------------------------------------------------------------------------
# body fields


def body_field(grid, bodies, dirs: DirectionSet | None = None) -> Field:
    """Field of bodies, sampled on ``dirs``."""
    bodies = list(bodies)
    dirs = dirs or DirectionSet.default(bodies[0].d)
    return Field(grid, np.stack([B.support_on(dirs) for B in bodies]), "body", dirs)


def segment_field(f: Field, dirs: DirectionSet | None = None) -> Field:
    """Cellwise segments ``[-f(x), f(x)]``."""
    if f.kind != "vector":
        raise DomainError("expected a vector field")
    dirs = dirs or DirectionSet.default(f.d)
    return Field(f.grid, np.abs(f.values @ dirs.dirs.T), "body", dirs)


def ball_field(W: Field, dirs: DirectionSet | None = None) -> Field:
    """Cellwise ellipsoids ``W(x) B`` (scalar weights give ``w(x) B``)."""
    if W.kind == "scalar":
        dirs = dirs or DirectionSet.default(1)
        return Field(W.grid, np.abs(W.values)[:, None] * np.ones(len(dirs)), "body", dirs)
    dirs = dirs or DirectionSet.default(W.d)
    h = np.linalg.norm(np.einsum("nij,kj->nki", W.values, dirs.dirs), axis=-1)
    return Field(W.grid, h, "body", dirs)


def field_vertices(F: Field) -> np.ndarray:
    return sampled_vertices(F.values, F.dirs)


def field_magnitudes(F: Field, A: np.ndarray | None = None) -> np.ndarray:
    """``sup{|A(x) v| : v in F(x)}`` per cell (``A`` optional stack of matrices)."""
    V = field_vertices(F)
    if A is None:
        return np.sqrt(np.einsum("nki,nki->nk", V, V).max(axis=-1))
    if V.shape[-1] == 2:
        x = A[:, 0, 0, None] * V[..., 0] + A[:, 0, 1, None] * V[..., 1]
        y = A[:, 1, 0, None] * V[..., 0] + A[:, 1, 1, None] * V[..., 1]
        return np.sqrt((x * x + y * y).max(axis=-1))
    V = np.einsum("nij,nkj->nki", A, V)
    return np.linalg.norm(V, axis=-1).max(axis=-1)


def sphere_mean_abs(d: int) -> float:
    """E|<b, e_1>| for b uniform on the unit sphere of R^d."""
    return gamma(d / 2) / (sqrt(pi) * gamma((d + 1) / 2))
