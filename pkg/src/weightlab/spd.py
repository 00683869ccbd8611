"""Small dense symmetric matrices: Jacobi eigensolver and spectral calculus.

All routines accept a single ``(d, d)`` matrix or a stack ``(..., d, d)`` and
work on the whole stack at once.
"""
from __future__ import annotations

import numpy as np

from .grid import DomainError

EPS_REG = 1e-10
PSD_TOL = 1e-10
SYM_TOL = 1e-12


class NotPSDError(DomainError):
    pass


class SingularMatrixError(ArithmeticError):
    pass


def _as_stack(A):
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DomainError(f"expected square matrices, got shape {A.shape}")
    return A


def symmetrize(A, where: str = "") -> np.ndarray:
    A = _as_stack(A)
    asym = np.abs(A - np.swapaxes(A, -1, -2)).max(axis=(-1, -2), initial=0.0)
    scale = np.maximum(np.abs(A).max(axis=(-1, -2), initial=0.0), 1.0)
    if np.any(asym > SYM_TOL * scale):
        raise DomainError(f"matrix not symmetric{' (' + where + ')' if where else ''}")
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def eigh(A, tol: float = 1e-13, max_sweeps: int = 64):
    """Eigen-decomposition of symmetric matrices by cyclic Jacobi rotations.

    Sweeps visit the pairs ``(p, q)``, ``p < q``, in lexicographic order and
    stop once the off-diagonal Frobenius mass drops below ``tol`` times the
    total.  Returns ascending eigenvalues ``w`` and orthogonal ``V`` with
    ``A = V diag(w) V^T``.
    """
    A = symmetrize(A).copy()
    d = A.shape[-1]
    V = np.broadcast_to(np.eye(d), A.shape).copy()
    total = np.sum(A * A, axis=(-1, -2))
    iu = np.triu_indices(d, 1)
    for _ in range(max_sweeps):
        off = 2.0 * np.sum(A[..., iu[0], iu[1]] ** 2, axis=-1)
        if np.all(off <= (tol * tol) * total):
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = A[..., p, q]
                active = np.abs(apq) > 1e-300
                if not np.any(active):
                    continue
                safe = np.where(active, apq, 1.0)
                theta = (A[..., q, q] - A[..., p, p]) / (2.0 * safe)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
                t = np.where(theta == 0.0, 1.0, t)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                c = np.where(active, c, 1.0)[..., None]
                s = np.where(active, s, 0.0)[..., None]
                colp, colq = A[..., :, p].copy(), A[..., :, q].copy()
                A[..., :, p] = c * colp - s * colq
                A[..., :, q] = s * colp + c * colq
                rowp, rowq = A[..., p, :].copy(), A[..., q, :].copy()
                A[..., p, :] = c * rowp - s * rowq
                A[..., q, :] = s * rowp + c * rowq
                A[..., p, q] = 0.0
                A[..., q, p] = 0.0
                vp, vq = V[..., :, p].copy(), V[..., :, q].copy()
                V[..., :, p] = c * vp - s * vq
                V[..., :, q] = s * vp + c * vq
    w = np.diagonal(A, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=-1)
    w = np.take_along_axis(w, order, axis=-1)
    V = np.take_along_axis(V, order[..., None, :], axis=-1)
    return w, V


def _location(where: str, idx) -> str:
    loc = f" at {where}" if where else ""
    if idx is not None:
        loc += f" index {tuple(int(i) for i in idx)}" if np.ndim(idx) else f" index {int(idx)}"
    return loc


def power(W, t: float, *, clamp: bool = False, return_clamped: bool = False, where: str = ""):
    """Spectral power ``U diag(lambda^t) U^T`` of symmetric PSD matrices.

    Negative powers need every eigenvalue above ``EPS_REG * lambda_max``.
    With ``clamp=True`` smaller eigenvalues are raised to that floor instead
    of raising :class:`SingularMatrixError`.
    """
    w, V = eigh(W)
    lmax = np.maximum(w[..., -1], 0.0)
    bad = w[..., 0] < -PSD_TOL * np.maximum(lmax, 1e-300)
    if np.any(bad):
        idx = np.argwhere(bad)[0] if bad.ndim else None
        lam = w[..., 0][tuple(idx)] if bad.ndim else w[0]
        raise NotPSDError(f"negative eigenvalue {lam:.3e}{_location(where, idx)}")
    w = np.maximum(w, 0.0)
    clamped = False
    if t == 0:
        out = np.broadcast_to(np.eye(w.shape[-1]), V.shape).copy()
        return (out, False) if return_clamped else out
    if t < 0:
        floor = EPS_REG * lmax[..., None]
        low = (w < floor) | (w <= 0.0)
        if np.any(low):
            if not clamp or np.any(lmax <= 0.0):
                idx = np.argwhere(low.any(axis=-1))[0] if low.ndim > 1 else None
                lam = w[..., 0][tuple(idx)] if idx is not None else w[0]
                raise SingularMatrixError(
                    f"eigenvalue {lam:.3e} below floor for power {t}{_location(where, idx)}"
                )
            w = np.maximum(w, floor)
            clamped = True
    out = np.einsum("...ij,...j,...kj->...ik", V, w ** t, V)
    return (out, clamped) if return_clamped else out


def check_pd(W, where: str = "") -> None:
    w, _ = eigh(W)
    lmax = np.maximum(w[..., -1], 0.0)
    bad = (w[..., 0] <= EPS_REG * lmax) | (lmax <= 0)
    if np.any(bad):
        idx = np.argwhere(bad)[0] if bad.ndim else None
        raise SingularMatrixError(f"matrix weight singular{_location(where, idx)}")


def op_norm(A) -> np.ndarray | float:
    """Largest singular value."""
    A = _as_stack(A)
    w, _ = eigh(np.swapaxes(A, -1, -2) @ A)
    out = np.sqrt(np.maximum(w[..., -1], 0.0))
    return float(out) if out.ndim == 0 else out


def op_norm_2x2(A) -> np.ndarray:
    """Closed-form spectral norm for stacks of 2x2 matrices (cancellation-free)."""
    a, b, c, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    return 0.5 * (np.hypot(a + d, b - c) + np.hypot(a - d, b + c))


def op_norm_fast(A) -> np.ndarray:
    """Spectral norm of a large stack; closed form when possible."""
    A = np.asarray(A, dtype=float)
    if A.shape[-1] == 1:
        return np.abs(A[..., 0, 0])
    if A.shape[-1] == 2:
        return op_norm_2x2(A)
    return op_norm(A)


def _pair_terms(Y):
    """Right factors turning ``a+d, b-c, a-d, b+c`` of ``X Y`` into dot products with vec(X)."""
    y00, y01, y10, y11 = Y[..., 0, 0], Y[..., 0, 1], Y[..., 1, 0], Y[..., 1, 1]
    return (np.stack([y00, y10, y01, y11], -1), np.stack([y01, y11, -y00, -y10], -1),
            np.stack([y00, y10, -y01, -y11], -1), np.stack([y01, y11, y00, y10], -1))


def pair_op_norms(X, Y, reduce=None, budget: int = 1 << 14) -> np.ndarray:
    """``|X[b, i] Y[b, j]|_op`` for block stacks ``X``, ``Y`` of shape (nb, s, d, d).

    Without ``reduce`` returns (nb, s, s).  ``reduce`` maps a chunk of shape
    (nb', s', s) to (nb', s') so the full table is never held in memory.
    """
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    nb, s, d = X.shape[0], X.shape[1], X.shape[-1]
    out = np.empty((nb, s) if reduce else (nb, s, s))
    if d == 2:
        fx = X.reshape(nb, s, 4)
        terms = [np.swapaxes(t, 1, 2) for t in _pair_terms(Y)]
    bstep = max(1, budget // (s * s))
    xstep = s if bstep > 1 else max(1, budget // s)
    for b0 in range(0, nb, bstep):
        bs = slice(b0, b0 + bstep)
        for x0 in range(0, s, xstep):
            xs = slice(x0, x0 + xstep)
            if d == 1:
                n = np.abs(X[bs, xs, 0, 0][:, :, None] * Y[bs, :, 0, 0][:, None, :])
            elif d == 2:
                p, q, r, t = (np.matmul(fx[bs, xs], T[bs]) for T in terms)
                n = np.sqrt(p * p + q * q)
                n += np.sqrt(r * r + t * t)
                n *= 0.5
            else:
                n = op_norm(np.einsum("bxij,byjk->bxyik", X[bs, xs], Y[bs]))
            out[bs, xs] = reduce(n) if reduce else n
    return out


def commuting(A, B, tol: float = 1e-10) -> bool:
    A, B = _as_stack(A), _as_stack(B)
    if A.shape != B.shape:
        raise DomainError("matrices differ in shape")
    comm = op_norm(A @ B - B @ A)
    return bool(np.all(comm <= tol * op_norm(A) * op_norm(B)))


def random_spd(rng: np.random.Generator, d: int, cond: float = 10.0, size=None):
    """Random SPD matrices with eigenvalues log-uniform in ``[1, cond]``."""
    shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    G = rng.standard_normal(shape + (d, d))
    Q, R = np.linalg.qr(G)
    Q = Q * np.sign(np.diagonal(R, axis1=-2, axis2=-1))[..., None, :]
    lam = np.exp(rng.uniform(0.0, np.log(cond), shape + (d,)))
    return np.einsum("...ij,...j,...kj->...ik", Q, lam, Q)
