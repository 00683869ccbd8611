"""Power-weight sweeps: measured operator norms against the weight characteristic."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .. import spd
from ..grid import DyadicGrid, Field
from ..operators.hilbert import hilbert_maximal
from ..operators.iteration import christ_goldberg_norm_estimate, operator_norm_estimate, scalar_test_fields
from ..operators.maximal import maximal_scalar
from ..operators.sparse import sparse_generate, sparse_scalar
from ..weights import conjugate, matrix_ap_roudenko, scalar_ap
from .config import power_weight, rotation

COLUMNS = ("a", "characteristic", "operator", "ratio", "running_slope", "slope_stderr", "flag")
SPARSE_CONSTANT = 8.0
SLOPE_MARGIN = 0.15


@dataclass
class SweepResult:
    rows: list
    slopes: dict
    checks: list

    @property
    def passed(self) -> bool:
        return all(c["satisfied"] for c in self.checks)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\r\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _fmt(r[k]) for k in COLUMNS})
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"passed": self.passed, "slopes": self.slopes, "checks": self.checks, "rows": self.rows}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def fit_slope(chars, ratios):
    """Least-squares slope of log(ratio) on log(characteristic) over the top half.

    Returns ``(slope, stderr)``; ``None`` entries when the fit is undetermined.
    """
    x = np.log(np.asarray(chars, dtype=float))
    y = np.log(np.asarray(ratios, dtype=float))
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    x, y = x[len(x) // 2:], y[len(y) // 2:]
    if len(x) < 2 or np.ptp(x) <= 1e-12:
        return None, None
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    if len(x) < 3:
        return float(coef[0]), None
    resid = y - A @ coef
    s2 = float(resid @ resid) / (len(x) - 2)
    return float(coef[0]), float(np.sqrt(s2 / np.sum((x - x.mean()) ** 2)))


def sweep_exponents(n: int, p: float, count: int = 10) -> list[float]:
    """``a = 0, 0.1, ..., 0.9`` times the upper end ``n (p - 1)`` of the A_p range (capped at n)."""
    top = n * min(1.0, p - 1.0)
    return [round(k / count * top, 12) for k in range(count)]


def _hilbert_vs_maximal(w: Field, p: float, trials: int, seed: int) -> float:
    best = 0.0
    for v in scalar_test_fields(w.grid, p, w, trials, seed):
        f = w.replace(v)
        Mf = maximal_scalar(f).values
        den = float(np.sum(Mf ** p * w.values)) ** (1 / p)
        if den > 0:
            num = float(np.sum(hilbert_maximal(f).values ** p * w.values)) ** (1 / p)
            best = max(best, num / den)
    return best


def _scalar_rows(grid: DyadicGrid, a: float, p: float, trials: int, seed: int, operators) -> list[dict]:
    w = Field(grid, power_weight(grid, a))
    try:
        char = scalar_ap(w, p).value
    except (ArithmeticError, FloatingPointError, ValueError):
        char = float("inf")
    rows = []
    if not np.isfinite(char):
        return [{"a": a, "characteristic": None, "operator": op, "ratio": None, "flag": "overflow"}
                for op in operators]
    for op in operators:
        if op == "maximal":
            ratio = operator_norm_estimate(maximal_scalar, p, w, trials, seed)
        elif op == "sparse":
            S = sparse_generate(grid, "nested-halves")
            ratio = operator_norm_estimate(lambda f: sparse_scalar(S, f), p, w, trials, seed)
        else:
            ratio = _hilbert_vs_maximal(w, p, trials, seed)
        rows.append({"a": a, "characteristic": char, "operator": op, "ratio": ratio, "flag": ""})
    return rows


def matrix_power_weight(grid: DyadicGrid, a: float, b: float, theta: float) -> Field:
    """``R diag(w_a, w_{-b}) R^T`` with ``R`` the rotation by ``theta``."""
    R = rotation(theta)
    vals = np.stack([power_weight(grid, a), power_weight(grid, -b)], axis=1)
    return Field(grid, np.einsum("ij,nj,kj->nik", R, vals, R), "matrix")


def _matrix_rows(grid: DyadicGrid, a: float, p: float, trials: int, seed: int) -> list[dict]:
    # the second exponent mirrors a into the dual range so W stays in A_p
    b = a / (p - 1.0) if p > 1 else a
    theta = float(np.random.default_rng(seed).uniform(0, np.pi))
    W = matrix_power_weight(grid, a, min(b, 0.9 * grid.dim), theta)
    char = matrix_ap_roudenko(W, p).value
    ratio = christ_goldberg_norm_estimate(W, p, p, trials, seed)
    return [{"a": a, "characteristic": char, "operator": "christ-goldberg", "ratio": ratio, "flag": ""}]


def sweep_sharp_constants(depth: int = 10, p: float = 2.0, n: int = 1, d: int = 1, trials: int = 4,
                          seed: int = 0, exponents=None, operators=None, mapper=map) -> SweepResult:
    """Sweep power weights toward the A_p boundary and fit growth exponents.

    ``mapper`` runs the per-exponent rows (``map`` or an executor's ``map``);
    results are gathered in input order.
    """
    grid = DyadicGrid(n, depth)
    exps = list(exponents) if exponents is not None else sweep_exponents(n, p)
    if d == 1:
        ops = list(operators or (["maximal", "sparse", "hilbert"] if n == 1 else ["maximal", "sparse"]))
        chunks = list(mapper(lambda a: _scalar_rows(grid, a, p, trials, seed, ops), exps))
    else:
        chunks = list(mapper(lambda a: _matrix_rows(grid, a, p, trials, seed), exps))
    rows = [r for chunk in chunks for r in chunk]

    slopes, checks = {}, []
    for op in dict.fromkeys(r["operator"] for r in rows):
        seen = []
        for r in rows:
            if r["operator"] != op:
                continue
            if r["flag"] != "overflow":
                seen.append((r["characteristic"], r["ratio"]))
            s, e = fit_slope(*zip(*seen)) if seen else (None, None)
            r["running_slope"], r["slope_stderr"] = s, e
        slopes[op] = rows[[i for i, r in enumerate(rows) if r["operator"] == op][-1]]["running_slope"]

    exponent = conjugate(p) - 1.0
    if d == 1 and "maximal" in slopes and slopes["maximal"] is not None:
        checks.append({"check": "maximal slope", "value": slopes["maximal"],
                       "bound": exponent + SLOPE_MARGIN,
                       "satisfied": slopes["maximal"] <= exponent + SLOPE_MARGIN})
    if p == 2:
        for r in rows:
            if r["operator"] == "sparse" and r["flag"] != "overflow":
                ok = r["ratio"] <= SPARSE_CONSTANT * r["characteristic"]
                if not ok:
                    r["flag"] = "sparse-bound"
                checks.append({"check": f"sparse ratio/[w] at a={r['a']}",
                               "value": r["ratio"] / r["characteristic"], "bound": SPARSE_CONSTANT,
                               "satisfied": bool(ok)})
    return SweepResult(rows, slopes, checks)
