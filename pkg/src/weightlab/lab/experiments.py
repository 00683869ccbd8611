"""Named experiments: each turns an :class:`ExperimentConfig` into a report.

Per-trial randomness comes from ``SeedSequence(cfg.seed).spawn(trials)``, so a
trial's inputs do not depend on how trials are scheduled.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from math import log, sqrt

import numpy as np

from .. import spd
from ..convex import (
    DirectionSet,
    contains,
    ellipsoid,
    john_ellipsoid,
    sampled,
)
from ..grid import DomainError, DyadicGrid, Field
from ..operators.hilbert import hilbert_truncated, size_bound_holds
from ..operators.iteration import (
    operator_norm_estimate,
    rubio_iteration_convex,
    rubio_iteration_scalar,
)
from ..operators.maximal import convex_maximal, maximal_scalar
from ..operators.sparse import sparse_generate
from ..weights import (
    conjugate,
    dual_weight,
    matrix_a1,
    matrix_a2_tv,
    matrix_ap_roudenko,
    reverse_factorization_check,
    scalar_a1,
    scalar_ap,
)
from .chains import verify_convex_sparse_w2_chain, verify_extrapolation_chain, verify_sparse_a2_chain
from .config import ExperimentConfig, make_weight, parse_weight_spec
from .sweep import sweep_sharp_constants

CHAIN_COLUMNS = ("trial", "line", "relation", "lhs", "rhs", "satisfied", "slack")


@dataclass
class ExperimentResult:
    experiment: str
    passed: bool
    summary: dict
    table: list = dc_field(default_factory=list)
    columns: tuple = ()
    csv_text: str | None = None

    def to_json(self) -> str:
        out = {"experiment": self.experiment, "passed": self.passed, "summary": self.summary}
        return json.dumps(_clean(out), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def to_csv(self) -> str | None:
        if self.csv_text is not None:
            return self.csv_text
        if not self.table:
            return None
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\r\n")
        w.writeheader()
        for row in self.table:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in _clean(row).items()})
        return buf.getvalue()


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("WEIGHTLAB_THREADS", "1")))
    except ValueError:
        return 1


def ordered_map(fn, items):
    """``map`` over items, on a thread pool when WEIGHTLAB_THREADS > 1; order preserved."""
    items = list(items)
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def trial_rngs(seed: int, trials: int) -> list:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


def trial_weight(spec: str, grid: DyadicGrid, d: int, t: int) -> Field:
    """The configured weight, with seeded generators advanced by the trial index."""
    name, args = parse_weight_spec(spec)
    if name in ("random", "rotated-diagonal"):
        args = [(args[0] if args else 0.0) + t] + args[1:]
        spec = f"{name}({','.join(repr(a) for a in args)})"
    return make_weight(spec, grid, d)


# ---------------------------------------------------------------------------
# random inputs


def random_positive_field(grid: DyadicGrid, rng: np.random.Generator) -> Field:
    """Nonnegative, not identically zero: lognormal, spiky, or a cube indicator."""
    n = grid.n_cells
    kind = rng.integers(3)
    if kind == 0:
        v = rng.lognormal(0.0, rng.uniform(0.2, 2.0), n)
    elif kind == 1:
        v = np.zeros(n)
        k = max(1, int(rng.integers(1, 5)))
        v[rng.choice(n, size=k, replace=False)] = rng.uniform(1.0, 100.0, k)
    else:
        level = int(rng.integers(0, grid.depth + 1))
        Q = grid.cubes(level)[int(rng.integers(len(grid.cubes(level))))]
        v = np.zeros(n)
        v[grid.cube_cells(Q)] = 1.0
    return Field(grid, v)


def random_vector_field(grid: DyadicGrid, d: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((grid.n_cells, d)) * rng.lognormal(0.0, 1.0, (grid.n_cells, 1))


def random_body_field(grid: DyadicGrid, d: int, rng: np.random.Generator, segments: int | None = None,
                      dirs: DirectionSet | None = None) -> Field:
    """Sums of random segments, plus a random ellipsoid unless ``segments`` is given."""
    dirs = dirs or DirectionSet.default(d)
    U = dirs.dirs
    k = segments if segments is not None else int(rng.integers(1, 4))
    h = np.zeros((grid.n_cells, len(dirs)))
    for _ in range(k):
        h += np.abs(random_vector_field(grid, d, rng) @ U.T)
    if segments is None:
        A = spd.random_spd(rng, d, 10.0, grid.n_cells) * rng.lognormal(0, 1, (grid.n_cells, 1, 1))
        h += np.linalg.norm(np.einsum("nij,kj->nki", A, U), axis=-1)
    return Field(grid, h, "body", dirs)


def random_body(d: int, rng: np.random.Generator, dirs: DirectionSet | None = None):
    """A random absorbing sampled body with touching constraints.

    Either the symmetric hull of random points or a Minkowski sum of random
    segments and an ellipsoid; supports are exact, so every constraint touches.
    """
    dirs = dirs or DirectionSet.default(d)
    U = dirs.dirs
    if rng.integers(2) == 0:
        P = rng.standard_normal((int(rng.integers(d + 1, 12)), d)) * rng.lognormal(0, 1, d)
        h = np.abs(U @ P.T).max(axis=1)
    else:
        S = rng.standard_normal((int(rng.integers(1, 5)), d))
        A = spd.random_spd(rng, d, float(rng.uniform(1, 50)))
        h = np.abs(U @ S.T).sum(axis=1) + rng.uniform(0, 2) * np.linalg.norm(U @ A, axis=1)
    if np.min(h) <= 1e-9 * np.max(h):
        h = h + 1e-3 * np.max(h)
    return sampled(h, dirs)


def _family(cfg: ExperimentConfig, grid: DyadicGrid, rng: np.random.Generator, f: Field | None):
    strategy = cfg.strategy
    if strategy == "stopping-time" and f is None:
        strategy = "random"
    return sparse_generate(grid, strategy, seed=int(rng.integers(2 ** 31)), stride=int(rng.integers(1, 3)),
                           f=f, threshold=float(rng.uniform(2.0, 4.0)))


# ---------------------------------------------------------------------------
# experiments


def _grid(cfg) -> DyadicGrid:
    return DyadicGrid(cfg.n, cfg.depth)


def exp_duality(cfg: ExperimentConfig) -> ExperimentResult:
    grid, p = _grid(cfg), cfg.p
    if p <= 1:
        raise DomainError("duality needs p > 1")
    pc = conjugate(p)

    def trial(t):
        w = trial_weight(cfg.weight, grid, 1, t)
        lhs = scalar_ap(dual_weight(w, p), pc).value
        rhs = scalar_ap(w, p).value ** (pc - 1.0)
        return {"trial": t, "sigma_char": lhs, "w_char_power": rhs, "rel_error": abs(lhs - rhs) / rhs}

    rows = ordered_map(trial, range(cfg.trials))
    err = max(r["rel_error"] for r in rows)
    return ExperimentResult("duality", err <= 1e-10, {"max_rel_error": err, "tolerance": 1e-10},
                            rows, ("trial", "sigma_char", "w_char_power", "rel_error"))


def exp_collapse(cfg: ExperimentConfig) -> ExperimentResult:
    grid, p = _grid(cfg), cfg.p

    def trial(t):
        w = trial_weight(cfg.weight, grid, 1, t)
        W = Field(grid, w.values[:, None, None], "matrix")
        pairs = {
            "roudenko": (matrix_ap_roudenko(W, p).value, scalar_ap(w, p).value),
            "a1": (matrix_a1(W).value, scalar_a1(w).value),
            "tv": (matrix_a2_tv(W).value, sqrt(scalar_ap(w, 2.0).value)),
        }
        row = {"trial": t}
        for k, (m, s) in pairs.items():
            row[f"{k}_rel_error"] = abs(m - s) / s
        return row

    rows = ordered_map(trial, range(cfg.trials))
    cols = ("trial", "roudenko_rel_error", "a1_rel_error", "tv_rel_error")
    err = max(max(r[c] for c in cols[1:]) for r in rows)
    return ExperimentResult("collapse", err <= 1e-10, {"max_rel_error": err, "tolerance": 1e-10}, rows, cols)


def exp_reverse_factorization(cfg: ExperimentConfig) -> ExperimentResult:
    grid, p = _grid(cfg), cfg.p
    a = operator_norm_estimate(maximal_scalar, p, None, grid=grid)
    rngs = trial_rngs(cfg.seed, cfg.trials)

    def trial(t):
        rng = rngs[t]
        w0 = rubio_iteration_scalar(random_positive_field(grid, rng), None, p, cfg.K, a).field
        w1 = rubio_iteration_scalar(random_positive_field(grid, rng), None, p, cfg.K, a).field
        chk = reverse_factorization_check(w0, w1, p)
        return {"trial": t, **{k: chk[k] for k in ("lhs", "rhs", "a1_w0", "a1_w1", "ok")}}

    rows = ordered_map(trial, range(cfg.trials))
    bad = [r["trial"] for r in rows if not (r["ok"] and math.isfinite(r["a1_w0"]) and math.isfinite(r["a1_w1"]))]
    return ExperimentResult("reverse-factorization", not bad,
                            {"violations": len(bad), "violating_trials": bad, "maximal_norm": a},
                            rows, ("trial", "lhs", "rhs", "a1_w0", "a1_w1", "ok"))


def _chain_result(name, reports, extra) -> ExperimentResult:
    rows = [{"trial": t, **{k: r[k] for k in CHAIN_COLUMNS[1:]}}
            for t, rep in enumerate(reports) for r in (x.to_dict() for x in rep.rows)]
    failed = [t for t, rep in enumerate(reports) if not rep.passed]
    summary = {"trials": len(reports), "failed_trials": failed,
               "measured": [rep.measured for rep in reports], **extra}
    return ExperimentResult(name, not failed, summary, rows, CHAIN_COLUMNS)


def exp_sparse_chain(cfg: ExperimentConfig) -> ExperimentResult:
    grid = _grid(cfg)
    rngs = trial_rngs(cfg.seed, cfg.trials)

    def trial(t):
        w = trial_weight(cfg.weight, grid, 1, t)
        f = random_positive_field(grid, rngs[t])
        return verify_sparse_a2_chain(w, f, _family(cfg, grid, rngs[t], f))

    reps = ordered_map(trial, range(cfg.trials))
    worst = max(r.measured["ratio_over_a2"] for r in reps)
    return _chain_result("sparse-chain", reps, {"max_ratio_over_a2": worst, "headline_constant": 8.0})


def exp_extrapolation_chain(cfg: ExperimentConfig) -> ExperimentResult:
    grid = _grid(cfg)
    rngs = trial_rngs(cfg.seed, cfg.trials)

    def trial(t):
        w = trial_weight(cfg.weight, grid, 1, t)
        f = random_positive_field(grid, rngs[t])
        return verify_extrapolation_chain(w, f, _family(cfg, grid, rngs[t], f), cfg.p, cfg.K)

    reps = ordered_map(trial, range(cfg.trials))
    return _chain_result("extrapolation-chain", reps,
                         {"max_v_a2": max(r.measured["v_a2"] for r in reps), "p": cfg.p})


def exp_convex_chain(cfg: ExperimentConfig) -> ExperimentResult:
    grid = _grid(cfg)
    if cfg.d < 2:
        raise DomainError("convex-chain needs d >= 2")
    rngs = trial_rngs(cfg.seed, cfg.trials)

    def trial(t):
        rng = rngs[t]
        W = trial_weight(cfg.weight, grid, cfg.d, t)
        F = random_body_field(grid, cfg.d, rng, segments=int(rng.integers(1, 3)))
        return verify_convex_sparse_w2_chain(W, F, _family(cfg, grid, rng, None), estimate_trials=None)

    reps = ordered_map(trial, range(cfg.trials))
    logged = max(r.measured["ratio_over_a2_squared"] for r in reps)
    return _chain_result("convex-chain", reps, {
        "logged_constant": logged,
        "max_chain_constant_over_a2_squared": max(r.measured["constant_over_a2_squared"] for r in reps),
        "a2_variant": "matrix-a2-tv squared",
    })


def exp_john(cfg: ExperimentConfig) -> ExperimentResult:
    d = max(cfg.d, 2)
    rngs = trial_rngs(cfg.seed, cfg.trials)

    def trial(t):
        K = random_body(d, rngs[t])
        t0 = time.perf_counter()
        A = john_ellipsoid(K)
        el = time.perf_counter() - t0
        E = ellipsoid(A)
        inner = contains(K, E, 1e-6)
        outer = contains(ellipsoid(sqrt(d) * A), K, 1e-6)
        return {"trial": t, "inner": inner, "outer": outer, "seconds": round(el, 3)}

    rows = ordered_map(trial, range(cfg.trials))
    bad = [r["trial"] for r in rows if not (r["inner"] and r["outer"])]
    # timings vary between runs, so they stay out of the artifacts
    summary = {"d": d, "failed_trials": bad}
    return ExperimentResult("john", not bad, summary,
                            [{k: r[k] for k in ("trial", "inner", "outer")} for r in rows],
                            ("trial", "inner", "outer"))


def convex_maximal_checks(F: Field, G: Field, alpha: float) -> dict:
    """Direction-wise identity and the three structural properties, as max errors."""
    MF = convex_maximal(F).values
    scale = max(float(np.max(np.abs(F.values))), float(np.max(np.abs(G.values))), 1e-300)
    direct = np.stack([maximal_scalar(Field(F.grid, F.values[:, i])).values
                       for i in range(F.values.shape[1])], axis=1)
    MG = convex_maximal(G).values
    MFG = convex_maximal(F.replace(F.values + G.values)).values
    MaF = convex_maximal(F.replace(alpha * F.values)).values
    return {
        "identity": float(np.max(np.abs(MF - direct))),
        "contains": float(np.max(F.values - MF)) / scale,
        "sublinear": float(np.max(MFG - (MF + MG))) / scale,
        "homogeneous": float(np.max(np.abs(MaF - alpha * MF))) / (alpha * scale),
    }


def exp_convex_maximal(cfg: ExperimentConfig) -> ExperimentResult:
    grid = _grid(cfg)
    rngs = trial_rngs(cfg.seed, cfg.trials)

    def trial(t):
        rng = rngs[t]
        F = random_body_field(grid, cfg.d, rng)
        G = random_body_field(grid, cfg.d, rng)
        return {"trial": t, **convex_maximal_checks(F, G, float(rng.uniform(0.1, 10.0)))}

    rows = ordered_map(trial, range(cfg.trials))
    cols = ("trial", "identity", "contains", "sublinear", "homogeneous")
    worst = {c: max(r[c] for r in rows) for c in cols[1:]}
    return ExperimentResult("convex-maximal", all(v <= 1e-12 for v in worst.values()),
                            {"worst": worst, "tolerance": 1e-12}, rows, cols)


def iteration_checks(h: Field, w: Field | None, F: Field, W: Field | None, p: float, K: int,
                     a_scalar: float | None = None, a_convex: float | None = None,
                     slack: float = 1e-8) -> dict:
    R = rubio_iteration_scalar(h, w, p, K, a_scalar)
    Rh = R.field.values
    MRh = maximal_scalar(R.field).values
    RC = rubio_iteration_convex(F, W, p, K, a_convex)
    RF = RC.field.values
    MRF = convex_maximal(RC.field).values
    return {
        "h_le_Rh": bool(np.all(h.values <= Rh)),
        "norm_bound": bool(R.output_norm <= 2 * R.input_norm + 2.0 ** (-K)),
        "scalar_a1": bool(np.all(MRh <= 2 * R.a * Rh * (1 + slack))),
        "F_in_RF": bool(np.all(F.values <= RF)),
        "convex_norm_bound": bool(RC.output_norm <= 2 * RC.input_norm + 2.0 ** (-K)),
        "MRF_in_2aRF": bool(np.all(MRF <= 2 * RC.a * RF + slack * np.max(RF))),
        "a_scalar": R.a, "a_convex": RC.a,
    }


def exp_iteration(cfg: ExperimentConfig) -> ExperimentResult:
    grid = _grid(cfg)
    rngs = trial_rngs(cfg.seed, cfg.trials)
    w = trial_weight(cfg.weight, grid, 1, 0)
    W = trial_weight(cfg.weight, grid, cfg.d, 0) if cfg.d > 1 else w
    # the weight is shared by all trials, so the norm estimates are too
    a_s = operator_norm_estimate(maximal_scalar, cfg.p, w, grid=grid)
    a_c = operator_norm_estimate(convex_maximal, cfg.p, W, grid=grid, d=cfg.d)

    def trial(t):
        rng = rngs[t]
        h = random_positive_field(grid, rng)
        F = random_body_field(grid, cfg.d, rng, segments=None if cfg.d > 1 else 1)
        return {"trial": t, **iteration_checks(h, w, F, W, cfg.p, cfg.K, a_s, a_c)}

    rows = ordered_map(trial, range(cfg.trials))
    flags = ("h_le_Rh", "norm_bound", "scalar_a1", "F_in_RF", "convex_norm_bound", "MRF_in_2aRF")
    failed = [r["trial"] for r in rows if not all(r[k] for k in flags)]
    return ExperimentResult("iteration", not failed,
                            {"failed_trials": failed, "K": cfg.K, "a_scalar_estimate": a_s,
                             "a_convex_estimate": a_c},
                            rows, ("trial",) + flags + ("a_scalar", "a_convex"))


def exp_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    res = sweep_sharp_constants(cfg.depth, cfg.p, cfg.n, cfg.d, trials=cfg.trials, seed=cfg.seed,
                                mapper=ordered_map)
    return ExperimentResult("sweep", res.passed, {"slopes": res.slopes, "checks": res.checks},
                            csv_text=res.to_csv())


def exp_hilbert(cfg: ExperimentConfig) -> ExperimentResult:
    grid = DyadicGrid(1, cfg.depth)
    chi = Field(grid, np.ones(grid.n_cells))
    value = hilbert_truncated(chi, eps=0.5, point=2.0)
    err = abs(value - log(2.0))
    rngs = trial_rngs(cfg.seed, cfg.trials)
    size_ok = True
    for rng in rngs:
        f = Field(grid, rng.standard_normal(grid.n_cells))
        x = int(rng.integers(grid.n_cells))
        eps = float(rng.uniform(grid.cell_measure, 1.0))
        size_ok &= size_bound_holds(f, x, eps)
    return ExperimentResult("hilbert", bool(err <= 1e-3 and size_ok),
                            {"value": value, "ln2": log(2.0), "abs_error": err, "tolerance": 1e-3,
                             "size_bound_ok": bool(size_ok)})


EXPERIMENT_FUNCS = {
    "duality": exp_duality,
    "collapse": exp_collapse,
    "reverse-factorization": exp_reverse_factorization,
    "sparse-chain": exp_sparse_chain,
    "extrapolation-chain": exp_extrapolation_chain,
    "convex-chain": exp_convex_chain,
    "john": exp_john,
    "convex-maximal": exp_convex_maximal,
    "iteration": exp_iteration,
    "sweep": exp_sweep,
    "hilbert": exp_hilbert,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    cfg.validate()
    res = EXPERIMENT_FUNCS[cfg.experiment](cfg)
    res.summary["config"] = {k: v for k, v in vars(cfg).items() if k != "out"}
    return res
