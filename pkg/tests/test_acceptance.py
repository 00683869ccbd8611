"""The eleven acceptance criteria, each at its stated scale, tolerance and time limit.

Every criterion prints one PASS/FAIL line; the lines are repeated in the
terminal summary.
"""
import math
import os
import time

import numpy as np
import pytest

from weightlab.lab.cli import main
from weightlab.lab.config import EXPERIMENTS, ExperimentConfig
from weightlab.lab.experiments import run_experiment
from weightlab.lab.sweep import sweep_exponents

from conftest import ACCEPTANCE_LINES


def run(**kw):
    return run_experiment(ExperimentConfig(**kw))


def judge(number, title, limit, body):
    """Run ``body`` (returns ``(ok, detail)``), time it, record and assert."""
    t0 = time.perf_counter()
    ok, detail = body()
    elapsed = time.perf_counter() - t0
    in_time = limit is None or elapsed <= limit
    verdict = "PASS" if ok and in_time else "FAIL"
    budget = f"{elapsed:.1f}s" + (f" / {limit:.0f}s" if limit is not None else "")
    line = f"[{verdict}] criterion {number:2d} {title}: {detail} ({budget})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line
    assert in_time, line


def test_criterion_01_duality_identity():
    def body():
        errs = {}
        for p in (1.5, 2.0, 3.0):
            r = run(experiment="duality", depth=8, p=p, trials=100, weight="random(0,1.0)")
            errs[p] = r.summary["max_rel_error"]
        worst = max(errs.values())
        return worst <= 1e-10, f"max relative error {worst:.2e} over 3 x 100 weights"

    judge(1, "duality identity", 10, body)


def test_criterion_02_one_dimensional_collapse():
    def body():
        r = run(experiment="collapse", depth=8, p=3.0, trials=50, weight="random(100,1.0)")
        rows = r.table
        worst = {k: max(row[f"{k}_rel_error"] for row in rows) for k in ("roudenko", "a1", "tv")}
        ok = len(rows) == 50 and all(v <= 1e-10 for v in worst.values())
        return ok, "max relative errors " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())

    judge(2, "d = 1 collapse", 10, body)


def test_criterion_03_reverse_factorization():
    def body():
        bad, pairs = 0, 0
        for p, seed in ((2.0, 1), (3.0, 2)):
            r = run(experiment="reverse-factorization", depth=8, p=p, trials=50, seed=seed)
            pairs += len(r.table)
            for row in r.table:
                finite = math.isfinite(row["a1_w0"]) and math.isfinite(row["a1_w1"])
                bad += not (finite and row["lhs"] <= row["rhs"])
        return bad == 0 and pairs == 100, f"{bad} violations in {pairs} pairs"

    judge(3, "reverse factorization", 30, body)


def test_criterion_04_sparse_a2_chain():
    def body():
        runs = [
            run(experiment="sparse-chain", depth=8, trials=25, weight="random(7,1.0)", strategy="random", seed=4),
            run(experiment="sparse-chain", depth=8, trials=25, weight="power(0.9)", strategy="nested-halves", seed=5),
        ]
        trials = sum(len(r.summary["measured"]) for r in runs)
        chains_ok = all(r.passed for r in runs)
        heads = [row for r in runs for row in r.table if row["line"] == "headline"]
        heads_ok = len(heads) == trials and all(row["satisfied"] for row in heads)
        worst = max(m["ratio_over_a2"] for r in runs for m in r.summary["measured"])
        return chains_ok and heads_ok and worst <= 8.0, (
            f"{trials} trials, all lines pass: {chains_ok}, max ratio / [w]_A2 = {worst:.3f} <= 8")

    judge(4, "sparse A2 chain", 60, body)


def test_criterion_05_john_sandwich():
    def body():
        r2 = run(experiment="john", d=2, trials=50, seed=11)
        r3 = run(experiment="john", d=3, trials=20, seed=12)
        n = len(r2.table) + len(r3.table)
        ok = r2.passed and r3.passed and n == 70
        fails = r2.summary["failed_trials"] + r3.summary["failed_trials"]
        return ok, f"{n} bodies (50 in d=2, 20 in d=3), {len(fails)} sandwich failures"

    judge(5, "John ellipsoid sandwich", 60, body)


def test_criterion_06_convex_maximal_reduction():
    def body():
        r = run(experiment="convex-maximal", depth=6, n=2, d=2, trials=20, seed=13)
        worst = r.summary["worst"]
        ok = r.passed and all(v <= 1e-12 for v in worst.values())
        return ok, "worst " + ", ".join(f"{k} {v:.1e}" for k, v in sorted(worst.items()))

    judge(6, "convex maximal reduction", 30, body)


def test_criterion_07_iteration_operators():
    def body():
        r = run(experiment="iteration", depth=4, n=2, d=2, p=2.0, trials=50, K=40,
                weight="rotated-diagonal(3,0.5,0.5)", seed=14)
        flags = ("h_le_Rh", "norm_bound", "F_in_RF", "MRF_in_2aRF", "scalar_a1", "convex_norm_bound")
        ok = r.passed and len(r.table) == 50 and all(row[f] for row in r.table for f in flags)
        return ok, f"50 inputs, failed trials {r.summary['failed_trials']}"

    judge(7, "iteration operators", 60, body)


def test_criterion_08_buckley_growth():
    def body():
        assert sweep_exponents(1, 2.0) == [k / 10 for k in range(10)]
        r = run(experiment="sweep", depth=10, p=2.0, n=1, d=1, trials=4, seed=0)
        slope = r.summary["slopes"]["maximal"]
        return slope is not None and slope <= 1.15, f"fitted maximal slope {slope:.3f} <= 1.15"

    judge(8, "Buckley growth sweep", 120, body)


def test_criterion_09_hilbert_closed_form():
    def body():
        r = run(experiment="hilbert", depth=10, trials=10)
        err = r.summary["abs_error"]
        return err <= 1e-3 and r.passed, f"|T_eps chi(2) - ln 2| = {err:.1e}"

    judge(9, "Hilbert closed form", 5, body)


def test_criterion_10_convex_sparse_matrix_chain():
    def body():
        r = run(experiment="convex-chain", depth=6, n=2, d=2, p=2.0, trials=20, strategy="nested-halves",
                weight="rotated-diagonal(0,0.5,0.5)", seed=15)
        C = r.summary["logged_constant"]
        ratios = [m["ratio_over_a2_squared"] for m in r.summary["measured"]]
        ok = r.passed and len(ratios) == 20 and math.isfinite(C) and all(x <= C for x in ratios)
        return ok, f"20 trials, all lines pass: {r.passed}, logged constant {C:.4f}"

    judge(10, "convex sparse matrix chain", 120, body)


SMALL = {
    "duality": "--depth 6 --p 3 --trials 5",
    "collapse": "--depth 6 --p 1.5 --trials 5",
    "reverse-factorization": "--depth 6 --p 3 --trials 5",
    "sparse-chain": "--depth 6 --trials 5",
    "extrapolation-chain": "--depth 6 --p 3 --trials 3",
    "convex-chain": "--depth 3 --n 2 --d 2 --weight rotated-diagonal(1,0.4,0.4) --trials 2",
    "john": "--d 3 --trials 3",
    "convex-maximal": "--depth 3 --n 2 --d 2 --trials 3",
    "iteration": "--depth 3 --n 2 --d 2 --trials 3",
    "sweep": "--depth 6 --trials 2",
    "hilbert": "--depth 8 --trials 5",
}


def test_criterion_11_determinism(tmp_path, monkeypatch, capsys):
    def artifacts(out):
        return {name: (out / name).read_bytes() for name in sorted(os.listdir(out))}

    def body():
        assert set(SMALL) == set(EXPERIMENTS)
        differ = []
        for exp, flags in SMALL.items():
            outs = []
            for rep, threads in enumerate(("1", "2")):
                monkeypatch.setenv("WEIGHTLAB_THREADS", threads)
                out = tmp_path / f"{exp}-{rep}"
                code = main(["run", "--experiment", exp, "--seed", "21", "--out", str(out)] + flags.split())
                assert code == 0, exp
                outs.append(artifacts(out))
            if outs[0] != outs[1] or not outs[0]:
                differ.append(exp)
        capsys.readouterr()
        return not differ, f"{len(SMALL)} experiments rerun, byte-identical artifacts; differing: {differ}"

    judge(11, "determinism", None, body)
