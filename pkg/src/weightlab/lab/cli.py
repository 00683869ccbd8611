"""``weightlab`` command line: field tools and the experiment runner."""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from ..fieldio import FieldFormatError, format_field, read_field, write_field
from ..grid import DomainError, DyadicGrid, Field
from ..operators.hilbert import hilbert_maximal, hilbert_truncated
from ..operators.iteration import christ_goldberg_norm_estimate, operator_norm_estimate
from ..operators.maximal import (
    christ_goldberg,
    christ_goldberg_aux,
    convex_maximal,
    maximal_scalar,
    maximal_weighted_universal,
)
from ..operators.sparse import convex_sparse, sparse_generate, sparse_scalar
from ..weights import matrix_characteristic, scalar_a1, scalar_ap
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, make_weight
from .experiments import run_experiment


class UsageError(Exception):
    pass


def _emit_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _emit_field(f: Field, out: str | None) -> None:
    if out:
        write_field(f, out)
    else:
        sys.stdout.write(format_field(f))


def cmd_characteristics(args) -> int:
    w = read_field(args.input)
    if w.kind == "scalar":
        variant = args.variant or "ap"
        if variant in ("ap", "roudenko"):
            rep = scalar_ap(w, args.p)
        elif variant == "a1":
            rep = scalar_a1(w)
        else:
            raise UsageError(f"--variant {variant} needs a matrix weight")
    elif w.kind == "matrix":
        rep = matrix_characteristic(w, args.variant or "roudenko", args.p)
    else:
        raise UsageError("characteristics takes a scalar or matrix weight field")
    _emit_json(rep.to_dict())
    return 0


def cmd_maximal(args) -> int:
    f = read_field(args.input)
    op = args.op
    weight = read_field(args.weight) if args.weight else None
    if op == "scalar":
        out = maximal_scalar(f)
    elif op == "weighted":
        if weight is None:
            raise UsageError("--op weighted needs --weight")
        out = maximal_weighted_universal(f, weight)
    elif op == "convex":
        out = convex_maximal(f)
    elif op in ("christ-goldberg", "aux"):
        if weight is None or weight.kind != "matrix":
            raise UsageError(f"--op {op} needs a matrix --weight")
        out = christ_goldberg(weight, f, args.r) if op == "christ-goldberg" else christ_goldberg_aux(weight, f, args.p)
    else:
        raise UsageError(f"unknown operator {op!r}")
    _emit_field(out, args.out)
    return 0


def cmd_sparse(args) -> int:
    f = read_field(args.input)
    S = sparse_generate(f.grid, args.strategy, seed=args.seed, stride=args.stride,
                        f=f if f.kind == "scalar" else None, threshold=args.threshold)
    out = sparse_scalar(S, f) if f.kind == "scalar" else convex_sparse(S, f)
    _emit_field(out, args.out)
    if args.family_out:
        with open(args.family_out, "w") as fh:
            json.dump(S.to_dict(), fh, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_hilbert(args) -> int:
    f = read_field(args.input)
    if args.eps is None:
        out = hilbert_maximal(f)
    else:
        out = f.replace(np.array([hilbert_truncated(f, x, args.eps) for x in range(f.grid.n_cells)]))
    _emit_field(out, args.out)
    return 0


def cmd_opnorm(args) -> int:
    weight = read_field(args.weight) if args.weight else None
    grid = weight.grid if weight is not None else DyadicGrid(args.dim, args.depth)
    op = args.operator
    if op == "maximal":
        est = operator_norm_estimate(maximal_scalar, args.p, weight, args.trials, args.seed, grid)
    elif op == "sparse":
        S = sparse_generate(grid, "nested-halves")
        est = operator_norm_estimate(lambda f: sparse_scalar(S, f), args.p, weight, args.trials, args.seed, grid)
    elif op == "hilbert":
        if grid.dim != 1:
            raise UsageError("the Hilbert transform needs --dim 1")
        est = operator_norm_estimate(hilbert_maximal, args.p, weight, args.trials, args.seed, grid)
    elif op == "convex-maximal":
        est = operator_norm_estimate(convex_maximal, args.p, weight, args.trials, args.seed, grid, args.d)
    elif op == "christ-goldberg":
        if weight is None or weight.kind != "matrix":
            raise UsageError("christ-goldberg needs a matrix --weight")
        est = christ_goldberg_norm_estimate(weight, args.p, args.p, args.trials, args.seed)
    else:
        raise UsageError(f"unknown operator {op!r}")
    _emit_json({"operator": op, "p": args.p, "estimate": est, "trials": args.trials, "seed": args.seed})
    return 0


_RUN_KEYS = ("experiment", "depth", "n", "d", "p", "weight", "trials", "seed", "out", "strategy", "K")


def cmd_run(args) -> int:
    data = {}
    if args.config:
        with open(args.config) as fh:
            cfg = ExperimentConfig.from_text(fh.read())
        data = {k: getattr(cfg, k) for k in _RUN_KEYS}
    for k in _RUN_KEYS:
        v = getattr(args, k)
        if v is not None:
            data[k] = v
    if "experiment" not in data:
        raise UsageError("run needs --experiment or --config")
    cfg = ExperimentConfig.from_mapping(data)
    out = cfg.out or "."
    os.makedirs(out, exist_ok=True)
    base = os.path.join(out, cfg.experiment)
    try:
        res = run_experiment(cfg)
    except (DomainError, ArithmeticError) as exc:
        with open(base + ".json", "w") as fh:
            json.dump({"experiment": cfg.experiment, "passed": False, "error": str(exc)}, fh, sort_keys=True)
            fh.write("\n")
        sys.stderr.write(f"weightlab: {cfg.experiment} failed: {exc}\n")
        return 1
    with open(base + ".json", "w") as fh:
        fh.write(res.to_json())
    text = res.to_csv()
    if text is not None:
        with open(base + ".csv", "w", newline="") as fh:
            fh.write(text)
    print(f"{cfg.experiment}: {'PASS' if res.passed else 'FAIL'}")
    for k, v in sorted(res.summary.items()):
        if k not in ("config", "measured"):
            print(f"  {k}: {v}")
    print(f"  artifacts: {base}.json" + (f", {base}.csv" if text is not None else ""))
    return 0 if res.passed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="weightlab", description="Weighted norm inequality laboratory on dyadic grids.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("characteristics", help="A_p / A_1 characteristic of a weight field")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--variant", choices=("ap", "a1", "roudenko", "tv"))
    p.set_defaults(func=cmd_characteristics)

    p = sub.add_parser("maximal", help="apply a maximal operator to a field")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--weight")
    p.add_argument("--op", default="scalar", choices=("scalar", "weighted", "convex", "christ-goldberg", "aux"))
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_maximal)

    p = sub.add_parser("sparse", help="apply a generated sparse operator to a field")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--strategy", default="random", choices=("nested-halves", "random", "stopping-time", "single"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stride", type=int, default=2)
    p.add_argument("--threshold", type=float, default=2.0)
    p.add_argument("--out")
    p.add_argument("--family-out")
    p.set_defaults(func=cmd_sparse)

    p = sub.add_parser("hilbert", help="truncated or maximal truncated Hilbert transform (1D)")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--eps", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_hilbert)

    p = sub.add_parser("opnorm", help="lower-bound estimate of an operator norm")
    p.add_argument("--operator", required=True,
                   choices=("maximal", "sparse", "hilbert", "convex-maximal", "christ-goldberg"))
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--weight")
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--dim", type=int, default=1, choices=(1, 2))
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--trials", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_opnorm)

    p = sub.add_parser("run", help="run a named experiment and write JSON/CSV artifacts")
    p.add_argument("--config")
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--depth", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--weight")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--strategy")
    p.add_argument("--K", type=int)
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        parser.error(str(exc))
    except (FieldFormatError, OSError) as exc:
        sys.stderr.write(f"weightlab: {exc}\n")
        return 2
    except DomainError as exc:
        sys.stderr.write(f"weightlab: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
