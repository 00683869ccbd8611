"""Experiment configuration: flat ``key=value`` files and weight generators."""
from __future__ import annotations

import re
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..grid import DomainError, DyadicGrid, Field

EXPERIMENTS = (
    "duality", "collapse", "reverse-factorization", "sparse-chain", "extrapolation-chain",
    "convex-chain", "john", "convex-maximal", "iteration", "sweep", "hilbert",
)


class ConfigError(DomainError):
    def __init__(self, field: str, msg: str):
        super().__init__(f"{field}: {msg}")
        self.field = field


@dataclass
class ExperimentConfig:
    experiment: str = "duality"
    depth: int = 8
    n: int = 1
    d: int = 1
    p: float = 2.0
    weight: str = "random(0,1.0)"
    trials: int = 10
    seed: int = 0
    out: str = ""
    strategy: str = "random"
    K: int = 40

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"unknown experiment {self.experiment!r}")
        if not 0 <= self.depth <= 14:
            raise ConfigError("depth", "must be in 0..14")
        if self.n not in (1, 2):
            raise ConfigError("n", "must be 1 or 2")
        if not 1 <= self.d <= 4:
            raise ConfigError("d", "must be in 1..4")
        if not self.p >= 1:
            raise ConfigError("p", "must be >= 1")
        if self.trials < 1:
            raise ConfigError("trials", "must be >= 1")
        if self.K < 1:
            raise ConfigError("K", "must be >= 1")
        if self.strategy not in ("nested-halves", "random", "stopping-time", "single"):
            raise ConfigError("strategy", f"unknown strategy {self.strategy!r}")
        parse_weight_spec(self.weight)

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        known = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, raw in data.items():
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
            kw[key] = _coerce(key, raw, getattr(cls, key))
        return cls(**kw)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        data = {}
        for num, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ConfigError(f"line {num}", "expected key=value")
            data[key.strip()] = val.strip()
        return cls.from_mapping(data)


def _coerce(key, raw, default):
    if not isinstance(raw, str):
        return raw
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r}") from None
    return raw


_SPEC = re.compile(r"^\s*([a-z-]+)\s*(?:\((.*)\))?\s*$")


def parse_weight_spec(spec: str) -> tuple[str, list[float]]:
    m = _SPEC.match(spec)
    if not m:
        raise ConfigError("weight", f"bad weight spec {spec!r}")
    name, args = m.group(1), m.group(2)
    vals = [float(a) for a in args.split(",") if a.strip()] if args else []
    arity = {"constant": (0, 0), "power": (1, 1), "random": (0, 2), "diagonal": (1, 4),
             "rotated-diagonal": (0, 3)}
    if name not in arity:
        raise ConfigError("weight", f"unknown generator {name!r}")
    lo, hi = arity[name]
    if not lo <= len(vals) <= hi:
        raise ConfigError("weight", f"{name} takes {lo}..{hi} arguments")
    return name, vals


def power_weight(grid: DyadicGrid, a: float) -> np.ndarray:
    """``(|x| + 2^{-L})^a`` at cell centres, ``|x|`` the distance to the origin."""
    r = np.linalg.norm(grid.cell_centers(), axis=1)
    return (r + 2.0 ** (-grid.depth)) ** a


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def make_weight(spec: str, grid: DyadicGrid, d: int = 1) -> Field:
    """Scalar weight for ``d = 1``, matrix weight otherwise."""
    name, args = parse_weight_spec(spec)
    n = grid.n_cells
    if name == "constant":
        vals = np.ones((n, d))
    elif name == "power":
        vals = np.repeat(power_weight(grid, args[0])[:, None], d, axis=1)
    elif name == "random":
        seed = int(args[0]) if args else 0
        rough = args[1] if len(args) > 1 else 1.0
        vals = np.exp(rough * np.random.default_rng(seed).standard_normal((n, d)))
    elif name == "diagonal":
        exps = (args * d)[:d] if len(args) < d else args[:d]
        vals = np.stack([power_weight(grid, a) for a in exps], axis=1)
    else:
        seed = int(args[0]) if args else 0
        a = args[1] if len(args) > 1 else 0.4
        b = args[2] if len(args) > 2 else a
        if d == 1:
            return Field(grid, power_weight(grid, a))
        exps = [a, -b] + [0.0] * (d - 2)
        vals = np.stack([power_weight(grid, e) for e in exps], axis=1)
        R = np.eye(d)
        R[:2, :2] = rotation(np.random.default_rng(seed).uniform(0, np.pi))
        W = np.einsum("ij,nj,kj->nik", R, vals, R)
        return Field(grid, W, "matrix")
    if d == 1:
        return Field(grid, vals[:, 0])
    return Field(grid, np.einsum("ni,ij->nij", vals, np.eye(d)), "matrix")
