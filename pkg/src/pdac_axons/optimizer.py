"""Bounded (mu/mu_w, lambda)-CMA-ES over a log10/linear scaled search space."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationError, InvalidArgument
from .model import FREE_NAMES, ParameterVector, load_ranges


@dataclass(frozen=True)
class Dimension:
    name: str
    lower: float
    upper: float
    scale: str = "linear"
    frozen: float | None = None

    def __post_init__(self):
        if self.scale not in ("linear", "log10"):
            raise InvalidArgument(f"{self.name}: unknown scale {self.scale!r}")
        if not self.lower < self.upper:
            raise InvalidArgument(f"{self.name}: lower must be below upper")
        if self.scale == "log10" and not self.lower > 0:
            raise InvalidArgument(f"{self.name}: log10 scale needs a positive lower bound")

    def to_coord(self, v: float) -> float:
        return math.log10(v) if self.scale == "log10" else float(v)

    def from_coord(self, c: float) -> float:
        return 10.0 ** c if self.scale == "log10" else float(c)

    @property
    def coord_bounds(self) -> tuple:
        return (self.to_coord(self.lower), self.to_coord(self.upper))


class SearchSpace:
    """Ordered box of named parameters; frozen ones are excluded from search.

    With a ``base`` ParameterVector, decode returns a ParameterVector where the
    searched and frozen names are substituted into ``base``; without one it
    returns the natural-unit values of every dimension (frozen included) as an
    array.
    """

    def __init__(self, dims: Sequence[Dimension], base: ParameterVector | None = None):
        names = [d.name for d in dims]
        if len(set(names)) != len(names):
            raise InvalidArgument("duplicate dimension names")
        self.dims = tuple(dims)
        self.base = base
        self.free = tuple(d for d in self.dims if d.frozen is None)
        lo, hi = zip(*(d.coord_bounds for d in self.free)) if self.free else ((), ())
        self.lower = np.array(lo, dtype=np.float64)
        self.upper = np.array(hi, dtype=np.float64)

    @property
    def names(self) -> tuple:
        return tuple(d.name for d in self.free)

    @property
    def n(self) -> int:
        return len(self.free)

    def dim(self, name: str) -> Dimension:
        for d in self.dims:
            if d.name == name:
                return d
        raise InvalidArgument(f"unknown dimension {name!r}")

    @classmethod
    def box(cls, n: int, lower: float, upper: float) -> "SearchSpace":
        return cls([Dimension(f"x{i}", lower, upper) for i in range(n)])

    @classmethod
    def model(cls, base: ParameterVector, ranges: dict | None = None,
              frozen: dict | None = None) -> "SearchSpace":
        """The 18 free model parameters on their admissible ranges."""
        ranges = load_ranges() if ranges is None else ranges
        frozen = frozen or {}
        unknown = set(frozen) - set(FREE_NAMES)
        if unknown:
            raise InvalidArgument(f"cannot freeze unknown parameter(s) {sorted(unknown)}")
        dims = [Dimension(n, ranges[n].effective_lower, ranges[n].upper, ranges[n].scale,
                          frozen.get(n)) for n in FREE_NAMES]
        return cls(dims, base)

    def with_frozen(self, values: dict) -> "SearchSpace":
        dims = [Dimension(d.name, d.lower, d.upper, d.scale, values.get(d.name, d.frozen))
                for d in self.dims]
        return SearchSpace(dims, self.base)

    def encode(self, p) -> np.ndarray:
        """Search coordinates of ``p`` (a ParameterVector, mapping or array)."""
        if isinstance(p, ParameterVector):
            get = lambda d: getattr(p, d.name)
        elif isinstance(p, dict):
            get = lambda d: p[d.name]
        else:
            arr = np.asarray(p, dtype=np.float64)
            if arr.shape != (self.n,):
                raise InvalidArgument(f"expected {self.n} values")
            vals = dict(zip(self.names, arr))
            get = lambda d: vals[d.name]
        out = np.empty(self.n)
        for i, d in enumerate(self.free):
            v = float(get(d))
            if not (d.lower <= v <= d.upper):
                raise InvalidArgument(f"{d.name} = {v} outside [{d.lower}, {d.upper}]")
            out[i] = d.to_coord(v)
        return out

    def decode_values(self, x) -> dict:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise InvalidArgument(f"expected a search vector of length {self.n}")
        if np.any(x < self.lower - 1e-12) or np.any(x > self.upper + 1e-12):
            raise InvalidArgument("search vector outside the box")
        vals = {d.name: d.from_coord(c) for d, c in zip(self.free, x)}
        for d in self.dims:
            if d.frozen is not None:
                vals[d.name] = d.frozen
        return vals

    def decode(self, x):
        vals = self.decode_values(x)
        if self.base is not None:
            return self.base.replace(**vals)
        return np.array([vals[d.name] for d in self.dims])

    def to_unit(self, x) -> np.ndarray:
        return (np.asarray(x) - self.lower) / (self.upper - self.lower)

    def from_unit(self, u) -> np.ndarray:
        x = self.lower + np.asarray(u) * (self.upper - self.lower)
        return np.clip(x, self.lower, self.upper)


def reflect_unit(u: np.ndarray) -> np.ndarray:
    """Fold coordinates back into [0, 1] by mirror reflection at the faces."""
    r = np.mod(u, 2.0)
    return np.where(r > 1.0, 2.0 - r, r)


@dataclass
class OptOptions:
    population: int | None = None
    max_generations: int = 1000
    max_evaluations: int | None = None
    stop_window: int = 40
    stop_tol: float = 1e-3
    sigma0: float = 0.3
    min_sigma: float = 1e-12
    max_condition: float = 1e14
    x0: np.ndarray | None = None


@dataclass
class OptResult:
    best_point: object
    best_x: np.ndarray
    best_cost: float
    evaluations: int
    generations: int
    termination: str
    trace: list = field(default_factory=list, repr=False)

    def trace_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("generation", "best_cost", "sigma"))
        for g, c, s, *_ in self.trace:
            w.writerow((g, f"{c:.17g}", f"{s:.17g}"))
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        bp = self.best_point
        if isinstance(bp, ParameterVector):
            bp = bp.to_dict()
        elif isinstance(bp, np.ndarray):
            bp = bp.tolist()
        return {"best_point": bp, "best_x": self.best_x.tolist(), "best_cost": self.best_cost,
                "evaluations": self.evaluations, "generations": self.generations,
                "termination": self.termination}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def minimize(objective: Callable, space: SearchSpace, seed: int,
             opts: OptOptions | None = None, mapper: Callable | None = None) -> OptResult:
    """Minimise ``objective(space.decode(x))`` with CMA-ES.

    The strategy runs in the unit cube of the search coordinates; samples are
    mirrored back inside it. A run stops ("converged") once at least
    ``stop_window`` generations have passed and every cost of the latest
    generation is within ``stop_tol`` of the best cost of the last
    ``stop_window`` generations. ``mapper`` (e.g. a pool's map) evaluates a
    generation; results do not depend on it.
    """
    opts = OptOptions() if opts is None else opts
    mapper = map if mapper is None else mapper
    rng = np.random.default_rng(seed)
    n = space.n
    if n == 0:
        pt = space.decode(np.zeros(0))
        cost = _checked(objective(pt), pt)
        return OptResult(pt, np.zeros(0), cost, 1, 0, "converged", [(0, cost, 0.0, 1.0)])

    lam = opts.population or 4 + int(3 * math.log(n))
    mu = lam // 2
    w = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mueff = 1.0 / np.sum(w ** 2)
    cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
    cs = (mueff + 2) / (n + mueff + 5)
    c1 = 2 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
    damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + cs
    chin = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))

    if opts.x0 is not None:
        mean = space.to_unit(space.encode(opts.x0) if not isinstance(opts.x0, np.ndarray)
                             else opts.x0)
    else:
        mean = rng.uniform(0.0, 1.0, n)
    sigma = opts.sigma0
    C = np.eye(n)
    B = np.eye(n)
    D = np.ones(n)
    pc = np.zeros(n)
    ps = np.zeros(n)
    eigen_gen = 0

    best_cost = math.inf
    best_x = None
    gen_best = []
    trace = []
    evals = 0
    termination = "budget"
    gen = 0
    while gen < opts.max_generations:
        if opts.max_evaluations is not None and evals + lam > opts.max_evaluations:
            break
        gen += 1
        z = rng.standard_normal((lam, n))
        x = mean + sigma * (z * D) @ B.T
        u = reflect_unit(x)
        points = [space.decode(space.from_unit(ui)) for ui in u]
        costs = np.array([_checked(c, pt) for c, pt in zip(mapper(objective, points), points)])
        evals += lam
        order = np.argsort(costs, kind="stable")
        if costs[order[0]] < best_cost:
            best_cost = float(costs[order[0]])
            best_x = space.from_unit(u[order[0]])
        gen_best.append(float(costs[order[0]]))

        y = (u[order[:mu]] - mean) / sigma
        yw = w @ y
        mean = mean + sigma * yw
        invsqrt = B @ np.diag(1 / D) @ B.T
        ps = (1 - cs) * ps + math.sqrt(cs * (2 - cs) * mueff) * (invsqrt @ yw)
        hsig = (np.linalg.norm(ps) / math.sqrt(1 - (1 - cs) ** (2 * gen)) / chin
                < 1.4 + 2 / (n + 1))
        pc = (1 - cc) * pc + hsig * math.sqrt(cc * (2 - cc) * mueff) * yw
        C = ((1 - c1 - cmu) * C + c1 * (np.outer(pc, pc) + (1 - hsig) * cc * (2 - cc) * C)
             + cmu * (y.T * w) @ y)
        sigma *= math.exp((cs / damps) * (np.linalg.norm(ps) / chin - 1))
        if gen - eigen_gen >= max(1, int(lam / (c1 + cmu) / n / 10)):
            eigen_gen = gen
            C = np.triu(C) + np.triu(C, 1).T
            evals_c, B = np.linalg.eigh(C)
            D = np.sqrt(np.maximum(evals_c, 1e-300))
        trace.append((gen, best_cost, sigma, float((D.max() / D.min()) ** 2)))

        if gen >= opts.stop_window:
            recent = min(gen_best[-opts.stop_window:])
            if np.max(np.abs(recent - costs)) < opts.stop_tol:
                termination = "converged"
                break
        if sigma * D.max() < opts.min_sigma or (D.max() / D.min()) ** 2 > opts.max_condition:
            termination = "stagnation"
            break

    if best_x is None:
        raise InvalidArgument("evaluation budget too small for one generation")
    return OptResult(space.decode(best_x), best_x, best_cost, evals, gen, termination, trace)


def _checked(cost, point) -> float:
    c = float(cost)
    if not math.isfinite(c):
        raise EvaluationError(f"objective returned {c}", point)
    return c

