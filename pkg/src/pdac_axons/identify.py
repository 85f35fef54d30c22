"""Profile-likelihood identifiability: grids, multi-start profiles,
classification, iterative fixing and the validation histogram."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgument, ProfileInvalid, ToolkitError
from .optimizer import Dimension, OptOptions, SearchSpace, minimize

IDENTIFIABLE = "identifiable"
PRACTICAL = "practically-non-identifiable"
STRUCTURAL = "structurally-non-identifiable"


def task_seed(master: int, *key: int) -> int:
    """Counter-based seed: independent of the order in which tasks run."""
    ss = np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def grid(param_id: str, space: SearchSpace, n: int = 20) -> np.ndarray:
    """``n`` values evenly spaced in the parameter's scale, endpoints included."""
    d = space.dim(param_id)
    if d.frozen is not None:
        raise InvalidArgument(f"{param_id} is frozen and cannot be profiled")
    if n < 2:
        raise InvalidArgument("a grid needs at least two values")
    lo, hi = d.coord_bounds
    vals = np.array([d.from_coord(c) for c in np.linspace(lo, hi, n)])
    vals[0], vals[-1] = d.lower, d.upper
    return vals


@dataclass
class ProfileResult:
    param_id: str
    grid: np.ndarray
    samples: np.ndarray
    classification: str
    argmin: float
    confidence_range: tuple
    failures: np.ndarray = field(default=None)

    @property
    def min(self) -> np.ndarray:
        return np.nanmin(self.samples, axis=1)

    @property
    def q1(self) -> np.ndarray:
        return np.nanpercentile(self.samples, 25, axis=1)

    @property
    def median(self) -> np.ndarray:
        return np.nanmedian(self.samples, axis=1)

    @property
    def q3(self) -> np.ndarray:
        return np.nanpercentile(self.samples, 75, axis=1)

    def to_dict(self) -> dict:
        return {
            "param_id": self.param_id, "grid": self.grid.tolist(),
            "samples": [[None if np.isnan(v) else float(v) for v in row] for row in self.samples],
            "min": self.min.tolist(), "q1": self.q1.tolist(), "median": self.median.tolist(),
            "q3": self.q3.tolist(), "classification": self.classification,
            "argmin": self.argmin, "confidence_range": list(self.confidence_range),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("value", "min", "q1", "median", "q3"))
        for row in zip(self.grid, self.min, self.q1, self.median, self.q3):
            w.writerow([f"{v:.17g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def classify(median: np.ndarray, margin: float = 1.0, flatness_tol: float = 0.5) -> str:
    """Identifiable: interior argmin at least ``margin`` below both endpoints.
    Structurally non-identifiable: median range below ``flatness_tol``.
    Anything else is practically non-identifiable."""
    m = np.asarray(median)
    if np.ptp(m) < flatness_tol:
        return STRUCTURAL
    i = int(np.argmin(m))
    if 0 < i < len(m) - 1 and m[i] <= min(m[0], m[-1]) - margin:
        return IDENTIFIABLE
    return PRACTICAL


def confidence_range(values: np.ndarray, median: np.ndarray, margin: float = 1.0) -> tuple:
    """Contiguous grid interval around the argmin whose median is within
    ``margin`` of the minimum."""
    i = int(np.argmin(median))
    ok = median <= median[i] + margin
    lo = i
    while lo > 0 and ok[lo - 1]:
        lo -= 1
    hi = i
    while hi < len(median) - 1 and ok[hi + 1]:
        hi += 1
    return (float(values[lo]), float(values[hi]))


@dataclass
class ProfileOptions:
    n_grid: int = 20
    restarts: int = 50
    opt: OptOptions = field(default_factory=OptOptions)
    margin: float = 1.0
    flatness_tol: float = 0.5

    @classmethod
    def cheap(cls) -> "ProfileOptions":
        return cls(n_grid=20, restarts=8, opt=OptOptions(max_generations=300))


def _run_task(args):
    objective, space, seed, opt = args
    try:
        return minimize(objective, space, seed, opt).best_cost
    except ToolkitError:
        return np.nan


def profile(param_id: str, values, objective: Callable, space: SearchSpace, seed: int,
            restarts: int = 50, frozen: dict | None = None, opts: ProfileOptions | None = None,
            mapper: Callable | None = None, key: tuple = ()) -> ProfileResult:
    """Re-optimise all other free parameters at each value of ``param_id``."""
    opts = ProfileOptions() if opts is None else opts
    mapper = map if mapper is None else mapper
    frozen = dict(frozen or {})
    if param_id in frozen:
        raise InvalidArgument(f"{param_id} cannot be both profiled and frozen")
    values = np.asarray(values, dtype=np.float64)
    base = space.with_frozen(frozen)
    pidx = [d.name for d in space.dims].index(param_id)
    tasks = []
    for i, v in enumerate(values):
        sub = base.with_frozen({param_id: float(v)})
        for r in range(restarts):
            tasks.append((objective, sub, task_seed(seed, *key, pidx, i, r), opts.opt))
    costs = np.array(list(mapper(_run_task, tasks)), dtype=np.float64).reshape(len(values), restarts)
    failures = np.isnan(costs).sum(axis=1)
    if np.any(failures > restarts / 2):
        bad = values[failures > restarts / 2]
        raise ProfileInvalid(f"{param_id}: more than half of the restarts failed at {bad.tolist()}")
    med = np.nanmedian(costs, axis=1)
    cls = classify(med, opts.margin, opts.flatness_tol)
    return ProfileResult(param_id, values, costs, cls, float(values[int(np.argmin(med))]),
                         confidence_range(values, med, opts.margin), failures)


@dataclass
class TrialResult:
    trial: int
    profiles: dict
    identified: dict

    def to_dict(self) -> dict:
        return {"trial": self.trial, "identified": self.identified,
                "classifications": {k: v.classification for k, v in self.profiles.items()}}


def pipeline(objective: Callable, space: SearchSpace, seed: int, trials: int = 3,
             opts: ProfileOptions | None = None, mapper: Callable | None = None,
             only: list | None = None, progress: Callable | None = None) -> list:
    """Profile every free parameter (or those in ``only``), freeze the
    identifiable ones at their argmin, and repeat on the reduced space."""
    opts = ProfileOptions() if opts is None else opts
    frozen = {}
    results = []
    for trial in range(1, trials + 1):
        current = space.with_frozen(frozen)
        profiles = {}
        for name in current.names:
            if only and name not in only:
                continue
            vals = grid(name, current, opts.n_grid)
            profiles[name] = profile(name, vals, objective, current, seed, opts.restarts,
                                     None, opts, mapper, key=(trial,))
            if progress is not None:
                progress(trial, name, profiles[name])
        new = {n: r.argmin for n, r in profiles.items() if r.classification == IDENTIFIABLE}
        results.append(TrialResult(trial, profiles, new))
        if not new:
            break
        frozen.update(new)
    return results


@dataclass
class HistogramSummary:
    costs: np.ndarray
    counts: np.ndarray
    edges: np.ndarray

    @property
    def quartiles(self) -> tuple:
        return tuple(float(v) for v in np.percentile(self.costs, [25, 50, 75]))

    @property
    def median(self) -> float:
        return float(np.median(self.costs))

    @property
    def iqr(self) -> float:
        q1, _, q3 = self.quartiles
        return q3 - q1

    @property
    def mode(self) -> float:
        i = int(np.argmax(self.counts))
        return float(0.5 * (self.edges[i] + self.edges[i + 1]))

    def to_dict(self) -> dict:
        return {"costs": self.costs.tolist(), "counts": self.counts.tolist(),
                "edges": self.edges.tolist(), "quartiles": list(self.quartiles),
                "mode": self.mode}


def validation_histogram(objective: Callable, space: SearchSpace, seed: int, samples: int = 200,
                         opt: OptOptions | None = None, mapper: Callable | None = None,
                         bins: int = 20) -> HistogramSummary:
    """Minimise from ``samples`` uniform random starts over the free
    parameters of ``space`` (frozen ones stay fixed)."""
    opt = OptOptions() if opt is None else opt
    mapper = map if mapper is None else mapper
    tasks = [(objective, space, task_seed(seed, 9, s), opt) for s in range(samples)]
    costs = np.array(list(mapper(_run_task, tasks)), dtype=np.float64)
    costs = costs[~np.isnan(costs)]
    counts, edges = np.histogram(costs, bins=bins)
    return HistogramSummary(costs, counts, edges)


def toy_objective(x) -> float:
    """(theta1 - 2)^2 + 0 * theta2: theta1 identifiable, theta2 not."""
    x = np.asarray(x, dtype=np.float64)
    return float((x[0] - 2.0) ** 2 + 0.0 * x[1])


def toy_space() -> SearchSpace:
    return SearchSpace([Dimension("theta1", 0.0, 4.0), Dimension("theta2", 0.0, 4.0)])
