"""Observations, chronology, and the continuous and discrete calibration costs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import _kernels as K
from .errors import DegenerateState, InvalidArgument, SolverError, WeightUndefined
from .model import ParameterVector, State, default_initial_state
from .solver import SolverConfig, integrate, run_kernel, sample_many

OBS_KEYS = ("y1", "y2", "y3", "y4", "y5", "y6", "a1_eq", "tf")
DATA_LABELS = ("q0", "q1", "q2", "q3", "a1", "a2")
PENALTY_LABELS = ("q1", "q2", "q3", "a1", "a2")


@dataclass(frozen=True)
class ObservationSet:
    """Harvest-time data: four cell proportions and two axon densities."""

    y_star: tuple
    a1_eq: float = 0.0099
    t_f: float = 45.0
    half_window: float = 3.0

    def __post_init__(self):
        y = tuple(float(v) for v in self.y_star)
        if len(y) != 6 or not all(math.isfinite(v) for v in y):
            raise InvalidArgument("y_star needs six finite values")
        object.__setattr__(self, "y_star", y)
        if any(v < 0 or v > 1 for v in y[:4]):
            raise InvalidArgument("cell proportions must lie in [0, 1]")
        if abs(sum(y[:4]) - 1.0) > 0.02:
            raise InvalidArgument(f"cell proportions sum to {sum(y[:4])}, expected 1 +- 0.02")
        if y[4] < 0 or y[5] < 0 or self.a1_eq < 0:
            raise InvalidArgument("axon densities must be nonnegative")
        if not self.half_window > 0:
            raise InvalidArgument("half_window must be positive")

    @property
    def window(self) -> tuple:
        return (self.t_f - self.half_window, self.t_f + self.half_window)

    @classmethod
    def from_csv(cls, path, half_window: float = 3.0) -> "ObservationSet":
        return cls._from_rows(Path(path).read_text(), half_window)

    @classmethod
    def _from_rows(cls, text: str, half_window: float) -> "ObservationSet":
        rows = list(csv.reader(text.splitlines()))
        if not rows or [c.strip() for c in rows[0]] != ["key", "value"]:
            raise InvalidArgument("observation CSV must start with header 'key,value'")
        vals = {}
        for row in rows[1:]:
            if not row:
                continue
            key, value = row[0].strip(), row[1].strip()
            if key not in OBS_KEYS:
                raise InvalidArgument(f"unknown observation key {key!r}")
            vals[key] = float(value)
        missing = [k for k in OBS_KEYS if k not in vals]
        if missing:
            raise InvalidArgument(f"missing observation key(s): {', '.join(missing)}")
        return cls(tuple(vals[f"y{i}"] for i in range(1, 7)), vals["a1_eq"], vals["tf"],
                   half_window)

    @classmethod
    def fixture(cls) -> "ObservationSet":
        """Bundled data: measured axon densities with a synthetic (non-measured)
        stand-in for the four cell proportions."""
        text = resources.files("pdac_axons").joinpath("data", "observations_fixture.csv").read_text()
        return cls._from_rows(text, 3.0)


@dataclass(frozen=True)
class Chronology:
    """Initial time and first appearance of ADM, PanIN, PDAC, A1 and A2 (days)."""

    t0: float = 10.0
    t1: float = 17.0
    t2: float = 21.0
    t3: float = 35.0
    t4: float = 18.0
    t5: float = 30.0

    def __post_init__(self):
        ts = self.appearances
        if not all(math.isfinite(v) for v in ts + (self.t0,)):
            raise InvalidArgument("chronology times must be finite")
        if not self.t0 < min(ts):
            raise InvalidArgument("t0 must precede every appearance time")

    @property
    def appearances(self) -> tuple:
        return (self.t1, self.t2, self.t3, self.t4, self.t5)

    def check_against(self, obs: ObservationSet):
        if not max(self.appearances) < obs.t_f:
            raise InvalidArgument("appearance times must precede t_f")


@dataclass(frozen=True)
class CostBreakdown:
    data_terms: tuple
    penalty_terms: tuple
    total: float

    def to_dict(self) -> dict:
        return {"data_terms": dict(zip(DATA_LABELS, self.data_terms)),
                "penalty_terms": dict(zip(PENALTY_LABELS, self.penalty_terms)),
                "total": self.total}


def proportions(s) -> np.ndarray:
    """Share of each cell compartment in the total cell density."""
    y = s.to_array() if isinstance(s, State) else np.asarray(s, dtype=np.float64)
    q = y[..., :4]
    tot = q.sum(axis=-1, keepdims=True)
    if np.any(~(tot > 0)):
        raise DegenerateState("total cell density is zero")
    return q / tot


def weights(obs: ObservationSet, chrono: Chronology, numerators: dict | None = None):
    """Normalisation coefficients (a, b).

    a_k = 1 / (window length * y*_{k+1}), k = 0..5, and
    b_k = f_k(y*_k) / (t_k - t0), k = 1..5, with f_k the identity unless
    ``numerators[k]`` overrides f_k(y*_k).
    """
    y = obs.y_star
    if any(v == 0 for v in y):
        raise WeightUndefined("an observation is zero; its weight is undefined")
    width = 2.0 * obs.half_window
    a = np.array([1.0 / (width * v) for v in y])
    numerators = numerators or {}
    b = np.empty(5)
    for k, tk in enumerate(chrono.appearances, start=1):
        b[k - 1] = numerators.get(k, y[k - 1]) / (tk - chrono.t0)
    return a, b


def _integral_spec(obs: ObservationSet, chrono: Chronology):
    w0, w1 = obs.window
    y = obs.y_star
    lo = [w0] * 6 + [chrono.t0] * 5
    hi = [w1] * 6 + list(chrono.appearances)
    comp = [K.PROP0 + k for k in range(4)] + [4, 5, 1, 2, 3, 4, 5]
    target = list(y[:4]) + [y[4] - obs.a1_eq, y[5]] + [0.0] * 5
    power = [2] * 11
    return (np.array(lo), np.array(hi), np.array(comp, dtype=np.int64), np.array(target),
            np.array(power, dtype=np.int64))


def continuous_cost(p: ParameterVector, obs: ObservationSet, chrono: Chronology | None = None,
                    cfg: SolverConfig | None = None, init: State | None = None,
                    numerators: dict | None = None, refine: int = 1) -> CostBreakdown:
    """Windowed data misfit plus chronological penalties.

    Every integral is accumulated with 5-point Gauss-Legendre on each solver
    step (split into ``refine`` equal pieces) while integrating.
    """
    chrono = Chronology() if chrono is None else chrono
    cfg = SolverConfig() if cfg is None else cfg
    init = default_initial_state() if init is None else init
    chrono.check_against(obs)
    a, b = weights(obs, chrono, numerators)
    spec = _integral_spec(obs, chrono)
    t_end = obs.window[1]
    _, _, _, acc = run_kernel(p, init, chrono.t0, t_end, cfg, False, spec, refine)
    data = tuple(float(v) for v in a * acc[:6])
    pen = tuple(float(v) for v in b * acc[6:])
    return CostBreakdown(data, pen, float(sum(data) + sum(pen)))


def rectangle_weights(grid) -> np.ndarray:
    """Cell widths for a grid of cell midpoints (uniform grids give the spacing)."""
    g = np.asarray(grid, dtype=np.float64)
    if g.size == 1:
        return np.ones(1)
    mids = 0.5 * (g[1:] + g[:-1])
    edges = np.concatenate([[g[0] - (mids[0] - g[0])], mids, [g[-1] + (g[-1] - mids[-1])]])
    return np.diff(edges)


def _residuals(y, obs: ObservationSet, chrono: Chronology, s):
    """Per-point, per-coordinate residuals of the model function and the
    coefficient (a or b) attached to each, zero where the point is unused."""
    a, b = weights(obs, chrono)
    w0, w1 = obs.window
    res = np.zeros((len(s), 6))
    coef = np.zeros((len(s), 6))
    in_w = (s >= w0) & (s <= w1)
    if np.any(in_w):
        props = proportions(y[in_w])
        res[in_w, :4] = props - np.array(obs.y_star[:4])
        res[in_w, 4] = y[in_w, 4] + obs.a1_eq - obs.y_star[4]
        res[in_w, 5] = y[in_w, 5] - obs.y_star[5]
        coef[in_w] = a
    for k, tk in enumerate(chrono.appearances, start=1):
        m = (s >= chrono.t0) & (s <= tk) & ~in_w
        res[m, k] = y[m, k]
        coef[m, k] = b[k - 1]
    return res, coef


def discrete_cost(p: ParameterVector, obs: ObservationSet, chrono: Chronology | None,
                  grid, c=None, cfg: SolverConfig | None = None,
                  init: State | None = None) -> float:
    """Sum over grid points of ||g(s_i) - y~_i||^2 / c_i.

    ``c`` may be per point, shape (N,), or per point and coordinate, shape
    (N, 6). By default c_{i,k} = 1 / (w_i * coefficient_k) with w_i the
    rectangle weights of the grid, so the sum approximates the continuous
    cost.
    """
    chrono = Chronology() if chrono is None else chrono
    cfg = SolverConfig() if cfg is None else cfg
    init = default_initial_state() if init is None else init
    s = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    w0, w1 = obs.window
    if np.any(s < chrono.t0) or np.any(s > w1):
        raise InvalidArgument("grid must lie inside [t0, t_f + half_window]")
    traj = integrate(p, init, chrono.t0, w1, cfg)
    y = sample_many(traj, s)
    res, coef = _residuals(y, obs, chrono, s)
    if c is None:
        wq = rectangle_weights(s)
        terms = wq[:, None] * coef * res ** 2
    else:
        c = np.asarray(c, dtype=np.float64)
        if c.shape not in ((len(s),), (len(s), 6)):
            raise InvalidArgument(f"weights of shape {c.shape} do not match a grid of {len(s)} points")
        if np.any(~(c > 0)):
            raise InvalidArgument("weights c must be positive")
        cc = c[:, None] if c.ndim == 1 else c
        used = coef > 0
        terms = np.where(used, res ** 2 / cc, 0.0)
    return float(terms.sum())


@dataclass
class ModelObjective:
    """Picklable cost of a parameter vector, for optimisation and profiling.

    Integration failures (stiffness, invariant violations) return
    ``failure_cost`` so a search can carry on past pathological corners.
    """

    obs: ObservationSet
    chrono: Chronology = field(default_factory=Chronology)
    cfg: SolverConfig = field(default_factory=SolverConfig)
    init: State = field(default_factory=default_initial_state)
    numerators: dict | None = None
    kind: str = "continuous"
    grid: tuple | None = None
    failure_cost: float = 1e6

    def __post_init__(self):
        if self.kind not in ("continuous", "discrete"):
            raise InvalidArgument(f"unknown cost kind {self.kind!r}")
        if self.kind == "discrete" and self.grid is None:
            lo, hi = self.chrono.t0, self.obs.window[1]
            self.grid = tuple(np.arange(lo + 0.5, hi, 1.0))

    def __call__(self, p: ParameterVector) -> float:
        try:
            if self.kind == "continuous":
                return continuous_cost(p, self.obs, self.chrono, self.cfg, self.init,
                                       self.numerators).total
            return discrete_cost(p, self.obs, self.chrono, self.grid, None, self.cfg, self.init)
        except (SolverError, DegenerateState):
            return self.failure_cost
