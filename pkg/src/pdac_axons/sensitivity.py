"""Variance-based (Sobol) sensitivity of the PDAC burden to the axon-effect
parameters: Saltelli design, first-order and total-effect indices with
bootstrap confidence intervals."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import DegenerateState, InvalidArgument, UndefinedIndices
from .model import ParameterVector, State, default_initial_state, load_ranges
from .solver import SolverConfig, run_kernel

AXON_INPUTS = ("beta1", "beta2", "delta2", "tauA1C", "tauA2C")


def axon_ranges(names: Sequence[str] = AXON_INPUTS) -> list:
    """(lower, upper) boxes of the inputs, using positive floors where needed."""
    r = load_ranges()
    return [(r[n].effective_lower, r[n].upper) for n in names]


def _q3_integral(p, init, t0, tF, cfg):
    spec = (np.array([t0]), np.array([tF]), np.array([3], dtype=np.int64), np.zeros(1),
            np.array([1], dtype=np.int64))
    return float(run_kernel(p, init, t0, tF, cfg, False, spec)[3][0])


@dataclass
class BurdenOutput:
    """V(theta) = 1 - int Q3(theta) / int Q3(control) over [t0, tF].

    Positive values mean the substitution inhibits PDAC growth, negative
    values mean it promotes it. Picklable, so it can be mapped over a pool.
    """

    control: ParameterVector
    names: tuple = AXON_INPUTS
    cfg: SolverConfig = field(default_factory=SolverConfig)
    init: State = field(default_factory=default_initial_state)
    t0: float = 10.0
    tF: float = 70.0

    def __post_init__(self):
        self.names = tuple(self.names)
        self._den = _q3_integral(self.control, self.init, self.t0, self.tF, self.cfg)
        if not self._den > 0:
            raise DegenerateState("control PDAC integral is zero")

    def params(self, theta) -> ParameterVector:
        return self.control.replace(**{n: float(v) for n, v in zip(self.names, theta)})

    def __call__(self, theta) -> float:
        num = _q3_integral(self.params(theta), self.init, self.t0, self.tF, self.cfg)
        return 1.0 - num / self._den


def output_V(vartheta, control: ParameterVector, cfg: SolverConfig | None = None,
             init: State | None = None, t0: float = 10.0, tF: float = 70.0,
             names: Sequence[str] = AXON_INPUTS) -> float:
    cfg = SolverConfig() if cfg is None else cfg
    init = default_initial_state() if init is None else init
    return BurdenOutput(control, tuple(names), cfg, init, t0, tF)(vartheta)


def interpret_V(v: float, eps: float = 0.01) -> str:
    if v > eps:
        return "inhibiting"
    if v < -eps:
        return "protumoral"
    return "neutral"


@dataclass
class SaltelliDesign:
    A: np.ndarray
    B: np.ndarray
    AB: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def k(self) -> int:
        return self.A.shape[1]

    @property
    def points(self) -> np.ndarray:
        """Rows in evaluation order: A, B, then A_B^(1) .. A_B^(k)."""
        return np.vstack([self.A, self.B, self.AB.reshape(-1, self.k)])


def saltelli_sample(ranges: Sequence[tuple], N: int, seed: int) -> SaltelliDesign:
    """Base matrices A, B from a scrambled Sobol sequence in 2k dimensions,
    plus the k matrices A_B^(i) (A with column i taken from B)."""
    k = len(ranges)
    if N < 64:
        raise InvalidArgument("base sample size must be at least 64")
    lo = np.array([r[0] for r in ranges], dtype=np.float64)
    hi = np.array([r[1] for r in ranges], dtype=np.float64)
    if k == 0 or np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)) or np.any(lo >= hi):
        raise InvalidArgument("each range needs finite lower < upper")
    sob = qmc.Sobol(d=2 * k, scramble=True, seed=np.random.default_rng(seed))
    if N & (N - 1) == 0:
        base = sob.random_base2(int(np.log2(N)))
    else:
        base = sob.random(N)
    A = lo + base[:, :k] * (hi - lo)
    B = lo + base[:, k:] * (hi - lo)
    AB = np.repeat(A[None], k, axis=0)
    for i in range(k):
        AB[i, :, i] = B[:, i]
    return SaltelliDesign(A, B, AB)


@dataclass
class SobolResult:
    names: tuple
    S1: np.ndarray
    S1_lo: np.ndarray
    S1_hi: np.ndarray
    ST: np.ndarray
    ST_lo: np.ndarray
    ST_hi: np.ndarray
    N: int
    evaluations: int

    def to_dict(self) -> dict:
        return {"names": list(self.names), "S1": self.S1.tolist(), "S1_lo": self.S1_lo.tolist(),
                "S1_hi": self.S1_hi.tolist(), "ST": self.ST.tolist(),
                "ST_lo": self.ST_lo.tolist(), "ST_hi": self.ST_hi.tolist(), "N": self.N,
                "evaluations": self.evaluations}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("input", "S1", "S1_lo", "S1_hi", "ST", "ST_lo", "ST_hi"))
        for i, n in enumerate(self.names):
            w.writerow([n] + [f"{a[i]:.17g}" for a in (self.S1, self.S1_lo, self.S1_hi,
                                                        self.ST, self.ST_lo, self.ST_hi)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _estimates(fA, fB, fAB):
    V = np.var(np.concatenate([fA, fB]))
    if not V > 0:
        raise UndefinedIndices("output variance is zero")
    s1 = np.mean(fB * (fAB - fA), axis=1) / V
    st = 0.5 * np.mean((fA - fAB) ** 2, axis=1) / V
    return s1, st


def sobol_indices(design: SaltelliDesign, outputs, bootstrap: int = 200, seed: int = 0,
                  names: Sequence[str] | None = None, level: float = 0.95) -> SobolResult:
    """First-order indices (Saltelli 2010 estimator) and total-effect
    indices (Jansen estimator), with percentile bootstrap intervals."""
    N, k = design.n, design.k
    y = np.asarray(outputs, dtype=np.float64)
    if y.shape != (N * (k + 2),):
        raise InvalidArgument(f"expected {N * (k + 2)} outputs, got {y.shape}")
    if np.any(~np.isfinite(y)):
        raise InvalidArgument("outputs must be finite")
    fA, fB, fAB = y[:N], y[N:2 * N], y[2 * N:].reshape(k, N)
    s1, st = _estimates(fA, fB, fAB)
    rng = np.random.default_rng(seed)
    bs1 = np.empty((bootstrap, k))
    bst = np.empty((bootstrap, k))
    for b in range(bootstrap):
        idx = rng.integers(0, N, N)
        try:
            bs1[b], bst[b] = _estimates(fA[idx], fB[idx], fAB[:, idx])
        except UndefinedIndices:
            bs1[b] = bst[b] = np.nan
    a = 100 * (1 - level) / 2
    s1_lo, s1_hi = np.nanpercentile(bs1, [a, 100 - a], axis=0)
    st_lo, st_hi = np.nanpercentile(bst, [a, 100 - a], axis=0)
    names = tuple(names) if names is not None else tuple(f"x{i + 1}" for i in range(k))
    return SobolResult(names, s1, s1_lo, s1_hi, st, st_lo, st_hi, N, N * (k + 2))


def run_sobol(control: ParameterVector, N: int = 512, seed: int = 0, bootstrap: int = 200,
              cfg: SolverConfig | None = None, init: State | None = None,
              mapper: Callable | None = None) -> SobolResult:
    """Sobol indices of V over the axon-effect inputs around ``control``."""
    cfg = SolverConfig() if cfg is None else cfg
    init = default_initial_state() if init is None else init
    mapper = map if mapper is None else mapper
    f = BurdenOutput(control, AXON_INPUTS, cfg, init)
    design = saltelli_sample(axon_ranges(), N, seed)
    y = np.array(list(mapper(f, list(design.points))), dtype=np.float64)
    return sobol_indices(design, y, bootstrap, seed, AXON_INPUTS)


def ishigami(x, a: float = 7.0, b: float = 0.1) -> float:
    return float(np.sin(x[0]) + a * np.sin(x[1]) ** 2 + b * x[2] ** 4 * np.sin(x[0]))
