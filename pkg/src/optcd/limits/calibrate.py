"""Calibration of the adjustment coefficient and the closed-form optimal value.

``g(c) = E_0[sum_{j<=T*(c)} v_j]`` increases with ``c``.  :func:`calibrate`
finds ``c`` with ``g(c)`` equal to a target by safeguarded regula falsi
(Illinois variant) on ``log c``.  Every candidate is scored on the same
simulated no-change paths (common random numbers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..models import ObservationModel
from ..simkit.engine import BLOCK_SIZE, Estimate, blocks
from ..statistics import pair_recursion
from ..weights import WeightedPair
from .equivalent import EquivalentLimitTable, equivalent_limits
from .grid import GridSpec, ValueGrid, backward_limits


class InfeasibleTarget(ValueError):
    """The target lies outside the attainable range of the generalized ARL0."""

    def __init__(self, target: float, lower: float, upper: float):
        super().__init__(f"target {target} outside the feasible interval ({lower:.6g}, {upper:.6g}): "
                         f"E_0 v_1 = {lower:.6g}, E_0 sum_(j<=N+1) v_j = {upper:.6g}")
        self.target, self.lower, self.upper = target, lower, upper


class CalibrationFailure(RuntimeError):
    pass


@dataclass
class CalibrationResult:
    c_gamma: float
    achieved_gamma: float
    target_gamma: float
    mc_stderr: float
    iterations: int
    feasible: tuple = (float("nan"), float("nan"))
    grid: Optional[ValueGrid] = field(default=None, repr=False)
    table: Optional[EquivalentLimitTable] = field(default=None, repr=False)
    history: list = field(default_factory=list, repr=False)


class NullPaths:
    """No-change paths drawn once and replayed for every candidate ``c``."""

    def __init__(self, model: ObservationModel, N: int, reps: int, seed: int, block_size: int = BLOCK_SIZE):
        self.model, self.N, self.reps, self.seed = model, N, reps, seed
        self.paths = [model.transform(model.noise(b.rng, b.size, N), N + 1)
                      for b in blocks(reps, seed, 0, block_size)]

    def v_totals(self, detector, pair: WeightedPair) -> np.ndarray:
        from ..simkit.metrics import pair_trace

        out = []
        for X in self.paths:
            T = detector.run_paths(X).T
            out.append(pair_trace(self.model, pair, X, self.N).v_total(T))
        return np.concatenate(out)

    def v_bounds(self, pair: WeightedPair) -> tuple[float, float]:
        """Monte Carlo ``E_0 v_1`` and ``E_0 sum_{j<=N+1} v_j``."""
        from ..simkit.metrics import pair_trace

        first, full = [], []
        for X in self.paths:
            tr = pair_trace(self.model, pair, X, self.N)
            first.append(tr.V[:, 1])
            full.append(tr.V[:, 1:].sum(axis=1))
        return float(np.concatenate(first).mean()), float(np.concatenate(full).mean())


def limits_for(model, pair, c, N, spec):
    """Equivalent thresholds when available (cheaper to apply), else the value grid."""
    if pair.monotone:
        table, grid = equivalent_limits(model, pair, c, N, spec)
        return grid, table
    return backward_limits(model, pair, c, N, spec), None


def generalized_arl0(model, pair, c, N, spec, paths: NullPaths):
    from ..detectors import optimal_detector

    grid, table = limits_for(model, pair, c, N, spec)
    det = optimal_detector(model, pair, table if table is not None else grid)
    est = Estimate.from_samples(paths.v_totals(det, pair))
    return est, grid, table


def calibrate(model: ObservationModel, pair: WeightedPair, target_gamma: float, N: int, *,
              reps: int = 200_000, seed: int = 0, c_bracket: tuple = (0.5, 8.0),
              spec: GridSpec = GridSpec(), tol: Optional[float] = None, max_iter: int = 40,
              paths: Optional[NullPaths] = None) -> CalibrationResult:
    """Find ``c`` whose optimal test has generalized ARL0 ``target_gamma``.

    ``tol`` is an absolute tolerance on the achieved value (default 0.5% of
    the target).  The bracket is widened by doubling/halving up to ``2^20``.
    """
    tol = 0.005 * target_gamma if tol is None else tol
    paths = paths or NullPaths(model, N, reps, seed)
    lower, upper = paths.v_bounds(pair)
    if not lower < target_gamma < upper:
        raise InfeasibleTarget(target_gamma, lower, upper)

    history = []

    def score(c):
        est, grid, table = generalized_arl0(model, pair, c, N, spec, paths)
        history.append((c, est.value))
        return est, grid, table

    lo, hi = c_bracket
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < c_lo < c_hi")
    f_lo = score(lo)
    while f_lo[0].value > target_gamma:
        lo /= 2
        if lo < 2.0 ** -20:
            raise CalibrationFailure(f"g(c) stays above {target_gamma} down to c = {lo}")
        f_lo = score(lo)
    f_hi = score(hi)
    while f_hi[0].value < target_gamma:
        hi *= 2
        if hi > 2.0 ** 20:
            raise CalibrationFailure(f"g(c) stays below {target_gamma} up to c = {hi}")
        f_hi = score(hi)

    best = min((f_lo, lo), (f_hi, hi), key=lambda t: abs(t[0][0].value - target_gamma))
    a, b = math.log(lo), math.log(hi)
    ga, gb = f_lo[0].value - target_gamma, f_hi[0].value - target_gamma
    side = 0
    for _ in range(max_iter):
        if abs(best[0][0].value - target_gamma) <= tol:
            break
        if gb == ga:
            m = 0.5 * (a + b)
        else:
            m = b - gb * (b - a) / (gb - ga)
            # keep the step inside the bracket and away from its ends
            width = b - a
            m = min(max(m, a + 0.01 * width), b - 0.01 * width)
        c = math.exp(m)
        res = score(c)
        gm = res[0].value - target_gamma
        if abs(gm) < abs(best[0][0].value - target_gamma):
            best = (res, c)
        if gm == 0:
            break
        if gm < 0:
            a, ga = m, gm
            if side == -1:
                gb /= 2
            side = -1
        else:
            b, gb = m, gm
            if side == 1:
                ga /= 2
            side = 1
        if b - a < 1e-12:
            break
    (est, grid, table), c = best
    if abs(est.value - target_gamma) > tol:
        raise CalibrationFailure(f"reached g = {est.value:.6g} at c = {c:.6g}, target {target_gamma} +- {tol}")
    return CalibrationResult(c_gamma=c, achieved_gamma=est.value, target_gamma=target_gamma,
                             mc_stderr=est.stderr, iterations=len(history), feasible=(lower, upper),
                             grid=grid, table=table, history=history)


# --- closed-form value ----------------------------------------------------------

@dataclass(frozen=True)
class FormulaValue:
    """Closed-form optimal measure value and minimal GARL.

    ``J = c (1 - E_0 v_1 / gamma) - E_0[(l_1 - Y_1)^+] / gamma`` and
    ``GARL_min = c (gamma - E_0 v_1) - E_0[(l_1 - Y_1)^+]``.
    """

    J: float
    garl_min: float
    mean_v1: float
    mean_shortfall: float
    stderr_shortfall: float
    J_stderr: float
    garl_stderr: float


def value_formula(c_gamma: float, gamma: float, model: ObservationModel, pair: WeightedPair,
                  grid: ValueGrid, reps: int = 100_000, seed: int = 0) -> FormulaValue:
    """Evaluate the closed-form optimal value at a calibrated ``(c, gamma)``.

    ``l_1`` is evaluated by applying the limit recursion at the sampled
    ``Y_1`` (not by interpolating a stored ``l_1``).  For finite-support models
    with a constant initial value the expectation over ``X_1`` is an exact
    sum, otherwise it is a Monte Carlo mean.
    """
    if c_gamma == 0:
        return FormulaValue(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    if grid.model is None:
        grid.model, grid.pair = model, pair
    N = grid.N
    rec = pair_recursion(model, pair)
    exact = model.finite_support and not getattr(model, "stationary_start", False)
    if exact:
        x0 = np.array([float(model.x0)])
        xs, probs = model.pre_nodes(x0, 0)
        X = np.zeros((xs.shape[1], N + 1))
        X[:, 0] = x0[0]
        X[:, 1] = xs[0]
        weights = np.asarray(probs, dtype=float)
    else:
        b = blocks(reps, seed, 0, reps)[0]
        X = model.transform(model.noise(b.rng, reps, N), N + 1)
        weights = None
    state0 = rec.init(X.shape[0])
    ws = rec.weight_state(state0, 1, X[:, 0], N)
    v1 = np.broadcast_to(np.asarray(pair.v(ws), dtype=float), (X.shape[0],))
    y1 = rec.step(state0, 1, X[:, 0], X[:, 1], N)[:, 0]
    short = np.maximum(grid.rhs(1, y1, X[:, 1]) - y1, 0.0)
    mean_v1 = float(v1.mean() if weights is None else weights @ v1)
    mean_short = float(short.mean() if weights is None else weights @ short)
    if exact:
        se_short = 0.0
        se_j = 0.0
    else:
        comb = c_gamma * v1 + short
        se_short = float(short.std(ddof=1) / math.sqrt(len(short)))
        se_j = float(comb.std(ddof=1) / math.sqrt(len(comb)))
    garl = c_gamma * (gamma - mean_v1) - mean_short
    if gamma == 0:
        return FormulaValue(float("nan"), garl, mean_v1, mean_short, se_short, float("nan"), se_j)
    return FormulaValue(J=garl / gamma, garl_min=garl, mean_v1=mean_v1, mean_shortfall=mean_short,
                        stderr_shortfall=se_short, J_stderr=se_j / gamma, garl_stderr=se_j)
