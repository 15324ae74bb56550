"""Equivalent control limits: thresholds that do not read the statistic.

When ``y + w(y)`` is nondecreasing and ``v(y)`` non-increasing in ``y``,
``l_n(y) - y`` is strictly decreasing.  The rule "stop when Y_n >= l_n(Y_n)"
is then the same as "stop when Y_n >= y_n", where ``y_n`` solves
``y = l_n(y)``.  For Markov models ``y_n`` depends on the current observation
and is solved per x knot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..models import ObservationModel
from ..weights import WeightedPair
from .grid import (GridSpec, NumericalFailure, UnsupportedConfiguration, ValueGrid,
                   backward_limits, single_crossing)


class BracketError(NumericalFailure):
    """The fixed point is not bracketed by ``[0, y_max]``."""


@dataclass
class EquivalentLimitTable:
    """Thresholds ``y_n`` (``n = 1..N``), scalar per n or a curve over x knots.

    ``thresholds`` has shape ``(N + 2, nx)``.  Row 0 is unused, and row
    ``N + 1`` is 0 (the horizon boundary).
    """

    c: float
    N: int
    x_knots: Optional[np.ndarray]
    thresholds: np.ndarray
    max_residual: float = 0.0

    @property
    def kind(self) -> str:
        return "scalar" if self.x_knots is None else "curve"

    def at(self, n: int, x=None):
        if not 1 <= n <= self.N + 1:
            raise IndexError(f"time index {n} outside 1..{self.N + 1}")
        row = self.thresholds[n]
        if self.x_knots is None:
            return float(row[0])
        if x is None:
            raise ValueError("these thresholds depend on the current observation; pass x")
        return np.interp(x, self.x_knots, row)


def _fixed_points(grid: ValueGrid, n: int, xs: np.ndarray, tol: float, max_iter: int):
    y_max = grid.spec.y_max
    lo = np.zeros(len(xs))
    hi = np.full(len(xs), y_max)
    f_lo = grid.rhs(n, lo, xs) - lo
    f_hi = grid.rhs(n, hi, xs) - hi
    if np.any(f_hi >= 0):
        j = int(np.argmax(f_hi >= 0))
        raise BracketError(
            f"no sign change on [0, {y_max}] at n={n}, x={xs[j]}: "
            f"RHS-y = {f_lo[j]:.6g} at 0, {f_hi[j]:.6g} at y_max; increase y_max")
    if np.any(f_lo < 0):
        raise NumericalFailure(f"RHS below y at y = 0 for n={n}; limits must be nonnegative")
    done = f_lo == 0
    hi[done] = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = grid.rhs(n, mid, xs) - mid
        up = f_mid >= 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
        if np.all(hi - lo <= tol * np.maximum(1.0, hi)):
            break
    # hi satisfies RHS(hi) < hi (or is an exact root); lo satisfies RHS(lo) >= lo
    root = 0.5 * (lo + hi)
    residual = np.abs(grid.rhs(n, root, xs) - root)
    return root, float(residual.max())


def equivalent_limits(model: ObservationModel, pair: WeightedPair, c: float, N: int,
                      spec: GridSpec = GridSpec(), tol: float = 1e-10, max_iter: int = 200,
                      grid: Optional[ValueGrid] = None) -> tuple[EquivalentLimitTable, ValueGrid]:
    """Solve ``y = l_n(y[, x])`` for ``n = 1..N`` by bisection.

    Returns the table together with the value grid it was derived from.
    """
    if not pair.monotone:
        raise UnsupportedConfiguration(f"pair {pair.id} does not declare the monotonicity needed for fixed points")
    if grid is None:
        grid = backward_limits(model, pair, c, N, spec)
    for n in range(1, N + 1):
        if not single_crossing(grid, n):
            raise NumericalFailure(f"l_n(y) - y crosses zero more than once at n={n}")
    xs = np.array([float(model.x0)]) if grid.x_knots is None else grid.x_knots
    thresholds = np.zeros((N + 2, len(xs)))
    thresholds[0] = np.nan
    worst = 0.0
    for n in range(N, 0, -1):
        thresholds[n], res = _fixed_points(grid, n, xs, tol, max_iter)
        worst = max(worst, res)
    return EquivalentLimitTable(c=float(c), N=N, x_knots=grid.x_knots, thresholds=thresholds,
                                max_residual=worst), grid
