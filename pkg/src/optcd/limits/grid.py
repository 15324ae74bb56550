"""Optimal dynamic control limits by backward induction on a (y, x) grid.

The limits satisfy

    l_{N+1} = 0,    l_N = c v_{N+1},
    l_n = c v_{n+1} + E_0[(l_{n+1}(Y', X') - Y')^+ | Y_n = y, X_n = x],
    Y' = (y + w_{n+1}) Lambda_{n+1},

where the conditional expectation runs over the next observation ``X'``.
For i.i.d. models whose weights ignore x, the limits depend on ``y`` alone
(a curve per n).  Otherwise they are surfaces over ``(y, x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..models import ObservationModel
from ..weights import WeightedPair, WeightState
from . import _kernels


class UnsupportedConfiguration(ValueError):
    """The model/pair combination is outside what limit computation supports."""


class NumericalFailure(RuntimeError):
    """Non-finite or inconsistent values appeared during limit computation."""


@dataclass(frozen=True)
class GridSpec:
    """Discretisation used for the limit functions.

    ``y_max=None`` picks ``2 * c * sum_j sup v_j``, which bounds every limit.
    ``x_min``/``x_max`` default to ``x_span`` marginal standard deviations
    around the marginal mean.
    """

    ny: int = 512
    y_min: float = 1e-6
    y_max: Optional[float] = None
    nx: int = 257
    x_span: float = 6.0
    x_min: Optional[float] = None
    x_max: Optional[float] = None
    n_quad: int = 64

    def __post_init__(self):
        if self.ny < 2 or self.nx < 2 or self.n_quad < 1:
            raise ValueError("grid needs ny >= 2, nx >= 2, n_quad >= 1")
        if not self.y_min > 0:
            raise ValueError("y_min must be positive")


def _needs_x(model: ObservationModel, pair: WeightedPair) -> bool:
    return model.markov_order == 1 or pair.reads_x


def check_supported(model: ObservationModel, pair: WeightedPair) -> None:
    if model.k_dependent:
        raise UnsupportedConfiguration(
            "limits need change-point independent likelihood ratios; "
            "mixture post-change models are supported for statistics and evaluation only")
    if model.markov_order > 1:
        raise UnsupportedConfiguration(f"Markov order {model.markov_order} > 1 is not supported")
    if not pair.markov:
        raise UnsupportedConfiguration(f"pair {pair.id} makes the statistic non-Markov")


@dataclass
class ValueGrid:
    """Limit functions ``l_n(y[, x])`` for ``n = 0..N+1`` on a fixed grid."""

    c: float
    N: int
    spec: GridSpec
    y_knots: np.ndarray
    x_knots: Optional[np.ndarray]
    values: np.ndarray  # (N + 2, ny + 1, nx)
    model_id: str = ""
    pair_id: str = ""
    model: Optional[ObservationModel] = field(default=None, repr=False, compare=False)
    pair: Optional[WeightedPair] = field(default=None, repr=False, compare=False)

    @property
    def kind(self) -> str:
        return "curve" if self.x_knots is None else "surface"

    @property
    def geometry(self) -> tuple[float, float, float, float, float]:
        yk = self.y_knots
        ny = len(yk) - 1
        log_y0 = math.log(yk[1])
        dlog = (math.log(yk[-1]) - log_y0) / (ny - 1)
        if self.x_knots is None:
            x_lo, dx = 0.0, 1.0
        else:
            x_lo = float(self.x_knots[0])
            dx = float(self.x_knots[1] - self.x_knots[0])
        return log_y0, dlog, float(yk[1]), x_lo, dx

    def at(self, n: int, y, x=None) -> np.ndarray:
        """Interpolated ``l_n`` at statistic values ``y`` (and observations ``x``)."""
        if not 0 <= n <= self.N + 1:
            raise IndexError(f"time index {n} outside 0..{self.N + 1}")
        y = np.asarray(y, dtype=float)
        shape = y.shape
        yf = y.ravel()
        xf = np.zeros_like(yf) if x is None else np.broadcast_to(np.asarray(x, dtype=float), shape).ravel()
        if self.x_knots is not None and x is None:
            raise ValueError("these limits depend on the current observation; pass x")
        out = _kernels.interp_many(self.values[n], *self.geometry, np.ascontiguousarray(yf),
                                   np.ascontiguousarray(xf))
        return out.reshape(shape)

    def rhs(self, n: int, y, x=None) -> np.ndarray:
        """Right-hand side of the limit recursion at arbitrary points.

        Equals ``l_n(y, x)`` at grid knots but evaluates the expectation
        directly elsewhere, using the stored ``l_{n+1}``.
        """
        if self.model is None or self.pair is None:
            raise ValueError("rhs needs the grid's model and pair (not stored in files)")
        if not 0 <= n <= self.N:
            raise IndexError(f"time index {n} outside 0..{self.N}")
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if x is None:
            x = np.full(y.shape, float(self.model.x0))
        x = np.broadcast_to(np.asarray(x, dtype=float), y.shape)
        return _bellman(self, n, y.ravel(), x.ravel()).reshape(y.shape)


def _quadrature(model: ObservationModel, x_rows: Optional[np.ndarray], n_quad: int):
    """Next-observation nodes, likelihood ratios and weights per row."""
    if model.markov_order == 1:
        xnext, wq = model.pre_nodes(x_rows, n_quad)
        loglam = model.log_lr(xnext, x_rows[:, None])
    else:
        xnext, wq = model.pre_nodes(None, n_quad)
        loglam = model.log_lr(xnext)
    xnext = np.asarray(xnext, dtype=float)
    loglam = np.broadcast_to(np.asarray(loglam, dtype=float), xnext.shape)
    order = np.argsort(loglam, axis=1, kind="stable")
    xnext = np.ascontiguousarray(np.take_along_axis(xnext, order, axis=1))
    loglam = np.ascontiguousarray(np.take_along_axis(loglam, order, axis=1))
    wq = np.ascontiguousarray(np.asarray(wq, dtype=float)[order])
    return xnext, np.exp(loglam), loglam, wq


def _weights(pair: WeightedPair, k: int, y: np.ndarray, x: np.ndarray, N: int):
    state = WeightState(k=k, y_prev=y, x_prev=x, N=N)
    w = np.broadcast_to(np.asarray(pair.w(state), dtype=float), y.shape)
    v = np.broadcast_to(np.asarray(pair.v(state), dtype=float), y.shape)
    return w, v


def _bellman(grid: ValueGrid, n: int, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``c v_{n+1} + E[(l_{n+1} - Y')^+]`` at points ``(y, x)``."""
    model, pair = grid.model, grid.pair
    w, v = _weights(pair, n + 1, y, x, grid.N)
    if n == grid.N:
        return grid.c * v
    if model.markov_order == 1:
        xnext, lam, loglam, wq = _quadrature(model, x, grid.spec.n_quad)
        row = np.arange(len(y))
    else:
        xnext, lam, loglam, wq = _quadrature(model, None, grid.spec.n_quad)
        row = np.zeros(len(y), dtype=np.int64)
    s = np.ascontiguousarray(y + w)
    e = _kernels.expected_shortfall(grid.values[n + 1], *grid.geometry, s, row, xnext, lam, loglam, wq)
    return grid.c * v + e


def default_y_max(c: float, pair: WeightedPair, N: int) -> float:
    return max(2.0 * c * pair.v_sup_total(N), 1.0)


def make_knots(spec: GridSpec, model: ObservationModel, pair: WeightedPair, c: float, N: int):
    y_max = spec.y_max if spec.y_max is not None else default_y_max(c, pair, N)
    if not y_max > spec.y_min:
        raise ValueError("y_max must exceed y_min")
    log_lo, log_hi = math.log(spec.y_min), math.log(y_max)
    dlog = (log_hi - log_lo) / (spec.ny - 1)
    yk = np.concatenate([[0.0], np.exp(log_lo + dlog * np.arange(spec.ny))])
    xk = None
    if _needs_x(model, pair):
        if spec.x_min is not None and spec.x_max is not None:
            xk = np.linspace(spec.x_min, spec.x_max, spec.nx)
        else:
            xk = model.x_knots(spec.nx, spec.x_span)
    return replace(spec, y_max=y_max), yk, xk


def backward_limits(model: ObservationModel, pair: WeightedPair, c: float, N: int,
                    spec: GridSpec = GridSpec()) -> ValueGrid:
    """Compute ``l_0..l_{N+1}`` on a grid by backward induction."""
    check_supported(model, pair)
    if not c >= 0:
        raise ValueError("adjustment coefficient c must be nonnegative")
    if N < 2:
        raise ValueError("horizon N must be at least 2")
    spec, yk, xk = make_knots(spec, model, pair, c, N)
    nx = 1 if xk is None else len(xk)
    ny1 = len(yk)
    values = np.zeros((N + 2, ny1, nx))
    grid = ValueGrid(c=float(c), N=N, spec=spec, y_knots=yk, x_knots=xk, values=values,
                     model_id=model.spec(), pair_id=pair.label, model=model, pair=pair)

    ynode = np.repeat(yk, nx)
    xnode = np.tile(xk, ny1) if xk is not None else np.full(ynode.shape, float(model.x0))
    if model.markov_order == 1:
        xnext, lam, loglam, wq = _quadrature(model, xk, spec.n_quad)
        row = np.tile(np.arange(nx), ny1)
    else:
        xnext, lam, loglam, wq = _quadrature(model, None, spec.n_quad)
        row = np.zeros(ynode.shape, dtype=np.int64)
    geom = grid.geometry

    for n in range(N, -1, -1):
        w, v = _weights(pair, n + 1, ynode, xnode, N)
        if n == N:
            layer = c * v
        else:
            s = np.ascontiguousarray(ynode + w)
            layer = c * v + _kernels.expected_shortfall(values[n + 1], *geom, s, row, xnext, lam, loglam, wq)
        if not np.all(np.isfinite(layer)):
            bad = np.flatnonzero(~np.isfinite(layer))[:5]
            raise NumericalFailure(
                f"non-finite limit at n={n}, nodes (y, x) = "
                f"{[(float(ynode[i]), float(xnode[i])) for i in bad]}")
        values[n] = layer.reshape(ny1, nx)
    return grid


def single_crossing(grid: ValueGrid, n: int) -> bool:
    """True when ``l_n(y) - y`` changes sign at most once (from >= 0 to < 0) along y, per x."""
    diff = grid.values[n] - grid.y_knots[:, None]
    neg = diff < 0
    # once negative, must stay negative
    return bool(np.all(np.maximum.accumulate(neg, axis=0) == neg))
