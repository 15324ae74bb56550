"""Stopping rules: a statistic recursion paired with a limit schedule.

A detector alarms at ``T = min{1 <= n <= N+1 : Y_n >= l_n}``.  Every schedule
has ``l_{N+1} = 0`` and ``Y_{N+1} = Y_N >= 0``, so ``T <= N + 1`` always.

Detector spec strings (see :func:`parse_detector`)::

    cusum(c)                       constant limit on the CUSUM statistic
    cusum_ramp(c, slope)           l_k = c (1 + slope k), e.g. slope = -1/60
    cusum_piecewise(segments)      segments = [[start, end, value, slope, anchor], ...]
    ewma(lam, h)                   one-sided EWMA of raw observations, alarm Z_k >= h
    sr(r, c)                       Shiryaev-Roberts with head start r
    sr_dynamic(r, limits)          SR with explicit l_1..l_m, zero afterwards
    shiryaev(c)                    M1 statistic (uniform prior unless rho=[...]) with limit c
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from .models import ObservationModel, Trajectory
from .statistics import (CusumRecursion, EWMARecursion, Recursion, ShiryaevRobertsRecursion,
                         pair_recursion)
from .weights import WeightedPair, builtin

if TYPE_CHECKING:
    from .limits.equivalent import EquivalentLimitTable
    from .limits.grid import ValueGrid


class ConfigurationError(ValueError):
    """A detector or schedule cannot be evaluated as configured."""


# --- limit schedules -------------------------------------------------------

class LimitSchedule:
    """Control limits ``l_1..l_N`` (``l_{N+1} = 0`` is implicit)."""

    kind = ""

    def limit(self, n: int, y: np.ndarray, x: np.ndarray):
        """Limit at time ``n`` for statistic values ``y`` and current observations ``x``."""
        raise NotImplementedError

    def series(self, N: int) -> Optional[np.ndarray]:
        """``l_1..l_N`` when the limits do not depend on the state, else None."""
        return None


@dataclass(frozen=True)
class ConstantLimit(LimitSchedule):
    c: float
    kind = "constant"

    def limit(self, n, y, x):
        return self.c

    def series(self, N):
        return np.full(N, float(self.c))


@dataclass(frozen=True)
class LinearRamp(LimitSchedule):
    """``l_k = c (1 + slope k)``, typically with ``slope = +-1/N``."""

    c: float
    slope: float
    kind = "ramp"

    def limit(self, n, y, x):
        return self.c * (1.0 + self.slope * n)

    def series(self, N):
        return self.c * (1.0 + self.slope * np.arange(1, N + 1))


@dataclass(frozen=True)
class Segment:
    """``l_k = value + slope (k - anchor)`` for ``start <= k <= end`` (anchor defaults to start)."""

    start: int
    end: int
    value: float
    slope: float = 0.0
    anchor: Optional[int] = None

    def at(self, k: int) -> float:
        anchor = self.start if self.anchor is None else self.anchor
        return self.value + self.slope * (k - anchor)


@dataclass(frozen=True)
class PiecewiseLimit(LimitSchedule):
    """Affine pieces over index ranges, with ``default`` outside them."""

    segments: tuple
    default: Optional[float] = None
    kind = "piecewise"

    def _value(self, n):
        for seg in self.segments:
            if seg.start <= n <= seg.end:
                return seg.at(n)
        if self.default is None:
            raise ConfigurationError(f"piecewise limits do not cover n={n}")
        return self.default

    def limit(self, n, y, x):
        return self._value(n)

    def series(self, N):
        return np.array([self._value(n) for n in range(1, N + 1)], dtype=float)


@dataclass(frozen=True)
class TableLimit(LimitSchedule):
    """Explicit limits ``l_1..l_m``; ``default`` applies beyond ``m``."""

    values: tuple
    default: Optional[float] = 0.0
    kind = "table"

    def _value(self, n):
        if n <= len(self.values):
            return float(self.values[n - 1])
        if self.default is None:
            raise ConfigurationError(f"limit table has no entry for n={n}")
        return self.default

    def limit(self, n, y, x):
        return self._value(n)

    def series(self, N):
        return np.array([self._value(n) for n in range(1, N + 1)], dtype=float)


@dataclass(frozen=True)
class GridLimit(LimitSchedule):
    """Optimal limits ``l_n(c, Y_n[, X_n])`` looked up on a value grid."""

    grid: ValueGrid
    kind = "value-grid"

    def limit(self, n, y, x):
        if n > self.grid.N:
            return 0.0
        return self.grid.at(n, y, None if self.grid.x_knots is None else x)


@dataclass(frozen=True)
class EquivalentLimit(LimitSchedule):
    """Fixed-point thresholds ``y_n`` or ``y_n(X_n)``."""

    table: EquivalentLimitTable
    kind = "equivalent"

    def limit(self, n, y, x):
        if n > self.table.N:
            return 0.0
        return self.table.at(n, None if self.table.x_knots is None else x)

    def series(self, N):
        if self.table.x_knots is not None:
            return None
        return self.table.thresholds[1:N + 1, 0].copy()


# --- detectors --------------------------------------------------------------

@dataclass(frozen=True)
class StoppingTime:
    T: int
    alarm_value: float
    alarm_limit: float


@dataclass(frozen=True)
class BatchRun:
    """Outcome of running a detector on many paths."""

    T: np.ndarray
    states: Optional[np.ndarray] = None  # (reps, N + 1, d): state after step n (index n)


@dataclass(frozen=True)
class Detector:
    """A statistic recursion with a limit schedule on horizon ``N``."""

    name: str
    recursion: Recursion
    schedule: LimitSchedule
    N: int
    meta: dict = field(default_factory=dict)

    @property
    def model(self) -> ObservationModel:
        return self.recursion.model

    @property
    def statistic_kind(self) -> str:
        return self.recursion.kind

    def limit(self, n: int, y, x):
        if n == self.N + 1:
            return 0.0
        return self.schedule.limit(n, y, x)

    def run_paths(self, X: np.ndarray, *, keep_states: bool = False) -> BatchRun:
        """Run on paths ``X`` of shape ``(reps, N + 1)`` from time 1."""
        reps = X.shape[0]
        state0 = self.recursion.init(reps)
        return self._advance(state0, X, 1, np.arange(reps), keep_states=keep_states)

    def resume(self, state: np.ndarray, X: np.ndarray, start: int) -> np.ndarray:
        """Continue paths from ``state`` (the state after time ``start - 1``).

        ``X`` must hold the full paths ``x_0..x_N``; only columns from
        ``start - 1`` on are read.  Returns stopping times in ``start..N+1``.
        """
        return self._advance(state, X, start, np.arange(X.shape[0])).T

    def _advance(self, state, X, start, idx, keep_states=False) -> BatchRun:
        N = self.N
        if X.shape[1] != N + 1:
            raise ValueError(f"paths must have N + 1 = {N + 1} columns")
        reps = X.shape[0]
        T = np.full(reps, N + 1, dtype=np.int64)
        states = None
        if keep_states:
            states = np.empty((reps, N + 1, state.shape[1]))
            states[:, start - 1] = state
        alive = np.arange(reps)
        series = self.schedule.series(N)
        for n in range(start, N + 1):
            if alive.size == 0:
                break
            st = self.recursion.step(state, n, X[alive, n - 1], X[alive, n], N)
            if keep_states:
                states[alive, n] = st
            y = st[:, 0]
            lim = series[n - 1] if series is not None else self.schedule.limit(n, y, X[alive, n])
            hit = y >= lim
            if hit.any():
                T[alive[hit]] = n
                keep = ~hit
                alive = alive[keep]
                state = st[keep]
            else:
                state = st
        return BatchRun(T=T, states=states)


def run(detector: Detector, traj: Trajectory) -> StoppingTime:
    """Stopping time of ``detector`` on a single trajectory."""
    if traj.N != detector.N:
        raise ConfigurationError(f"trajectory horizon {traj.N} differs from detector horizon {detector.N}")
    x = np.asarray(traj.values, dtype=float)[None, :]
    state = detector.recursion.init(1)
    ys = []
    for n in range(1, detector.N + 2):
        if n <= detector.N:
            state = detector.recursion.step(state, n, x[:, n - 1], x[:, n], detector.N)
        y = float(state[0, 0])
        lim = float(np.asarray(detector.limit(n, state[:, 0], x[:, min(n, detector.N)])).ravel()[0])
        if not np.isfinite(lim):
            raise ConfigurationError(f"limit not evaluable at n={n}")
        # N + 1 is the horizon: it ends the run even for statistics that can be negative (EWMA)
        if y >= lim or n == detector.N + 1:
            assert all(yy < ll for yy, ll in ys), "earlier crossing missed"
            return StoppingTime(T=n, alarm_value=y, alarm_limit=lim)
        ys.append((y, lim))
    raise AssertionError("unreachable")


# --- construction -----------------------------------------------------------

def optimal_detector(model: ObservationModel, pair: WeightedPair, limits, name: str = "") -> Detector:
    """The optimal test: the pair's weighted statistic with grid or equivalent limits."""
    from .limits.equivalent import EquivalentLimitTable
    from .limits.grid import ValueGrid

    if isinstance(limits, ValueGrid):
        schedule, N = GridLimit(limits), limits.N
    elif isinstance(limits, EquivalentLimitTable):
        schedule, N = EquivalentLimit(limits), limits.N
    else:
        raise ConfigurationError("optimal detector needs a ValueGrid or EquivalentLimitTable")
    return Detector(name or f"optimal[{pair.label}]", pair_recursion(model, pair), schedule, N,
                    meta={"c": limits.c, "pair": pair.label})


def _segments(raw) -> tuple:
    segs = []
    for item in raw:
        if isinstance(item, Segment):
            segs.append(item)
            continue
        if not 3 <= len(item) <= 5:
            raise ConfigurationError(f"segment needs [start, end, value, slope?, anchor?]: {item!r}")
        start, end, value, *rest = item
        slope = rest[0] if rest else 0.0
        anchor = rest[1] if len(rest) > 1 else None
        segs.append(Segment(int(start), int(end), float(value), float(slope),
                            None if anchor is None else int(anchor)))
    return tuple(segs)


def make_baseline(name: str, params: dict, model: ObservationModel, N: int) -> Detector:
    """Build a classical detector by name; see the module docstring for names."""
    p = dict(params)

    def need(*keys):
        missing = [k for k in keys if k not in p]
        if missing:
            raise ConfigurationError(f"{name} needs parameters {missing}")
        return [p[k] for k in keys]

    if name == "cusum":
        (c,) = need("c")
        return Detector(f"cusum(c={c})", CusumRecursion(model), ConstantLimit(float(c)), N, meta={"c": c})
    if name == "cusum_ramp":
        c, slope = need("c", "slope")
        return Detector(f"cusum_ramp(c={c}, slope={slope:.6g})", CusumRecursion(model),
                        LinearRamp(float(c), float(slope)), N, meta={"c": c, "slope": slope})
    if name == "cusum_piecewise":
        (segs,) = need("segments")
        sched = PiecewiseLimit(_segments(segs), p.get("default"))
        sched.series(N)  # validate coverage now
        return Detector("cusum_piecewise", CusumRecursion(model), sched, N)
    if name == "ewma":
        lam, h = need("lam", "h")
        return Detector(f"ewma(lam={lam}, h={h})", EWMARecursion(model, float(lam)), ConstantLimit(float(h)), N,
                        meta={"lam": lam, "h": h})
    if name == "sr":
        r, c = need("r", "c")
        return Detector(f"sr(r={r:.6g}, c={c})", ShiryaevRobertsRecursion(model, float(r)),
                        ConstantLimit(float(c)), N, meta={"r": r, "c": c})
    if name == "sr_dynamic":
        r, limits = need("r", "limits")
        return Detector(f"sr_dynamic(r={r:.6g})", ShiryaevRobertsRecursion(model, float(r)),
                        TableLimit(tuple(float(v) for v in limits), 0.0), N, meta={"r": r})
    if name == "shiryaev":
        (c,) = need("c")
        pair = builtin("M1", **({"rho": p["rho"]} if "rho" in p else {}))
        return Detector(f"shiryaev(c={c})", pair_recursion(model, pair), ConstantLimit(float(c)), N,
                        meta={"c": c})
    raise ConfigurationError(f"unknown detector {name!r}")


_POSITIONAL = {
    "cusum": ("c",),
    "cusum_ramp": ("c", "slope"),
    "cusum_piecewise": ("segments", "default"),
    "ewma": ("lam", "h"),
    "sr": ("r", "c"),
    "sr_dynamic": ("r", "limits"),
    "shiryaev": ("c",),
}


def parse_detector(text: str, model: ObservationModel, N: int) -> Detector:
    """Build a baseline detector from a spec string such as ``"cusum_ramp(8.7815, -1/60)"``."""
    from ._expr import parse_call

    name, args, kwargs = parse_call(text)
    if name not in _POSITIONAL:
        raise ConfigurationError(f"unknown detector {name!r}; choose from {sorted(_POSITIONAL)}")
    names = _POSITIONAL[name]
    if len(args) > len(names):
        raise ConfigurationError(f"{name} takes at most {len(names)} positional arguments")
    params = dict(zip(names, args))
    params.update(kwargs)
    return make_baseline(name, params, model, N)
