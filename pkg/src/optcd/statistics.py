"""Test statistics: the weighted likelihood-ratio statistic and classical charts.

Two layers live here.

* Path functions (:func:`statistic_path_general`, :func:`statistic_path_recursive`,
  :func:`baseline_path`) evaluate one trajectory and return a
  :class:`StatisticPath` ``Y_0..Y_{N+1}`` with ``Y_{N+1} = Y_N``.
* Recursions (:class:`PairRecursion` and friends) advance many paths at once.
  The detectors and the Monte Carlo engine run on these.  A recursion keeps a
  float state matrix of shape ``(reps, d)`` whose column 0 is the statistic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .models import MixturePost, ObservationModel, Trajectory
from .weights import NON_MARKOV, WeightedPair, WeightState

KINDS = ("optimal-general", "optimal-recursive", "cusum", "shiryaev-roberts", "ewma")


@dataclass(frozen=True)
class StatisticPath:
    y: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown statistic kind {self.kind!r}")


def _log_lrs(model: ObservationModel, x: np.ndarray) -> np.ndarray:
    """log Lambda_j for j = 1..N of a k-independent model (index 0 unused)."""
    out = np.zeros(len(x))
    if model.markov_order == 1:
        out[1:] = model.log_lr(x[1:], x[:-1])
    else:
        out[1:] = model.log_lr(x[1:])
    return out


def _mean_exp(x: np.ndarray, k: int):
    return float(np.mean(np.exp(x[1:k]))) if k > 1 else None


def _state(pair: WeightedPair, k: int, y_prev: float, x: np.ndarray, N: int) -> WeightState:
    return WeightState(k=k, y_prev=y_prev, x_prev=float(x[k - 1]), N=N,
                       mean_exp=_mean_exp(x, k) if pair.p1 == NON_MARKOV else None)


def statistic_path_general(model: ObservationModel, pair: WeightedPair, traj: Trajectory) -> StatisticPath:
    """Evaluate ``Y_n = sum_{k<=n} w_k prod_{j=k}^n Lambda^{(k)}_j`` term by term.

    Each product is accumulated as a running log-sum along its own change
    point, so the cost is O(N^2) likelihood-ratio evaluations.  This form is
    valid for change-point dependent (mixture) models too.
    """
    x = np.asarray(traj.values, dtype=float)
    N = traj.N
    y = np.zeros(N + 2)
    logw = np.full(N + 1, -np.inf)  # log w_k, index k
    logprod = np.zeros(N + 1)  # running log prod_{j=k}^{n} Lambda^{(k)}_j
    shared = None if model.k_dependent else _log_lrs(model, x)
    for n in range(1, N + 1):
        w = float(pair.w(_state(pair, n, y[n - 1], x, N)))
        if w < 0:
            raise ValueError(f"negative weight {w} at k={n}")
        logw[n] = np.log(w) if w > 0 else -np.inf
        for k in range(1, n + 1):
            if model.k_dependent:
                logprod[k] += model.log_lr_k(x[: n + 1], k, n)
            else:
                logprod[k] += shared[n]
        terms = logw[1:n + 1] + logprod[1:n + 1]
        y[n] = float(np.exp(logsumexp(terms))) if np.isfinite(terms).any() else 0.0
    y[N + 1] = y[N]
    return StatisticPath(y, "optimal-general")


def statistic_path_recursive(model: ObservationModel, pair: WeightedPair, traj: Trajectory) -> StatisticPath:
    """Evaluate ``Y_n = (Y_{n-1} + w_n) Lambda_n`` in O(N).

    Only valid when likelihood ratios do not depend on the change point.
    """
    if model.k_dependent:
        raise ValueError("the one-step recursion needs change-point independent likelihood ratios")
    x = np.asarray(traj.values, dtype=float)
    N = traj.N
    lr = np.exp(_log_lrs(model, x))
    y = np.zeros(N + 2)
    for n in range(1, N + 1):
        w = float(pair.w(_state(pair, n, y[n - 1], x, N)))
        y[n] = (y[n - 1] + w) * lr[n]
    y[N + 1] = y[N]
    return StatisticPath(y, "optimal-recursive")


def baseline_path(kind: str, model: ObservationModel, traj: Trajectory, *, r: float = 0.0,
                  lam: float | None = None) -> StatisticPath:
    """Classical chart statistics: ``cusum``, ``shiryaev-roberts`` (head start ``r``) or ``ewma``."""
    x = np.asarray(traj.values, dtype=float)
    N = traj.N
    y = np.zeros(N + 2)
    if kind == "ewma":
        if lam is None or not 0 < lam <= 1:
            raise ValueError("ewma needs a smoothing parameter in (0, 1]")
        for n in range(1, N + 1):
            y[n] = (1 - lam) * y[n - 1] + lam * x[n]
    else:
        if model.k_dependent:
            raise ValueError(f"{kind} needs change-point independent likelihood ratios")
        lr = np.exp(_log_lrs(model, x))
        if kind == "cusum":
            for n in range(1, N + 1):
                y[n] = max(1.0, y[n - 1]) * lr[n]
        elif kind == "shiryaev-roberts":
            if not r >= 0:
                raise ValueError("head start r must be nonnegative")
            y[0] = r
            for n in range(1, N + 1):
                y[n] = (1.0 + y[n - 1]) * lr[n]
        else:
            raise ValueError(f"unknown baseline statistic {kind!r}")
    y[N + 1] = y[N]
    return StatisticPath(y, kind)


# --- vectorised recursions -------------------------------------------------

class Recursion:
    """Advance a statistic over many paths at once.

    ``state`` has shape ``(reps, d)`` with the statistic in column 0.  ``step``
    returns a new array and never mutates its input.
    """

    kind = ""
    width = 1

    def __init__(self, model: ObservationModel):
        self.model = model

    def init(self, reps: int) -> np.ndarray:
        return np.zeros((reps, self.width))

    def step(self, state: np.ndarray, n: int, x_prev: np.ndarray, x: np.ndarray, N: int) -> np.ndarray:
        raise NotImplementedError

    def log_lr(self, x_prev, x):
        if self.model.markov_order == 1:
            return self.model.log_lr(x, x_prev)
        return self.model.log_lr(x)

    @staticmethod
    def value(state: np.ndarray) -> np.ndarray:
        return state[:, 0]


class PairRecursion(Recursion):
    """``Y_n = (Y_{n-1} + w_n) Lambda_n`` driven by a weighted pair.

    For M8 an extra column carries the running sum of ``exp(X_j)``.
    """

    kind = "optimal-recursive"

    def __init__(self, model: ObservationModel, pair: WeightedPair):
        if model.k_dependent:
            raise ValueError("use MixtureRecursion for change-point dependent models")
        super().__init__(model)
        self.pair = pair
        self.width = 2 if pair.p1 == NON_MARKOV else 1

    def weight_state(self, state, n, x_prev, N) -> WeightState:
        mean_exp = state[:, 1] / (n - 1) if self.width == 2 and n > 1 else None
        return WeightState(k=n, y_prev=state[:, 0], x_prev=x_prev, N=N, mean_exp=mean_exp)

    def step(self, state, n, x_prev, x, N):
        w = self.pair.w(self.weight_state(state, n, x_prev, N))
        out = np.empty_like(state)
        out[:, 0] = (state[:, 0] + w) * np.exp(self.log_lr(x_prev, x))
        if self.width == 2:
            out[:, 1] = state[:, 1] + np.exp(x)
        return out


class MixtureRecursion(Recursion):
    """Weighted statistic for a finite-mixture post-change law.

    With post-change component ``i`` chosen with probability ``q_i``,
    ``Y_n = sum_i q_i Y^{(i)}_n`` where ``Y^{(i)}_n = (Y^{(i)}_{n-1} + w_n) lambda_i(x_n)``.
    Columns are ``[Y, Y^{(1)}, ..., Y^{(m)}]`` (plus the M8 running sum).
    """

    kind = "optimal-general"

    def __init__(self, model: MixturePost, pair: WeightedPair):
        super().__init__(model)
        self.pair = pair
        self.m = len(model.components)
        self.q = np.asarray(model.probs, dtype=float)
        self.width = 1 + self.m + (1 if pair.p1 == NON_MARKOV else 0)

    def weight_state(self, state, n, x_prev, N) -> WeightState:
        extra = self.pair.p1 == NON_MARKOV
        mean_exp = state[:, -1] / (n - 1) if extra and n > 1 else None
        return WeightState(k=n, y_prev=state[:, 0], x_prev=x_prev, N=N, mean_exp=mean_exp)

    def step(self, state, n, x_prev, x, N):
        w = self.pair.w(self.weight_state(state, n, x_prev, N))
        lam = np.exp(self.model.component_log_lrs(x))  # (m, reps)
        out = np.empty_like(state)
        comp = (state[:, 1:1 + self.m] + np.asarray(w)[..., None]) * lam.T
        out[:, 1:1 + self.m] = comp
        out[:, 0] = comp @ self.q
        if self.width > 1 + self.m:
            out[:, -1] = state[:, -1] + np.exp(x)
        return out


class CusumRecursion(Recursion):
    kind = "cusum"

    def step(self, state, n, x_prev, x, N):
        return (np.maximum(1.0, state[:, 0]) * np.exp(self.log_lr(x_prev, x)))[:, None]


class ShiryaevRobertsRecursion(Recursion):
    kind = "shiryaev-roberts"

    def __init__(self, model: ObservationModel, r: float = 0.0):
        if not r >= 0:
            raise ValueError("head start r must be nonnegative")
        super().__init__(model)
        self.r = r

    def init(self, reps):
        return np.full((reps, 1), float(self.r))

    def step(self, state, n, x_prev, x, N):
        return ((1.0 + state[:, 0]) * np.exp(self.log_lr(x_prev, x)))[:, None]


class EWMARecursion(Recursion):
    kind = "ewma"

    def __init__(self, model: ObservationModel, lam: float):
        if not 0 < lam <= 1:
            raise ValueError("ewma smoothing parameter must lie in (0, 1]")
        super().__init__(model)
        self.lam = lam

    def step(self, state, n, x_prev, x, N):
        return ((1 - self.lam) * state[:, 0] + self.lam * x)[:, None]


def pair_recursion(model: ObservationModel, pair: WeightedPair) -> Recursion:
    """The weighted statistic recursion appropriate for ``model``."""
    if model.k_dependent:
        return MixtureRecursion(model, pair)
    return PairRecursion(model, pair)
