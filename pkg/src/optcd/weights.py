"""Weighted pairs (W, V) that define the detection measures M1..M8.

A pair assigns to each index ``k`` a delay weight ``w_k`` and a false-alarm
weight ``v_k``.  Both may only look at information available before ``k``:
the statistic ``Y_{k-1}``, the observation ``X_{k-1}``, the running mean of
``exp(X_j)`` for ``j < k`` (M8 only) and the horizon ``N``.  This is enforced
by :class:`WeightState`, which exposes nothing later.

The measure built from a pair is

    J(T) = sum_k E_k[w_k (T - k)^+] / E_0[sum_{j<=T} v_j].

Weight functions accept scalars, numpy arrays or ``fractions.Fraction``
values so they can drive both vectorised simulation and exact oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable

import numpy as np
from scipy.special import expit

NON_MARKOV = -1


@dataclass(frozen=True)
class WeightState:
    """What a weight may read when evaluated at index ``k``."""

    k: int
    y_prev: Any
    x_prev: Any
    N: int
    mean_exp: Any = None


def _pos(a):
    if isinstance(a, np.ndarray):
        return np.maximum(a, 0.0)
    return a if a > 0 else 0 * a


def _one_like(a):
    return Fraction(1) if isinstance(a, Fraction) else 1.0


class _Bound:
    def __init__(self, const: float = 0.0, per_step: float = 1.0):
        self.const = const
        self.per_step = per_step

    def __call__(self, N: int) -> float:
        return self.const + self.per_step * (N + 1)


@dataclass(frozen=True)
class WeightedPair:
    """A pair of adapted weight functionals.

    Attributes
    ----------
    id : str
        Label such as ``"M5"``.
    w_fn, v_fn : callable
        ``(WeightState) -> weight``.
    p1, p2 : int
        Number of trailing observations read by ``w`` and ``v``
        (``NON_MARKOV`` when the whole prefix matters).
    monotone : bool
        Whether ``y + w(y)`` is nondecreasing and ``v(y)`` non-increasing in
        ``y``, which makes limits expressible as fixed points.
    v_sup_total : callable
        ``N -> sum_{j=1}^{N+1} sup v_j``, an upper bound for the limits.
    """

    id: str
    w_fn: Callable[[WeightState], Any]
    v_fn: Callable[[WeightState], Any]
    p1: int = 0
    p2: int = 0
    monotone: bool = True
    v_sup_total: Callable[[int], float] = field(default_factory=_Bound)
    params: dict = field(default_factory=dict)

    def w(self, state: WeightState):
        return self.w_fn(state)

    def v(self, state: WeightState):
        return self.v_fn(state)

    @property
    def markov(self) -> bool:
        return self.p1 != NON_MARKOV and self.p2 != NON_MARKOV

    @property
    def reads_x(self) -> bool:
        return self.p1 > 0 or self.p2 > 0 or not self.markov

    @property
    def label(self) -> str:
        if not self.params:
            return self.id
        inner = ", ".join(f"{k}={v}" for k, v in self.params.items() if k != "rho")
        return f"{self.id}({inner})" if inner else self.id


# --- weight functionals -------------------------------------------------

def _prior(rho, state: WeightState):
    if rho is None:
        N = state.N
        return Fraction(1, N + 1) if isinstance(state.y_prev, Fraction) else 1.0 / (N + 1)
    if len(rho) != state.N + 1:
        raise ValueError(f"prior has {len(rho)} entries, horizon needs {state.N + 1}")
    return rho[state.k - 1]


def _first_only(s: WeightState):
    one = _one_like(s.y_prev)
    return one if s.k == 1 else 0 * one


def _last_only(s: WeightState):
    one = _one_like(s.y_prev)
    return one if s.k == s.N + 1 else 0 * one


def _cusum_weight(s: WeightState):
    return _pos(1 - s.y_prev)


def _unit(s: WeightState):
    return _one_like(s.y_prev)


def _head_start(r, s: WeightState):
    one = _one_like(s.y_prev)
    return one * (r + 1) if s.k == 1 else one


def _logistic(s: WeightState):
    if s.k == 1:
        return _one_like(s.y_prev)
    return expit(s.x_prev)


def _running_mean_exp(s: WeightState):
    if s.k == 1:
        return _one_like(s.y_prev)
    if s.mean_exp is None:
        raise ValueError("M8 weights need the running mean of exp(X_j), j < k")
    return s.mean_exp


def _check_prior(rho):
    if rho is None:
        return None
    rho = tuple(rho)
    if any(r < 0 for r in rho) or abs(float(sum(rho)) - 1) > 1e-12:
        raise ValueError("prior must be nonnegative and sum to 1")
    return rho


def builtin(pair_id: str, **params) -> WeightedPair:
    """Return one of the built-in pairs ``M1``..``M8``.

    ``M1``/``M3`` accept ``rho`` (a prior on ``1..N+1``; uniform if omitted).
    ``M5`` requires the head start ``r >= 0``.
    """
    from functools import partial

    pid = pair_id.upper()
    allowed = {"M1": {"rho"}, "M3": {"rho"}, "M5": {"r"}}.get(pid, set())
    extra = set(params) - allowed
    if extra:
        raise ValueError(f"{pid} takes no parameters {sorted(extra)}")

    if pid == "M1":
        rho = _check_prior(params.get("rho"))
        f = partial(_prior, rho)
        return WeightedPair("M1", f, f, v_sup_total=_Bound(1.0, 0.0), params={"rho": rho} if rho else {})
    if pid == "M2":
        return WeightedPair("M2", _first_only, _last_only, v_sup_total=_Bound(1.0, 0.0))
    if pid == "M3":
        rho = _check_prior(params.get("rho"))
        return WeightedPair("M3", _first_only, partial(_prior, rho), v_sup_total=_Bound(1.0, 0.0),
                            params={"rho": rho} if rho else {})
    if pid == "M4":
        return WeightedPair("M4", _cusum_weight, _cusum_weight)
    if pid == "M5":
        if "r" not in params:
            raise ValueError("M5 needs the head start r")
        r = params["r"]
        if not r >= 0:
            raise ValueError("head start r must be nonnegative")
        f = partial(_head_start, r)
        return WeightedPair("M5", f, f, v_sup_total=_Bound(float(r)), params={"r": r})
    if pid == "M6":
        return WeightedPair("M6", _cusum_weight, _unit)
    if pid == "M7":
        return WeightedPair("M7", _logistic, _logistic, p1=1, p2=1)
    if pid == "M8":
        return WeightedPair("M8", _running_mean_exp, _unit, p1=NON_MARKOV, p2=0, monotone=False)
    raise ValueError(f"unknown pair {pair_id!r}; choose M1..M8")


def parse_pair(text: str) -> WeightedPair:
    """Parse ``"M5(r=0.5)"``, ``"M6"`` and similar."""
    from ._expr import parse_call

    name, args, kwargs = parse_call(text)
    if args:
        raise ValueError(f"pair parameters must be named, e.g. M5(r=0): {text!r}")
    return builtin(name, **kwargs)
