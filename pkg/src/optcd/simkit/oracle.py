"""Exact optimal-stopping oracle on small Bernoulli observation trees.

For a stopping rule ``T`` in ``1..N+1`` the Lagrangian is

    xi_T = sum_{k=1}^{T} (Y_{k-1} - c v_k).

Every quantity is computed in rational arithmetic over the ``2^N`` leaf
tree, so the three routes to the minimum (dynamic programming, exhaustive
enumeration of adapted rules and the threshold rule ``Y_n >= l_n``) can be
compared for exact equality.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional

from ..models import IIDBernoulli
from ..weights import WeightedPair, WeightState

MAX_N = 4
MAX_ENUM_N = 3

Path = tuple  # observed bits x_1..x_n


def exact(value) -> Fraction:
    """Rational form of a number (floats convert exactly from their binary value)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        raise ValueError(f"non-finite weight {value}")
    return Fraction(value)


def _prob(p) -> Fraction:
    return Fraction(str(p)) if isinstance(p, float) else exact(p)


@dataclass(frozen=True)
class OracleResult:
    dp_min: Fraction
    exhaustive_min: Optional[Fraction]
    tstar_value: Fraction
    dp_rule: frozenset
    tstar_rule: frozenset
    n_rules: int

    @property
    def all_equal(self) -> bool:
        vals = [self.dp_min, self.tstar_value]
        if self.exhaustive_min is not None:
            vals.append(self.exhaustive_min)
        return len(set(vals)) == 1


class BernoulliTree:
    """Statistic, weights and probabilities on every node of the observation tree.

    A node is the tuple of observed bits ``(x_1, .., x_n)``; ``()`` is the root.
    """

    def __init__(self, model: IIDBernoulli, pair: WeightedPair, N: int):
        if not isinstance(model, IIDBernoulli):
            raise TypeError("the oracle needs an IIDBernoulli model")
        if not 1 <= N <= MAX_N:
            raise ValueError(f"oracle horizon must be 1..{MAX_N}, got {N}")
        self.model, self.pair, self.N = model, pair, N
        self.p0, self.p1 = _prob(model.p0), _prob(model.p1)
        if not (0 < self.p0 < 1):
            raise ValueError("pre-change probability must lie strictly inside (0, 1)")
        self.x0 = exact(model.x0)
        self.lr = {1: self.p1 / self.p0, 0: (1 - self.p1) / (1 - self.p0)}

    def nodes(self, n: int):
        return itertools.product((0, 1), repeat=n)

    def prob0(self, path: Path) -> Fraction:
        out = Fraction(1)
        for x in path:
            out *= self.p0 if x else 1 - self.p0
        return out

    def prob_k(self, path: Path, k: int) -> Fraction:
        """Probability of the prefix when the change happens at ``k``."""
        out = Fraction(1)
        for j, x in enumerate(path, start=1):
            p = self.p1 if j >= k else self.p0
            out *= p if x else 1 - p
        return out

    def _weight_state(self, path: Path, k: int) -> WeightState:
        # weights at index k read the prefix x_1..x_{k-1}
        prev = path[: k - 1]
        x_prev = prev[-1] if prev else self.x0
        mean_exp = None
        if k > 1 and not self.pair.markov:
            mean_exp = sum(exact(math.e ** x) for x in prev) / (k - 1)
        return WeightState(k=k, y_prev=self.y(prev), x_prev=x_prev, N=self.N, mean_exp=mean_exp)

    @lru_cache(maxsize=None)
    def w(self, path: Path, k: int) -> Fraction:
        return exact(self.pair.w(self._weight_state(path, k)))

    @lru_cache(maxsize=None)
    def v(self, path: Path, k: int) -> Fraction:
        return exact(self.pair.v(self._weight_state(path, k)))

    @lru_cache(maxsize=None)
    def y(self, path: Path) -> Fraction:
        """``Y_n`` after observing ``path`` (``Y_0 = 0``)."""
        if not path:
            return Fraction(0)
        n = len(path)
        return (self.y(path[:-1]) + self.w(path, n)) * self.lr[path[-1]]

    def increment(self, path: Path) -> Fraction:
        """``Y_n - c v_{n+1}`` without the ``c``: returns ``(Y_n, v_{n+1})``."""
        n = len(path)
        return self.y(path), self.v(path + (0,), n + 1)

    # --- evaluation of a given rule ---------------------------------------------

    def lagrangian(self, c, stops: frozenset) -> Fraction:
        """``E_0 xi_T`` for the rule stopping at the nodes in ``stops``."""
        c = exact(c)
        total = Fraction(0)
        for leaf in self.nodes(self.N):
            T = self.stop_time(leaf, stops)
            xi = sum((self.y(leaf[: k - 1]) - c * self.v(leaf, k) for k in range(1, T + 1)), Fraction(0))
            total += self.prob0(leaf) * xi
        return total

    def stop_time(self, leaf: Path, stops: frozenset) -> int:
        for n in range(1, self.N + 1):
            if leaf[:n] in stops:
                return n
        return self.N + 1

    def gen_arl0(self, stops: frozenset) -> Fraction:
        """``E_0 sum_{j<=T} v_j``."""
        total = Fraction(0)
        for leaf in self.nodes(self.N):
            T = self.stop_time(leaf, stops)
            total += self.prob0(leaf) * sum((self.v(leaf, j) for j in range(1, T + 1)), Fraction(0))
        return total

    def garl(self, stops: frozenset) -> Fraction:
        """``sum_k E_k[w_k (T-k)^+]`` summed over change points ``1..N``."""
        total = Fraction(0)
        for leaf in self.nodes(self.N):
            T = self.stop_time(leaf, stops)
            for k in range(1, self.N + 1):
                if T > k:
                    total += self.prob_k(leaf, k) * self.w(leaf, k) * (T - k)
        return total

    def garl_identity(self, stops: frozenset) -> Fraction:
        """``E_0 sum_{m=1}^{T} Y_{m-1}``."""
        total = Fraction(0)
        for leaf in self.nodes(self.N):
            T = self.stop_time(leaf, stops)
            total += self.prob0(leaf) * sum((self.y(leaf[: m - 1]) for m in range(1, T + 1)), Fraction(0))
        return total

    # --- optimal rules --------------------------------------------------------------

    def backward_induction(self, c) -> tuple[Fraction, frozenset]:
        """Minimum of ``E_0 xi_T`` by dynamic programming; stop on ties."""
        c = exact(c)
        stops = set()

        def cost_to_go(path: Path) -> Fraction:
            # best additional Lagrangian from a node at which we have not stopped
            y, v_next = self.increment(path)
            cont = y - c * v_next
            if len(path) < self.N:
                cont += sum((self._p(x) * cost_to_go(path + (x,)) for x in (0, 1)), Fraction(0))
            if cont >= 0:
                stops.add(path)
                return Fraction(0)
            return cont

        first = -c * self.v((), 1)
        value = first + sum((self._p(x) * cost_to_go((x,)) for x in (0, 1)), Fraction(0))
        return value, frozenset(stops)

    def _p(self, x: int) -> Fraction:
        return self.p0 if x else 1 - self.p0

    def limit(self, c, path: Path) -> Fraction:
        """Exact limit ``l_n`` at the node ``path`` (``n = len(path)``)."""
        c = exact(c)
        n = len(path)
        _, v_next = self.increment(path)
        if n == self.N:
            return c * v_next
        out = c * v_next
        for x in (0, 1):
            child = path + (x,)
            gap = self.limit(c, child) - self.y(child)
            if gap > 0:
                out += self._p(x) * gap
        return out

    def threshold_rule(self, c) -> frozenset:
        """Nodes where ``Y_n >= l_n``."""
        return frozenset(path for n in range(1, self.N + 1) for path in self.nodes(n)
                         if self.y(path) >= self.limit(c, path))

    def enumerate_rules(self, c):
        """Yield ``(stops, E_0 xi_T)`` for every adapted stopping rule."""
        c = exact(c)

        def options(path: Path):
            # (stop set, expected additional xi from this node) for each rule on the subtree
            out = [(frozenset([path]), Fraction(0))]
            y, v_next = self.increment(path)
            base = y - c * v_next
            if len(path) == self.N:
                out.append((frozenset(), base))
                return out
            left, right = options(path + (0,)), options(path + (1,))
            q0, q1 = self._p(0), self._p(1)
            for (s0, e0), (s1, e1) in itertools.product(left, right):
                out.append((s0 | s1, base + q0 * e0 + q1 * e1))
            return out

        first = -c * self.v((), 1)
        q0, q1 = self._p(0), self._p(1)
        for (s0, e0), (s1, e1) in itertools.product(options((0,)), options((1,))):
            yield s0 | s1, first + q0 * e0 + q1 * e1


def count_rules(N: int) -> int:
    """Number of adapted stopping rules on a binary tree of depth ``N``."""
    g = 1
    for _ in range(N):
        g = 1 + g * g
    return g * g


def oracle_optimal(model: IIDBernoulli, pair: WeightedPair, c, N: int) -> OracleResult:
    """Minimize ``E_0 xi_T`` three ways and report each value."""
    if N > MAX_N:
        raise ValueError(f"oracle horizon N={N} exceeds {MAX_N}")
    tree = BernoulliTree(model, pair, N)
    dp_min, dp_rule = tree.backward_induction(c)
    tstar_rule = tree.threshold_rule(c)
    tstar_value = tree.lagrangian(c, tstar_rule)
    exhaustive_min, n_rules = None, 0
    if N <= MAX_ENUM_N:
        best = None
        for stops, val in tree.enumerate_rules(c):
            n_rules += 1
            if best is None or val < best:
                best = val
        exhaustive_min = best
    return OracleResult(dp_min=dp_min, exhaustive_min=exhaustive_min, tstar_value=tstar_value,
                        dp_rule=dp_rule, tstar_rule=tstar_rule, n_rules=n_rules)
