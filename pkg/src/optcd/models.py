"""Observation laws before and after a change, with sampling and likelihood ratios.

Every model works on a horizon ``N`` with observations ``x_0..x_N``.  Index 0 is
the initial value, and a change at ``k`` means ``x_k, x_{k+1}, ...`` follow the
post-change law.  ``NO_CHANGE`` stands for "no change within the horizon" and
is represented internally as ``k = N + 1``.

Sampling is split into two steps so that the same noise can be replayed
under every change point (common random numbers):

* ``model.noise(rng, reps, N)`` draws model-specific primitive noise;
* ``model.transform(noise, change_point)`` maps it to observation paths.
"""

from __future__ import annotations

import math
from functools import lru_cache
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.laguerre import laggauss
from scipy.special import logsumexp


class DomainError(ValueError):
    """Raised when a density ratio is evaluated where the pre-change density vanishes."""


class _NoChange:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NO_CHANGE"

    def __reduce__(self):
        return (_NoChange, ())


NO_CHANGE = _NoChange()

ChangePoint = Union[int, _NoChange]


def resolve_change_point(change_point: ChangePoint, N: int) -> int:
    """Map a change point to an integer in ``1..N+1`` (``N+1`` meaning no change)."""
    if change_point is NO_CHANGE:
        return N + 1
    if isinstance(change_point, (bool, np.bool_)) or not isinstance(change_point, (int, np.integer)):
        raise ValueError(f"change point must be an integer or NO_CHANGE, got {change_point!r}")
    k = int(change_point)
    if not 1 <= k <= N + 1:
        raise ValueError(f"change point {k} outside 1..{N} (or NO_CHANGE)")
    return k


@dataclass(frozen=True)
class Trajectory:
    """Observations ``x_0..x_N`` together with the change point that generated them."""

    values: np.ndarray
    change_point: ChangePoint
    N: int

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("horizon N must be at least 2")
        if len(self.values) != self.N + 1:
            raise ValueError(f"expected {self.N + 1} values, got {len(self.values)}")


class ObservationModel(ABC):
    """Base class for pre/post-change observation laws."""

    family: str = ""
    markov_order: int = 0
    k_dependent: bool = False
    finite_support: bool = False

    # --- densities -------------------------------------------------------
    @abstractmethod
    def pre_logpdf(self, x, prev=None):
        """Log density of ``x`` given the previous observation under the pre-change law."""

    @abstractmethod
    def post_logpdf(self, x, prev=None):
        """Log density of ``x`` given the previous observation under the post-change law."""

    def log_lr(self, x, prev=None):
        """Log likelihood ratio ``log(post/pre)``, vectorised over arrays."""
        pre = np.asarray(self.pre_logpdf(x, prev), dtype=float)
        if np.any(np.isneginf(pre)):
            raise DomainError(f"{self.family}: pre-change density is zero at an evaluated point")
        return np.asarray(self.post_logpdf(x, prev), dtype=float) - pre

    # --- sampling --------------------------------------------------------
    @abstractmethod
    def noise(self, rng: np.random.Generator, reps: int, N: int) -> np.ndarray:
        """Primitive noise of shape ``(reps, N + 1)`` (column 0 feeds the initial value)."""

    @abstractmethod
    def transform(self, noise: np.ndarray, change_point: int) -> np.ndarray:
        """Observation paths ``(reps, N + 1)`` for an integer change point in ``1..N+1``."""

    def initial_values(self, noise: np.ndarray) -> np.ndarray:
        return np.full(noise.shape[0], float(self.x0))

    # --- quadrature ------------------------------------------------------
    @abstractmethod
    def pre_nodes(self, prev, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights for E_0[f(X') | prev].

        ``prev`` is an array of shape ``(m,)``; returns nodes of shape ``(m, q)``
        and weights of shape ``(q,)`` summing to one.
        """

    def x_knots(self, count: int, span: float) -> np.ndarray:
        """Knots covering the observation range, used when limits depend on x."""
        centre, sd = self.marginal_moments()
        return np.linspace(centre - span * sd, centre + span * sd, count)

    def marginal_moments(self) -> tuple[float, float]:
        raise NotImplementedError

    def spec(self) -> str:
        items = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{self.family}({items})"

    def params(self) -> dict:
        return {}


@lru_cache(maxsize=32)
def _gh_nodes(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    if n_nodes > 180:
        raise ValueError("Gauss-Hermite node count above 180 overflows; use fewer nodes")
    z, w = hermegauss(n_nodes)
    return _frozen(z), _frozen(w / w.sum())


@lru_cache(maxsize=32)
def _gl_nodes(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = laggauss(n_nodes)
    return _frozen(t), _frozen(w / w.sum())


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class IIDNormalShift(ObservationModel):
    """i.i.d. N(mu0, sigma^2) before the change, N(mu1, sigma^2) after."""

    mu0: float = 0.0
    mu1: float = 1.0
    sigma: float = 1.0
    x0: float = 0.0

    family = "IIDNormalShift"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def _logpdf(self, x, mu):
        z = (np.asarray(x, dtype=float) - mu) / self.sigma
        return -0.5 * z * z - math.log(self.sigma * math.sqrt(2 * math.pi))

    def pre_logpdf(self, x, prev=None):
        return self._logpdf(x, self.mu0)

    def post_logpdf(self, x, prev=None):
        return self._logpdf(x, self.mu1)

    def log_lr(self, x, prev=None):
        d = self.mu1 - self.mu0
        return d / self.sigma**2 * (np.asarray(x, dtype=float) - 0.5 * (self.mu0 + self.mu1))

    def noise(self, rng, reps, N):
        return rng.standard_normal((reps, N + 1))

    def transform(self, noise, change_point):
        x = self.mu0 + self.sigma * noise
        x[:, change_point:] += self.mu1 - self.mu0
        x[:, 0] = self.x0
        return x

    def pre_nodes(self, prev, n_nodes):
        z, w = _gh_nodes(n_nodes)
        m = 1 if prev is None else len(prev)
        return np.broadcast_to(self.mu0 + self.sigma * z, (m, len(z))), w

    def marginal_moments(self):
        return self.mu0, self.sigma

    def params(self):
        return {"mu0": self.mu0, "mu1": self.mu1, "sigma": self.sigma, "x0": self.x0}


@dataclass(frozen=True)
class IIDExponentialRate(ObservationModel):
    """i.i.d. exponential with rate lambda0 before the change, lambda1 after."""

    lambda0: float = 1.0
    lambda1: float = 2.0
    x0: float = 0.0

    family = "IIDExponentialRate"

    def __post_init__(self):
        if not (self.lambda0 > 0 and self.lambda1 > 0):
            raise ValueError("rates must be positive")

    def _logpdf(self, x, lam):
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            return np.where(x >= 0, math.log(lam) - lam * x, -np.inf)

    def pre_logpdf(self, x, prev=None):
        return self._logpdf(x, self.lambda0)

    def post_logpdf(self, x, prev=None):
        return self._logpdf(x, self.lambda1)

    def log_lr(self, x, prev=None):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("IIDExponentialRate: negative observation outside the support")
        return math.log(self.lambda1 / self.lambda0) - (self.lambda1 - self.lambda0) * x

    def noise(self, rng, reps, N):
        return rng.standard_exponential((reps, N + 1))

    def transform(self, noise, change_point):
        x = noise / self.lambda0
        x[:, change_point:] = noise[:, change_point:] / self.lambda1
        x[:, 0] = self.x0
        return x

    def pre_nodes(self, prev, n_nodes):
        t, w = _gl_nodes(n_nodes)
        m = 1 if prev is None else len(prev)
        return np.broadcast_to(t / self.lambda0, (m, len(t))), w

    def marginal_moments(self):
        return 1.0 / self.lambda0, 1.0 / self.lambda0

    def x_knots(self, count, span):
        return np.linspace(0.0, (1.0 + span) / self.lambda0, count)

    def params(self):
        return {"lambda0": self.lambda0, "lambda1": self.lambda1, "x0": self.x0}


@dataclass(frozen=True)
class AR1CorrShift(ObservationModel):
    """Gaussian AR(1) whose autoregressive coefficient switches from rho0 to rho1.

    ``x0`` is the constant initial value.  With ``stationary_start=True`` the
    initial value is instead drawn from the stationary pre-change law
    N(0, noise_sd^2 / (1 - rho0^2)).
    """

    rho0: float = 0.5
    rho1: float = 0.1
    noise_sd: float = 1.0
    x0: float = 0.0
    stationary_start: bool = False

    family = "AR1CorrShift"
    markov_order = 1

    def __post_init__(self):
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")
        if self.stationary_start and not abs(self.rho0) < 1:
            raise ValueError("stationary start needs |rho0| < 1")

    def _logpdf(self, x, prev, rho):
        z = (np.asarray(x, dtype=float) - rho * np.asarray(prev, dtype=float)) / self.noise_sd
        return -0.5 * z * z - math.log(self.noise_sd * math.sqrt(2 * math.pi))

    def pre_logpdf(self, x, prev=None):
        return self._logpdf(x, prev, self.rho0)

    def post_logpdf(self, x, prev=None):
        return self._logpdf(x, prev, self.rho1)

    def log_lr(self, x, prev=None):
        x = np.asarray(x, dtype=float)
        prev = np.asarray(prev, dtype=float)
        d = self.rho1 - self.rho0
        return d * prev * (x - 0.5 * (self.rho1 + self.rho0) * prev) / self.noise_sd**2

    def noise(self, rng, reps, N):
        return rng.standard_normal((reps, N + 1))

    def initial_values(self, noise):
        if self.stationary_start:
            return noise[:, 0] * (self.noise_sd / math.sqrt(1 - self.rho0**2))
        return np.full(noise.shape[0], float(self.x0))

    def transform(self, noise, change_point):
        reps, n1 = noise.shape
        x = np.empty((reps, n1))
        x[:, 0] = self.initial_values(noise)
        eps = self.noise_sd * noise
        for j in range(1, n1):
            rho = self.rho0 if j < change_point else self.rho1
            x[:, j] = rho * x[:, j - 1] + eps[:, j]
        return x

    def pre_nodes(self, prev, n_nodes):
        z, w = _gh_nodes(n_nodes)
        prev = np.asarray(prev, dtype=float)
        return self.rho0 * prev[:, None] + self.noise_sd * z[None, :], w

    def marginal_moments(self):
        rho = min(abs(self.rho0), 0.999)
        return 0.0, self.noise_sd / math.sqrt(1 - rho**2)

    def params(self):
        return {"rho0": self.rho0, "rho1": self.rho1, "noise_sd": self.noise_sd,
                "x0": self.x0, "stationary_start": self.stationary_start}


@dataclass(frozen=True)
class IIDBernoulli(ObservationModel):
    """i.i.d. Bernoulli(p0) before the change, Bernoulli(p1) after."""

    p0: float = 0.5
    p1: float = 0.75
    x0: float = 0.0

    family = "IIDBernoulli"
    finite_support = True

    def __post_init__(self):
        for p in (self.p0, self.p1):
            if not 0 <= p <= 1:
                raise ValueError("Bernoulli probabilities must lie in [0, 1]")

    @staticmethod
    def _logpdf(x, p):
        x = np.asarray(x, dtype=float)
        if np.any((x != 0) & (x != 1)):
            raise DomainError("IIDBernoulli: observations must be 0 or 1")
        with np.errstate(divide="ignore"):
            return np.where(x == 1, np.log(p), np.log1p(-p))

    def pre_logpdf(self, x, prev=None):
        return self._logpdf(x, self.p0)

    def post_logpdf(self, x, prev=None):
        return self._logpdf(x, self.p1)

    def noise(self, rng, reps, N):
        return rng.random((reps, N + 1))

    def transform(self, noise, change_point):
        x = (noise < self.p0).astype(float)
        x[:, change_point:] = noise[:, change_point:] < self.p1
        x[:, 0] = self.x0
        return x

    def pre_nodes(self, prev, n_nodes):
        m = 1 if prev is None else len(prev)
        return np.broadcast_to(np.array([0.0, 1.0]), (m, 2)), np.array([1 - self.p0, self.p0])

    def x_knots(self, count, span):
        return np.array([0.0, 1.0])

    def marginal_moments(self):
        return self.p0, math.sqrt(self.p0 * (1 - self.p0))

    def params(self):
        return {"p0": self.p0, "p1": self.p1, "x0": self.x0}


@dataclass(frozen=True)
class MixturePost(ObservationModel):
    """i.i.d. pre-change law with a post-change law drawn once from a finite mixture.

    At the change point one component ``i`` is selected with probability
    ``probs[i]`` and all post-change observations follow it.  The likelihood
    ratio of ``x_j`` then depends on the change point through the posterior
    weights of the components given ``x_k..x_{j-1}``.

    Components are models sharing the pre-change law of ``pre``; only their
    post-change densities are used.
    """

    pre: ObservationModel
    components: tuple
    probs: tuple
    family = "MixturePost"
    k_dependent = True

    def __post_init__(self):
        if len(self.components) != len(self.probs) or not self.components:
            raise ValueError("need one probability per mixture component")
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise ValueError("mixture probabilities must be nonnegative and sum to 1")
        for comp in (self.pre, *self.components):
            if comp.markov_order != 0 or comp.k_dependent:
                raise ValueError("mixture components must be i.i.d. families")
            if type(comp) is not type(self.pre):
                raise ValueError("mixture components must share the pre-change family")
        object.__setattr__(self, "finite_support", self.pre.finite_support)

    @property
    def x0(self):
        return self.pre.x0

    def pre_logpdf(self, x, prev=None):
        return self.pre.pre_logpdf(x)

    def post_logpdf(self, x, prev=None):
        """Marginal post-change density of a single observation (mixture of components)."""
        logs = np.stack([np.asarray(c.post_logpdf(x), dtype=float) for c in self.components])
        with np.errstate(divide="ignore"):
            logp = np.log(np.asarray(self.probs, dtype=float)).reshape((-1,) + (1,) * (logs.ndim - 1))
            return logsumexp(logs + logp, axis=0)

    def component_log_lrs(self, x) -> np.ndarray:
        """Per-component log ratios, shape ``(m,) + x.shape``."""
        pre = np.asarray(self.pre.pre_logpdf(x), dtype=float)
        if np.any(np.isneginf(pre)):
            raise DomainError("MixturePost: pre-change density is zero at an evaluated point")
        return np.stack([np.asarray(c.post_logpdf(x), dtype=float) - pre for c in self.components])

    def log_lr_k(self, window: np.ndarray, k: int, j: int) -> float:
        """log Lambda^{(k)}_j from the observation prefix ``window = x_0..x_j``."""
        seg = np.asarray(window[k:j + 1], dtype=float)
        comp = self.component_log_lrs(seg)  # (m, j-k+1)
        logp = np.log(np.asarray(self.probs, dtype=float))
        with np.errstate(divide="ignore"):
            upto = logsumexp(logp + comp.sum(axis=1))
            before = logsumexp(logp + comp[:, :-1].sum(axis=1))
        return float(upto - before)

    def noise(self, rng, reps, N):
        base = self.pre.noise(rng, reps, N)
        sel = rng.random((reps, 1))
        return np.concatenate([base, sel], axis=1)

    def choose(self, noise: np.ndarray) -> np.ndarray:
        return np.searchsorted(np.cumsum(self.probs)[:-1], noise[:, -1], side="right")

    def transform(self, noise, change_point):
        base = noise[:, :-1]
        x = self.pre.transform(base.copy(), base.shape[1])
        if change_point < base.shape[1]:
            which = self.choose(noise)
            for i, comp in enumerate(self.components):
                rows = which == i
                if rows.any():
                    x[rows] = comp.transform(base[rows].copy(), change_point)
        return x

    def pre_nodes(self, prev, n_nodes):
        return self.pre.pre_nodes(prev, n_nodes)

    def marginal_moments(self):
        return self.pre.marginal_moments()

    def spec(self):
        parts = ", ".join(f"({c.spec()}, {p!r})" for c, p in zip(self.components, self.probs))
        return f"MixturePost({self.pre.spec()}, [{parts}])"


def markov_order(model: ObservationModel) -> int:
    return model.markov_order


def sample_path(model: ObservationModel, change_point: ChangePoint, N: int,
                rng: np.random.Generator) -> Trajectory:
    """Draw one trajectory ``x_0..x_N`` with the given change point."""
    if N < 2:
        raise ValueError("horizon N must be at least 2")
    k = resolve_change_point(change_point, N)
    x = model.transform(model.noise(rng, 1, N), k)[0]
    return Trajectory(values=x, change_point=change_point, N=N)


def likelihood_ratio(model: ObservationModel, k: int, j: int, window: Sequence[float]) -> float:
    """Likelihood ratio of observation ``x_j`` for a change at ``k``.

    ``window`` ends with ``x_j``.  Markov families need the previous value
    too, and mixtures need the full prefix ``x_0..x_j``.
    """
    if not 1 <= k <= j:
        raise ValueError(f"need 1 <= k <= j, got k={k}, j={j}")
    w = np.asarray(window, dtype=float)
    if model.k_dependent:
        if len(w) != j + 1:
            raise ValueError("mixture likelihood ratios need the full prefix x_0..x_j")
        return math.exp(model.log_lr_k(w, k, j))
    if model.markov_order == 1:
        if len(w) < 2:
            raise ValueError("Markov likelihood ratios need (x_{j-1}, x_j)")
        return float(np.exp(model.log_lr(w[-1], w[-2])))
    return float(np.exp(model.log_lr(w[-1])))


FAMILIES = {
    "IIDNormalShift": IIDNormalShift,
    "IIDExponentialRate": IIDExponentialRate,
    "AR1CorrShift": AR1CorrShift,
    "IIDBernoulli": IIDBernoulli,
}


def make_model(family: str, params: Sequence[float] = (), **kwargs) -> ObservationModel:
    """Build a model from a family name and positional parameters."""
    try:
        cls = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown model family {family!r}; choose from {sorted(FAMILIES)}") from None
    return cls(*params, **kwargs)
