"""Monte Carlo performance measures for detectors.

For a weighted pair ``(w, v)`` and stopping time ``T``:

* generalized ARL0 = E_0[sum_{j<=T} v_j]
* GARL            = sum_{k=1}^N E_k[w_k (T - k)^+]
* J               = GARL / generalized ARL0

The weights are computed from the pair's own statistic, whatever statistic
the detector uses.  Under change point ``k`` the path agrees with the no-change
path before ``k``, so every ``P_k`` run reuses the no-change prefix: both the
noise and the detector state at ``k - 1`` (common random numbers).
"""

from __future__ import annotations

import csv
import io
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..detectors import Detector
from ..models import ObservationModel
from ..statistics import pair_recursion
from ..weights import WeightedPair
from .engine import Block, Estimate, map_blocks


@dataclass(frozen=True)
class PairTrace:
    """Pair statistic and weights along paths.

    ``Y[:, n]`` is ``Y_n`` for ``n = 0..N``; ``W[:, k]``/``V[:, k]`` are
    ``w_k``/``v_k`` for ``k = 1..N+1`` (column 0 unused).
    """

    Y: np.ndarray
    W: np.ndarray
    V: np.ndarray

    def v_total(self, T: np.ndarray) -> np.ndarray:
        """``sum_{j<=T} v_j`` per path."""
        cum = np.cumsum(self.V[:, 1:], axis=1)
        return cum[np.arange(len(T)), T - 1]

    def y_total(self, T: np.ndarray) -> np.ndarray:
        """``sum_{m=1}^{T} Y_{m-1}`` per path."""
        Yext = np.concatenate([self.Y, self.Y[:, -1:]], axis=1)  # Y_{N+1} = Y_N
        cum = np.cumsum(Yext[:, :-1], axis=1)
        return cum[np.arange(len(T)), T - 1]


def pair_trace(model: ObservationModel, pair: WeightedPair, X: np.ndarray, N: int) -> PairTrace:
    rec = pair_recursion(model, pair)
    reps = X.shape[0]
    state = rec.init(reps)
    Y = np.zeros((reps, N + 1))
    W = np.zeros((reps, N + 2))
    V = np.zeros((reps, N + 2))
    for n in range(1, N + 2):
        ws = rec.weight_state(state, n, X[:, n - 1], N)
        W[:, n] = pair.w(ws)
        V[:, n] = pair.v(ws)
        if n <= N:
            state = rec.step(state, n, X[:, n - 1], X[:, n], N)
            Y[:, n] = state[:, 0]
    return PairTrace(Y, W, V)


def _null_paths(detector: Detector, b: Block) -> tuple[np.ndarray, np.ndarray]:
    model, N = detector.model, detector.N
    noise = model.noise(b.rng, b.size, N)
    return noise, model.transform(noise.copy(), N + 1)


def null_run_lengths(detector: Detector, reps: int, seed: int, *, workers: int = 1) -> np.ndarray:
    """Stopping times under no change."""
    def one(b):
        _, X = _null_paths(detector, b)
        return detector.run_paths(X).T
    return np.concatenate(map_blocks(one, reps, seed, workers=workers))


def estimate_arl0(detector: Detector, pair: WeightedPair, reps: int = 100_000, seed: int = 0, *,
                  workers: int = 1) -> Estimate:
    """Generalized ARL0 ``E_0[sum_{j<=T} v_j]``."""
    def one(b):
        _, X = _null_paths(detector, b)
        T = detector.run_paths(X).T
        return pair_trace(detector.model, pair, X, detector.N).v_total(T)
    return Estimate.from_samples(np.concatenate(map_blocks(one, reps, seed, workers=workers)))


def estimate_garl_identity(detector: Detector, pair: WeightedPair, reps: int = 100_000, seed: int = 0, *,
                           workers: int = 1) -> Estimate:
    """GARL as ``E_0[sum_{m=1}^{T} Y_{m-1}]`` with ``Y`` the pair's own statistic.

    Valid for any stopping time on the horizon, because the pair statistic
    accumulates exactly the likelihood-ratio weighted delays.
    """
    def one(b):
        _, X = _null_paths(detector, b)
        T = detector.run_paths(X).T
        return pair_trace(detector.model, pair, X, detector.N).y_total(T)
    return Estimate.from_samples(np.concatenate(map_blocks(one, reps, seed, workers=workers)))


@dataclass(frozen=True)
class ChangeRuns:
    """Per-path outcomes of a no-change run and of runs with a change at each k.

    ``delays[:, k-1]`` is ``(T_k - k)^+`` under a change at ``k``.
    ``at_risk[:, k-1]`` is ``T_0 >= k`` (no alarm before ``k``).
    ``cond[:, k-1]`` is the Lorden conditioning event, evaluated on the
    detector statistic at ``k - 1`` as if it had kept running after an alarm.
    ``garl[i]`` is the per-path ``sum_k w_k (T_k - k)^+`` for pair ``i``.
    """

    T0: np.ndarray
    delays: np.ndarray
    at_risk: np.ndarray
    cond: np.ndarray
    garl: np.ndarray
    v_total: np.ndarray


def _free_states(detector: Detector, X: np.ndarray) -> np.ndarray:
    """Detector statistic states at times 0..N, ignoring alarms."""
    rec, N = detector.recursion, detector.N
    state = rec.init(X.shape[0])
    out = np.empty((X.shape[0], N + 1, state.shape[1]))
    out[:, 0] = state
    for n in range(1, N + 1):
        state = rec.step(state, n, X[:, n - 1], X[:, n], N)
        out[:, n] = state
    return out


def cusum_reset_condition(detector: Detector) -> Optional[Callable]:
    """``Y_{k-1} <= 1`` on the detector's CUSUM statistic, else None."""
    if detector.statistic_kind != "cusum":
        return None
    return lambda prev_state, k: prev_state[:, 0] <= 1.0


def simulate_changes(detector: Detector, pairs: Sequence[WeightedPair] = (), reps_per_k: int = 100_000,
                     seed: int = 0, *, workers: int = 1,
                     condition: Optional[Callable] = None) -> ChangeRuns:
    """Run the detector under no change and under a change at each ``k = 1..N``."""
    model, N = detector.model, detector.N

    def one(b):
        noise, X0 = _null_paths(detector, b)
        run0 = detector.run_paths(X0, keep_states=True)
        T0, states = run0.T, run0.states
        traces = [pair_trace(model, p, X0, N) for p in pairs]
        free = _free_states(detector, X0) if condition is not None else None
        delays = np.zeros((b.size, N))
        cond = np.ones((b.size, N), dtype=bool)
        at_risk = np.zeros((b.size, N), dtype=bool)
        for k in range(1, N + 1):
            if condition is not None:
                cond[:, k - 1] = condition(free[:, k - 1], k)
            rows = np.flatnonzero(T0 >= k)
            at_risk[rows, k - 1] = True
            if rows.size == 0:
                continue
            Xk = model.transform(noise[rows].copy(), k)
            Tk = detector.resume(states[rows, k - 1], Xk, k)
            delays[rows, k - 1] = Tk - k
        garl = np.stack([(tr.W[:, 1:N + 1] * delays).sum(axis=1) for tr in traces]) if pairs else \
            np.zeros((0, b.size))
        v_total = np.stack([tr.v_total(T0) for tr in traces]) if pairs else np.zeros((0, b.size))
        return T0, delays, at_risk, cond, garl, v_total

    parts = map_blocks(one, reps_per_k, seed, workers=workers)
    return ChangeRuns(*(np.concatenate([p[i] for p in parts], axis=-1 if i >= 4 else 0) for i in range(6)))


def estimate_garl_direct(detector: Detector, pair, reps_per_k: int = 100_000, seed: int = 0, *,
                         workers: int = 1):
    """GARL ``sum_k E_k[w_k (T - k)^+]`` by simulating every change point.

    ``pair`` may be a single pair (returns one Estimate) or a sequence
    (returns a list, all from the same simulated paths).
    """
    single = isinstance(pair, WeightedPair)
    pairs = [pair] if single else list(pair)
    runs = simulate_changes(detector, pairs, reps_per_k, seed, workers=workers)
    ests = [Estimate.from_samples(runs.garl[i]) for i in range(len(pairs))]
    return ests[0] if single else ests


@dataclass(frozen=True)
class DelayProfiles:
    """Per-k delay profiles (index ``k-1``) and their maxima."""

    lorden: np.ndarray
    lorden_stderr: np.ndarray
    pollak: np.ndarray
    lorden_max: float
    lorden_argmax: int
    pollak_max: float
    pollak_argmax: int
    at_risk: np.ndarray = None
    undefined: tuple = ()

    @property
    def lorden_first(self) -> float:
        return float(self.lorden[0])

    @property
    def pollak_first(self) -> float:
        return float(self.pollak[0])


def delay_profiles(detector: Detector, reps_per_k: int = 100_000, seed: int = 0, *, workers: int = 1,
                   condition: Optional[Callable] = "auto", min_at_risk: int = 1) -> DelayProfiles:
    """Lorden-style conditional delays and Pollak-style normalised delays per change point.

    The Lorden profile is ``E_k[(T - k)^+ | event_{k-1}]``.  Paths that
    alarmed before ``k`` count with zero delay.  With
    ``condition="auto"`` the event is ``Y_{k-1} <= 1`` on the detector's CUSUM
    statistic (no extra condition for other statistics).  A callable
    ``condition(prev_state, k) -> mask`` supplies a custom event.  The Pollak
    profile is ``E_k[(T - k)^+] / P_0(T >= k)``; its maximum only ranges over
    ``k`` with at least ``min_at_risk`` paths still running at ``k``.
    """
    if condition == "auto":
        condition = cusum_reset_condition(detector)
    runs = simulate_changes(detector, (), reps_per_k, seed, workers=workers, condition=condition)
    N = detector.N
    lorden = np.full(N, np.nan)
    lorden_se = np.full(N, np.nan)
    undefined = []
    for k in range(N):
        sel = runs.cond[:, k]
        m = int(sel.sum())
        if m == 0:
            undefined.append(k + 1)
            continue
        d = runs.delays[sel, k]
        lorden[k] = d.mean()
        lorden_se[k] = d.std(ddof=1) / np.sqrt(m) if m > 1 else 0.0
    if undefined:
        warnings.warn(f"Lorden conditioning event empty at k = {undefined}; excluded from the maximum")
    counts = runs.at_risk.sum(axis=0)
    survival = runs.at_risk.mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        pollak = runs.delays.mean(axis=0) / survival
    pollak = np.where(survival > 0, pollak, np.nan)
    li = int(np.nanargmax(lorden))
    pi = int(np.nanargmax(np.where(counts >= max(min_at_risk, 1), pollak, np.nan)))
    return DelayProfiles(lorden, lorden_se, pollak, float(lorden[li]), li + 1, float(pollak[pi]), pi + 1,
                         counts, tuple(undefined))


# --- reports -------------------------------------------------------------

@dataclass
class RunReport:
    """Metric rows with standard errors, tagged with seed and rep counts."""

    seed: int
    model_id: str = ""
    rows: list = field(default_factory=list)
    wall_time: float = 0.0

    HEADER = ("detector", "pair", "metric", "estimate", "stderr", "reps", "seed")

    def add(self, detector: str, pair: str, metric: str, est: Estimate):
        self.rows.append((detector, pair, metric, est.value, est.stderr, est.reps, self.seed))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.HEADER)
        for row in self.rows:
            writer.writerow([row[0], row[1], row[2], repr(float(row[3])), repr(float(row[4])), row[5], row[6]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def evaluate(detectors: Sequence[Detector], pairs: Sequence[WeightedPair], reps: int = 100_000, seed: int = 0,
             *, workers: int = 1, identity: bool = False) -> RunReport:
    """Generalized ARL0, GARL and J for each detector and pair."""
    start = time.perf_counter()
    model_id = detectors[0].model.spec() if detectors else ""
    report = RunReport(seed=seed, model_id=model_id)
    for det in detectors:
        runs = simulate_changes(det, pairs, reps, seed, workers=workers)
        for i, pair in enumerate(pairs):
            arl0 = Estimate.from_samples(runs.v_total[i])
            garl = Estimate.from_samples(runs.garl[i])
            report.add(det.name, pair.label, "ARL0", arl0)
            report.add(det.name, pair.label, "GARL", garl)
            report.add(det.name, pair.label, "J", ratio_estimate(runs.garl[i], runs.v_total[i]))
            if identity:
                report.add(det.name, pair.label, "GARL_identity",
                           estimate_garl_identity(det, pair, reps, seed, workers=workers))
    report.wall_time = time.perf_counter() - start
    return report


def ratio_estimate(num: np.ndarray, den: np.ndarray) -> Estimate:
    """Ratio of means with a delta-method standard error (same paths for both)."""
    n = len(num)
    a, b = num.mean(), den.mean()
    r = a / b
    resid = num - r * den
    se = float(resid.std(ddof=1) / (np.sqrt(n) * abs(b))) if n > 1 else 0.0
    return Estimate(float(r), se, n)
