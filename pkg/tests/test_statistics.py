from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from optcd.models import (NO_CHANGE, AR1CorrShift, IIDBernoulli, IIDExponentialRate, IIDNormalShift,
                          MixturePost, Trajectory)
from optcd.statistics import (StatisticPath, baseline_path, pair_recursion, statistic_path_general,
                              statistic_path_recursive)
from optcd.weights import WeightState, builtin

from conftest import ALL_PAIR_IDS, make_pair

# Bernoulli(1/3) -> Bernoulli(2/3) has Lambda(1) = 2 and Lambda(0) = 0.5
TWO_HALF = IIDBernoulli(1 / 3, 2 / 3)


def traj(values, N=None):
    values = np.asarray(values, dtype=float)
    return Trajectory(values, NO_CHANGE, len(values) - 1 if N is None else N)


def vector_path(model, pair, x):
    rec = pair_recursion(model, pair)
    X = np.asarray(x, dtype=float)[None, :]
    N = X.shape[1] - 1
    state = rec.init(1)
    out = [0.0]
    for n in range(1, N + 1):
        state = rec.step(state, n, X[:, n - 1], X[:, n], N)
        out.append(float(state[0, 0]))
    return np.array(out)


class TestExamples:
    def test_m2_two_step(self):
        y = statistic_path_general(TWO_HALF, builtin("M2"), traj([0, 1, 0])).y
        np.testing.assert_allclose(y, [0, 2, 1, 1], rtol=1e-14)

    def test_m4_hand_expansion(self, bern_model):
        y = statistic_path_general(bern_model, builtin("M4"), traj([0, 1, 0])).y
        np.testing.assert_allclose(y[1:3], [1.5, 0.75], rtol=1e-14)

    def test_m2_recursive_is_product(self, rng, normal_model):
        x = np.concatenate([[0.0], rng.normal(size=20)])
        y = statistic_path_recursive(normal_model, builtin("M2"), traj(x)).y
        lr = np.exp(normal_model.log_lr(x[1:]))
        np.testing.assert_allclose(y[1:21], np.cumprod(lr), rtol=1e-12)

    def test_m5_head_start_exponential(self, exp_model):
        y = statistic_path_recursive(exp_model, builtin("M5", r=0.633), traj(np.zeros(4))).y
        assert y[1] == pytest.approx(3.266, rel=1e-12)

    def test_cusum_unit_ratio(self):
        flat = IIDNormalShift(0.0, 0.0, 1.0)
        y = baseline_path("cusum", flat, traj(np.zeros(6))).y
        np.testing.assert_array_equal(y[1:], 1.0)

    def test_sr_by_hand(self):
        y = baseline_path("shiryaev-roberts", TWO_HALF, traj([0, 1, 0]), r=0.0).y
        np.testing.assert_allclose(y[:3], [0, 2, 1.5], rtol=1e-14)

    def test_ewma_geometric(self, normal_model):
        y = baseline_path("ewma", normal_model, traj(np.ones(11)), lam=0.1).y
        k = np.arange(11)
        np.testing.assert_allclose(y[:11], 1 - 0.9 ** k, rtol=1e-12)

    def test_boundary_copy(self, rng, normal_model):
        x = np.concatenate([[0.0], rng.normal(size=8)])
        for path in (statistic_path_general(normal_model, builtin("M6"), traj(x)),
                     baseline_path("cusum", normal_model, traj(x))):
            assert path.y[-1] == path.y[-2]
            assert path.y[0] == 0


class TestErrors:
    def test_recursive_rejects_mixture(self):
        mix = MixturePost(IIDBernoulli(0.5, 0.5), (IIDBernoulli(0.5, 0.7),), (1.0,))
        with pytest.raises(ValueError):
            statistic_path_recursive(mix, builtin("M2"), traj([0, 1, 1]))

    @pytest.mark.parametrize("lam", [0.0, -0.5, 1.5, None])
    def test_bad_lambda(self, normal_model, lam):
        with pytest.raises(ValueError):
            baseline_path("ewma", normal_model, traj([0, 1, 1]), lam=lam)

    def test_bad_head_start(self, normal_model):
        with pytest.raises(ValueError):
            baseline_path("shiryaev-roberts", normal_model, traj([0, 1, 1]), r=-1)

    def test_unknown_kind(self, normal_model):
        with pytest.raises(ValueError):
            baseline_path("glr", normal_model, traj([0, 1, 1]))
        with pytest.raises(ValueError):
            StatisticPath(np.zeros(3), "glr")


MODELS = [IIDNormalShift(0, 1, 1), IIDExponentialRate(1, 2), AR1CorrShift(0.5, 0.1, 1),
          IIDBernoulli(0.5, 0.75)]


def _random_path(model, seed, N=25):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, N + 2))
    return model.transform(model.noise(rng, 1, N), k)[0]


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.family)
@pytest.mark.parametrize("pid", ALL_PAIR_IDS)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_general_equals_recursive(model, pid, seed):
    pair = make_pair(pid)
    x = _random_path(model, seed)
    g = statistic_path_general(model, pair, traj(x)).y
    r = statistic_path_recursive(model, pair, traj(x)).y
    assert np.all(g >= 0) and np.all(np.isfinite(g))
    pos = (g > 1e-300) & (r > 1e-300)
    np.testing.assert_array_equal(g > 1e-300, r > 1e-300)
    assert np.max(np.abs(np.log(g[pos]) - np.log(r[pos])), initial=0.0) <= 1e-10


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.family)
@pytest.mark.parametrize("pid", ALL_PAIR_IDS)
def test_vectorised_matches_single_path(model, pid):
    pair = make_pair(pid)
    for seed in range(5):
        x = _random_path(model, seed)
        np.testing.assert_allclose(vector_path(model, pair, x),
                                   statistic_path_recursive(model, pair, traj(x)).y[:-1], rtol=1e-12)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.family)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_m4_is_cusum(model, seed):
    x = _random_path(model, seed)
    np.testing.assert_array_equal(statistic_path_recursive(model, builtin("M4"), traj(x)).y,
                                  baseline_path("cusum", model, traj(x)).y)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.family)
@given(seed=st.integers(0, 2 ** 32 - 1), r=st.floats(0, 5))
def test_m5_is_shiryaev_roberts(model, seed, r):
    x = _random_path(model, seed)
    y = statistic_path_recursive(model, builtin("M5", r=r), traj(x)).y
    sr = baseline_path("shiryaev-roberts", model, traj(x), r=r).y
    np.testing.assert_allclose(y[1:], sr[1:], rtol=1e-14)


def _mixture_statistic_oracle(model: MixturePost, pair, x) -> np.ndarray:
    """Sum over change points of w_k times the mixture joint-density ratio of x_k..x_n."""
    N = len(x) - 1
    y = np.zeros(N + 1)
    for n in range(1, N + 1):
        total = 0.0
        for k in range(1, n + 1):
            seg = x[k:n + 1]
            post = sum(p * math.prod(c.p1 if v else 1 - c.p1 for v in seg)
                       for c, p in zip(model.components, model.probs))
            pre = math.prod(model.pre.p0 if v else 1 - model.pre.p0 for v in seg)
            ws = dict(k=k, y_prev=y[k - 1], x_prev=x[k - 1], N=N,
                      mean_exp=float(np.mean(np.exp(x[1:k]))) if k > 1 else None)
            total += float(pair.w(WeightState(**ws))) * post / pre
        y[n] = total
    return y


class TestMixtureStatistic:
    @pytest.fixture
    def mixture(self):
        return MixturePost(IIDBernoulli(0.4, 0.4), (IIDBernoulli(0.4, 0.6), IIDBernoulli(0.4, 0.9)), (0.3, 0.7))

    @pytest.mark.parametrize("pid", ["M2", "M5", "M6"])
    def test_general_matches_joint_density(self, mixture, pid):
        pair = make_pair(pid)
        for N in (2, 3, 4):
            for bits in itertools.product((0, 1), repeat=N):
                x = np.array((0, *bits), dtype=float)
                y = statistic_path_general(mixture, pair, traj(x)).y
                np.testing.assert_allclose(y[:-1], _mixture_statistic_oracle(mixture, pair, x), rtol=1e-12)

    def test_vectorised_mixture(self, mixture):
        pair = builtin("M6")
        for bits in itertools.product((0, 1), repeat=4):
            x = np.array((0, *bits), dtype=float)
            np.testing.assert_allclose(vector_path(mixture, pair, x),
                                       statistic_path_general(mixture, pair, traj(x)).y[:-1], rtol=1e-12)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.family)
@pytest.mark.parametrize("pid", ["M2", "M4", "M5", "M6", "M7"])
def test_statistic_nonnegative_many_paths(model, pid):
    pair = make_pair(pid)
    rng = np.random.default_rng(7)
    N = 60
    X = model.transform(model.noise(rng, 100_000, N), N + 1)
    rec = pair_recursion(model, pair)
    state = rec.init(len(X))
    for n in range(1, N + 1):
        state = rec.step(state, n, X[:, n - 1], X[:, n], N)
        y = state[:, 0]
        assert np.all(y >= 0) and np.all(np.isfinite(y))
