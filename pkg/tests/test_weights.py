from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from optcd.detectors import make_baseline
from optcd.simkit import combined_z, estimate_arl0, estimate_garl_direct
from optcd.simkit.engine import Estimate
from optcd.weights import NON_MARKOV, WeightState, builtin, parse_pair

from conftest import ALL_PAIR_IDS, make_pair


def state(k, y_prev=0.0, x_prev=0.0, N=10, mean_exp=None):
    return WeightState(k=k, y_prev=y_prev, x_prev=x_prev, N=N, mean_exp=mean_exp)


class TestBuiltinExamples:
    def test_m2(self):
        m2 = builtin("M2")
        assert m2.w(state(1)) == 1
        assert m2.w(state(5)) == 0
        assert m2.v(state(11, N=10)) == 1
        assert m2.v(state(10, N=10)) == 0

    def test_m4_zero_above_one(self):
        assert builtin("M4").w(state(3, y_prev=1.5)) == 0
        assert builtin("M4").w(state(3, y_prev=0.25)) == pytest.approx(0.75)

    def test_m5_head_start(self):
        m5 = builtin("M5", r=0)
        assert m5.w(state(1)) == 1 and m5.w(state(7)) == 1
        m5r = builtin("M5", r=0.633)
        assert m5r.w(state(1)) == pytest.approx(1.633)
        assert m5r.v(state(1)) == pytest.approx(1.633)
        assert m5r.v(state(2)) == 1

    def test_m6(self):
        m6 = builtin("M6")
        assert m6.w(state(4, y_prev=0.2)) == pytest.approx(0.8)
        assert m6.v(state(4, y_prev=7.0)) == 1

    def test_m7_logistic(self):
        m7 = builtin("M7")
        assert m7.w(state(2, x_prev=0.0)) == pytest.approx(0.5)
        assert m7.w(state(1, x_prev=5.0)) == 1
        assert m7.v(state(3, x_prev=1.0)) == pytest.approx(math.e / (1 + math.e))

    def test_m8_running_mean(self):
        m8 = builtin("M8")
        assert m8.w(state(1)) == 1
        assert m8.w(state(3, mean_exp=2.5)) == 2.5
        assert m8.p1 == NON_MARKOV and not m8.markov

    def test_m1_uniform_default(self):
        m1 = builtin("M1")
        assert m1.w(state(3, N=9)) == pytest.approx(0.1)

    def test_m1_custom_prior(self):
        rho = [0.5, 0.25, 0.25]
        m1 = builtin("M1", rho=rho)
        assert m1.v(state(2, N=2)) == 0.25

    def test_m3_mixes(self):
        m3 = builtin("M3")
        assert m3.w(state(1, N=4)) == 1 and m3.w(state(2, N=4)) == 0
        assert m3.v(state(2, N=4)) == pytest.approx(0.2)


class TestBuiltinErrors:
    def test_m5_needs_r(self):
        with pytest.raises(ValueError, match="head start"):
            builtin("M5")

    def test_negative_r(self):
        with pytest.raises(ValueError):
            builtin("M5", r=-0.1)

    def test_bad_prior(self):
        with pytest.raises(ValueError):
            builtin("M1", rho=[0.5, 0.6])

    def test_unknown(self):
        with pytest.raises(ValueError):
            builtin("M9")

    def test_unexpected_param(self):
        with pytest.raises(ValueError):
            builtin("M6", r=1)

    def test_parse(self):
        p = parse_pair("M5(r=0.5)")
        assert p.id == "M5" and p.params == {"r": 0.5}
        assert parse_pair("m6").id == "M6"
        with pytest.raises(ValueError):
            parse_pair("M5(0.5)")


@pytest.mark.parametrize("pid", ALL_PAIR_IDS)
@given(k=st.integers(1, 11), y=st.floats(0, 50), x=st.floats(-5, 5), m=st.floats(0.01, 100))
def test_weights_nonnegative(pid, k, y, x, m):
    pair = make_pair(pid)
    s = state(k, y, x, 10, mean_exp=m)
    assert pair.w(s) >= 0 and pair.v(s) >= 0


@pytest.mark.parametrize("pid", ALL_PAIR_IDS)
def test_vectorised_weights_match_scalar(pid):
    pair = make_pair(pid)
    ys = np.array([0.0, 0.3, 1.0, 4.0])
    xs = np.array([-1.0, 0.0, 0.5, 2.0])
    for k in (1, 2, 5):
        vec_w = np.broadcast_to(pair.w(state(k, ys, xs, 10, mean_exp=np.full(4, 1.7))), (4,))
        for i in range(4):
            assert vec_w[i] == pytest.approx(pair.w(state(k, float(ys[i]), float(xs[i]), 10, mean_exp=1.7)))


class TestMeasureDefinitions:
    """The weighted ratio matches the measure written out in delay terms."""

    N = 30

    def test_m2_is_first_change_delay(self, normal_model):
        det = make_baseline("cusum", {"c": 6.0}, normal_model, self.N)
        garl = estimate_garl_direct(det, builtin("M2"), reps_per_k=20_000, seed=1)
        # E_1(T - 1) simulated independently under a change at time 1
        rng = np.random.default_rng(99)
        X = normal_model.transform(normal_model.noise(rng, 20_000, self.N), 1)
        direct = Estimate.from_samples(det.run_paths(X).T - 1.0)
        assert abs(combined_z(garl, direct)) < 3
        arl0 = estimate_arl0(det, builtin("M2"), reps=20_000, seed=2)
        rng = np.random.default_rng(98)
        X0 = normal_model.transform(normal_model.noise(rng, 20_000, self.N), self.N + 1)
        survive = Estimate.from_samples((det.run_paths(X0).T >= self.N + 1).astype(float))
        assert 0 <= arl0.value <= 1
        assert abs(combined_z(arl0, survive)) < 3

    def test_m5_is_ordinary_run_length(self, normal_model):
        det = make_baseline("cusum", {"c": 6.0}, normal_model, self.N)
        arl0 = estimate_arl0(det, builtin("M5", r=0), reps=20_000, seed=3)
        rng = np.random.default_rng(97)
        X0 = normal_model.transform(normal_model.noise(rng, 20_000, self.N), self.N + 1)
        direct = Estimate.from_samples(det.run_paths(X0).T.astype(float))
        assert abs(combined_z(arl0, direct)) < 3

    def test_m5_delay_sum(self, normal_model):
        det = make_baseline("cusum", {"c": 6.0}, normal_model, self.N)
        garl = estimate_garl_direct(det, builtin("M5", r=0), reps_per_k=4000, seed=4)
        # sum_k E_k (T - k)^+ with fresh, independent paths per k
        total, var = 0.0, 0.0
        for k in range(1, self.N + 1):
            rng = np.random.default_rng(1000 + k)
            X = normal_model.transform(normal_model.noise(rng, 4000, self.N), k)
            d = np.maximum(det.run_paths(X).T - k, 0).astype(float)
            total += d.mean()
            var += d.var(ddof=1) / len(d)
        direct = Estimate(total, math.sqrt(var), 4000)
        assert abs(combined_z(garl, direct)) < 3
