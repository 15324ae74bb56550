from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from optcd.detectors import (ConfigurationError, ConstantLimit, Detector, LinearRamp, PiecewiseLimit, Segment,
                             TableLimit, make_baseline, optimal_detector, parse_detector, run)
from optcd.limits import GridSpec, equivalent_limits
from optcd.models import NO_CHANGE, IIDNormalShift, Trajectory, sample_path
from optcd.simkit import estimate_arl0
from optcd.statistics import CusumRecursion, baseline_path
from optcd.weights import builtin

N = 20


def null_paths(model, reps, seed, n=N):
    return model.transform(model.noise(np.random.default_rng(seed), reps, n), n + 1)


class TestRun:
    def test_zero_limit_stops_immediately(self, normal_model):
        det = make_baseline("cusum", {"c": 0.0}, normal_model, N)
        for s in range(20):
            assert run(det, sample_path(normal_model, NO_CHANGE, N, np.random.default_rng(s))).T == 1
        assert np.all(det.run_paths(null_paths(normal_model, 1000, 0)).T == 1)

    def test_unreachable_limit_runs_to_boundary(self, normal_model):
        det = make_baseline("cusum", {"c": 1e300}, normal_model, N)
        st_ = run(det, sample_path(normal_model, NO_CHANGE, N, np.random.default_rng(1)))
        assert st_.T == N + 1 and st_.alarm_limit == 0
        assert np.all(det.run_paths(null_paths(normal_model, 1000, 1)).T == N + 1)

    def test_stopping_invariants(self, normal_model):
        det = make_baseline("cusum", {"c": 4.0}, normal_model, N)
        for s in range(50):
            traj = sample_path(normal_model, 5, N, np.random.default_rng(s))
            res = run(det, traj)
            y = baseline_path("cusum", normal_model, traj).y
            lims = [det.limit(n, None, None) for n in range(1, N + 2)]
            assert res.alarm_value >= res.alarm_limit
            assert res.alarm_value == y[res.T]
            assert all(y[n] < lims[n - 1] for n in range(1, res.T))

    def test_single_path_matches_batch(self, normal_model):
        det = make_baseline("ewma", {"lam": 0.1, "h": 0.3}, normal_model, N)
        X = null_paths(normal_model, 200, 2)
        batch = det.run_paths(X).T
        single = [run(det, Trajectory(X[i], NO_CHANGE, N)).T for i in range(200)]
        np.testing.assert_array_equal(batch, single)

    def test_horizon_mismatch(self, normal_model):
        det = make_baseline("cusum", {"c": 4.0}, normal_model, N)
        with pytest.raises(ConfigurationError):
            run(det, sample_path(normal_model, NO_CHANGE, N + 1, np.random.default_rng(0)))

    def test_resume_continues_batch(self, normal_model):
        det = make_baseline("cusum", {"c": 3.0}, normal_model, N)
        X = null_paths(normal_model, 500, 3)
        full = det.run_paths(X, keep_states=True)
        alive = full.T > 8
        resumed = det.resume(full.states[alive, 8], X[alive], 9)
        np.testing.assert_array_equal(resumed, full.T[alive])


class TestSchedules:
    def test_ramp_with_zero_slope_is_constant(self, normal_model):
        X = null_paths(normal_model, 5000, 4)
        a = make_baseline("cusum", {"c": 3.0}, normal_model, N).run_paths(X).T
        b = make_baseline("cusum_ramp", {"c": 3.0, "slope": 0.0}, normal_model, N).run_paths(X).T
        np.testing.assert_array_equal(a, b)

    def test_ramp_values(self):
        ramp = LinearRamp(6.0, -1 / 60)
        assert ramp.series(60)[0] == pytest.approx(6.0 * (1 - 1 / 60))
        assert ramp.series(60)[59] == pytest.approx(0.0, abs=1e-12)
        assert LinearRamp(6.0, 1 / 60).series(60)[29] == pytest.approx(9.0)

    def test_piecewise_t_dc(self):
        sched = PiecewiseLimit((Segment(1, 40, 2.53), Segment(41, 60, 2.53, 0.506, 40)))
        s = sched.series(60)
        assert s[0] == 2.53 and s[39] == 2.53
        assert s[40] == pytest.approx(2.53 + 0.506)
        assert s[59] == pytest.approx(2.53 + 0.506 * 20)

    def test_piecewise_gap_rejected(self, normal_model):
        with pytest.raises(ConfigurationError):
            make_baseline("cusum_piecewise", {"segments": [[1, 10, 2.0]]}, normal_model, N)

    def test_table_limits_pad_with_default(self):
        sched = TableLimit((1.0, 2.0), 0.0)
        np.testing.assert_array_equal(sched.series(4), [1.0, 2.0, 0.0, 0.0])

    @given(shift=st.floats(0, 3), seed=st.integers(0, 1000))
    def test_lower_limits_stop_no_later(self, shift, seed):
        model = IIDNormalShift(0, 1, 1)
        X = null_paths(model, 300, seed)
        lo = Detector("lo", CusumRecursion(model), ConstantLimit(2.0), N).run_paths(X).T
        hi = Detector("hi", CusumRecursion(model), ConstantLimit(2.0 + shift), N).run_paths(X).T
        assert np.all(lo <= hi)


class TestFactories:
    @pytest.mark.parametrize("spec, name", [
        ("cusum(4.4823)", "cusum"), ("cusum_ramp(8.7815, -1/60)", "cusum_ramp"),
        ("ewma(0.1, 0.5)", "ewma"), ("sr(0.5, 1.6645)", "sr"), ("shiryaev(0.8)", "shiryaev"),
        ("sr_dynamic(0.63, [1.2, 1.3])", "sr_dynamic"),
        ("cusum_piecewise([[1, 40, 2.53], [41, 60, 2.53, 0.506, 40]])", "cusum_piecewise"),
    ])
    def test_parse(self, spec, name):
        det = parse_detector(spec, IIDNormalShift(0, 1, 1), 60)
        assert det.name.startswith(name)
        assert det.N == 60

    @pytest.mark.parametrize("spec", ["glr(1)", "cusum()", "ewma(0.1)", "cusum(1, 2, 3)"])
    def test_parse_errors(self, spec):
        with pytest.raises(ConfigurationError):
            parse_detector(spec, IIDNormalShift(0, 1, 1), 60)

    def test_sr_statistic_kind(self, exp_model):
        det = make_baseline("sr", {"r": 0.5, "c": 2.0}, exp_model, 10)
        assert det.statistic_kind == "shiryaev-roberts"

    def test_optimal_needs_limits(self, normal_model):
        with pytest.raises(ConfigurationError):
            optimal_detector(normal_model, builtin("M6"), [1.0, 2.0])

    def test_optimal_meta(self, normal_model):
        table, _ = equivalent_limits(normal_model, builtin("M6"), 1.1, N, GridSpec(ny=64))
        det = optimal_detector(normal_model, builtin("M6"), table)
        assert det.meta == {"c": 1.1, "pair": "M6"}
        assert det.statistic_kind == "optimal-recursive"


def test_cusum_reference_run_length(small_shift_model):
    det = make_baseline("cusum", {"c": 2.6601}, small_shift_model, 60)
    est = estimate_arl0(det, builtin("M5", r=0), reps=100_000, seed=11)
    assert est.value == pytest.approx(40.01, abs=0.5)
