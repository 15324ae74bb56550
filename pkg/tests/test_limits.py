from __future__ import annotations

import itertools

import numpy as np
import pytest

from optcd.detectors import optimal_detector
from optcd.limits import (BracketError, GridSpec, LimitFileError, UnsupportedConfiguration, backward_limits,
                          equivalent_limits, load_limits, save_limits, single_crossing)
from optcd.models import AR1CorrShift, IIDBernoulli, IIDExponentialRate, IIDNormalShift, MixturePost
from optcd.simkit.oracle import BernoulliTree
from optcd.weights import builtin

from conftest import make_pair

SMALL = GridSpec(ny=128, nx=33, n_quad=24)


class TestBoundaries:
    @pytest.mark.parametrize("pid", ["M1", "M2", "M4", "M5", "M6"])
    def test_last_two_layers(self, normal_model, pid):
        pair = make_pair(pid)
        c = 1.7
        grid = backward_limits(normal_model, pair, c, 12, SMALL)
        assert np.all(grid.values[13] == 0)
        # v_{N+1} evaluated at every node, as the recursion sees it
        from optcd.weights import WeightState
        v = np.broadcast_to(pair.v(WeightState(13, grid.y_knots, 0.0, 12)), grid.y_knots.shape)
        np.testing.assert_array_equal(grid.values[12][:, 0], c * v)

    def test_m2_last_limit_is_c(self, exp_model):
        grid = backward_limits(exp_model, builtin("M2"), 2.5, 10, SMALL)
        assert np.all(grid.values[10] == 2.5)

    def test_zero_coefficient(self, normal_model):
        grid = backward_limits(normal_model, builtin("M6"), 0.0, 10, SMALL)
        assert np.all(grid.values == 0)

    @pytest.mark.parametrize("model", [IIDNormalShift(0, 1, 1), AR1CorrShift(0.5, 0.1, 1)], ids=["iid", "ar1"])
    @pytest.mark.parametrize("pid", ["M2", "M5", "M6", "M7"])
    def test_nonnegative_and_finite(self, model, pid):
        grid = backward_limits(model, make_pair(pid), 3.0, 15, SMALL)
        assert np.all(np.isfinite(grid.values)) and np.all(grid.values >= 0)


class TestMonotoneInC:
    @pytest.mark.parametrize("model", [IIDNormalShift(0, 1, 1), IIDExponentialRate(1, 2),
                                       AR1CorrShift(0.5, 0.1, 1)], ids=lambda m: m.family)
    @pytest.mark.parametrize("pid", ["M2", "M5", "M6"])
    def test_increasing(self, model, pid):
        pair = make_pair(pid)
        spec = GridSpec(ny=96, nx=33, n_quad=24, y_max=200.0)
        prev = None
        for c in (0.5, 1.0, 2.0, 4.0):
            grid = backward_limits(model, pair, c, 10, spec)
            if prev is not None:
                assert np.all(grid.values >= prev.values - 1e-12)
            prev = grid


class TestBernoulliExact:
    model = IIDBernoulli(0.5, 0.75)

    def test_two_outcome_expectation(self):
        grid = backward_limits(self.model, builtin("M2"), 1.0, 2, GridSpec(ny=512))
        lam = {1.0: 1.5, 0.0: 0.5}
        for y in (0.5, 1.5):
            exact = sum(0.5 * max(1.0 - y * lam[x], 0.0) for x in (0.0, 1.0))
            assert grid.rhs(1, y)[0] == pytest.approx(exact, abs=1e-14)
            assert grid.at(1, y) == pytest.approx(exact, abs=2e-3)

    def test_equivalent_threshold_by_scan(self):
        table, grid = equivalent_limits(self.model, builtin("M2"), 1.0, 2, GridSpec(ny=512))
        ys = np.linspace(0, 2, 2_000_001)
        diff = grid.rhs(1, ys) - ys
        crossing = ys[np.argmax(diff < 0)]
        assert table.at(1) == pytest.approx(crossing, abs=1e-6)
        assert table.at(1) == pytest.approx(0.5, abs=1e-10)
        assert table.at(2) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("pid", ["M2", "M5", "M6"])
    @pytest.mark.parametrize("c", [0.25, 1.0, 4.0])
    def test_grid_matches_exact_tree(self, pid, c):
        pair = make_pair(pid)
        N = 4
        grid = backward_limits(self.model, pair, c, N, GridSpec(ny=4096))
        tree = BernoulliTree(self.model, pair, N)
        for n in range(1, N + 1):
            for bits in itertools.product((0, 1), repeat=n):
                exact = float(tree.limit(c, bits))
                assert grid.rhs(n, float(tree.y(bits)))[0] == pytest.approx(exact, rel=1e-3, abs=1e-9)


class TestEquivalent:
    @pytest.mark.parametrize("model", [IIDNormalShift(0, 1, 1), IIDExponentialRate(1, 2)], ids=["normal", "exp"])
    @pytest.mark.parametrize("pid", ["M2", "M4", "M5", "M6"])
    def test_fixed_points(self, model, pid):
        pair = make_pair(pid)
        table, grid = equivalent_limits(model, pair, 2.0, 15, SMALL)
        for n in range(1, 16):
            y = table.at(n)
            assert abs(grid.rhs(n, y)[0] - y) <= 1e-8 * max(1.0, y)
            assert single_crossing(grid, n)
        assert table.at(16) == 0
        assert table.kind == "scalar"

    def test_m2_last_threshold_is_c(self, ar1_model):
        table, _ = equivalent_limits(ar1_model, builtin("M2"), 3.0, 8, SMALL)
        np.testing.assert_allclose(table.thresholds[8], 3.0, rtol=1e-9)
        assert table.kind == "curve"

    def test_threshold_rule_matches_grid_rule(self, normal_model):
        pair = builtin("M2")
        table, grid = equivalent_limits(normal_model, pair, 1.5, 20, GridSpec(ny=256))
        X = normal_model.transform(normal_model.noise(np.random.default_rng(0), 10_000, 20), 21)
        T_grid = optimal_detector(normal_model, pair, grid).run_paths(X).T
        T_eq = optimal_detector(normal_model, pair, table).run_paths(X).T
        assert np.mean(T_grid == T_eq) >= 0.999

    def test_y_max_too_small(self, normal_model):
        with pytest.raises(BracketError, match="y_max"):
            equivalent_limits(normal_model, builtin("M2"), 1.0, 5, GridSpec(ny=64, y_max=0.1))

    def test_requires_monotone_pair(self, normal_model):
        with pytest.raises(UnsupportedConfiguration):
            equivalent_limits(normal_model, builtin("M8"), 1.0, 5, SMALL)


class TestUnsupported:
    def test_mixture(self):
        mix = MixturePost(IIDBernoulli(0.5, 0.5), (IIDBernoulli(0.5, 0.7),), (1.0,))
        with pytest.raises(UnsupportedConfiguration):
            backward_limits(mix, builtin("M2"), 1.0, 5)

    def test_m8(self, normal_model):
        with pytest.raises(UnsupportedConfiguration):
            backward_limits(normal_model, builtin("M8"), 1.0, 5)

    def test_negative_c(self, normal_model):
        with pytest.raises(ValueError):
            backward_limits(normal_model, builtin("M2"), -1.0, 5)

    def test_grid_spec_validation(self):
        with pytest.raises(ValueError):
            GridSpec(ny=1)
        with pytest.raises(ValueError):
            GridSpec(y_min=0.0)


class TestPersistence:
    def test_round_trip_scalar(self, tmp_path, normal_model):
        table, grid = equivalent_limits(normal_model, builtin("M6"), 2.2, 12, SMALL)
        path = tmp_path / "lim.txt"
        save_limits(path, grid=grid, table=table, extra={"target": "40"})
        back = load_limits(path)
        assert back.c == 2.2 and back.N == 12 and back.pair_id == "M6"
        assert back.model_id == normal_model.spec()
        np.testing.assert_array_equal(back.grid.values, grid.values)
        np.testing.assert_array_equal(back.grid.y_knots, grid.y_knots)
        np.testing.assert_array_equal(back.table.thresholds[1:], table.thresholds[1:])
        assert back.grid.spec == grid.spec
        assert back.extra["target"] == "40"

    def test_round_trip_curve(self, tmp_path, ar1_model):
        table, grid = equivalent_limits(ar1_model, builtin("M6"), 1.3, 6, GridSpec(ny=32, nx=9, n_quad=16))
        path = tmp_path / "lim.txt"
        save_limits(path, grid=grid, table=table)
        back = load_limits(path)
        np.testing.assert_array_equal(back.grid.values, grid.values)
        np.testing.assert_array_equal(back.grid.x_knots, grid.x_knots)
        np.testing.assert_array_equal(back.table.thresholds[1:], table.thresholds[1:])

    def test_table_only(self, tmp_path, normal_model):
        table, _ = equivalent_limits(normal_model, builtin("M2"), 1.0, 5, SMALL)
        path = tmp_path / "t.txt"
        save_limits(path, table=table, extra={"model": normal_model.spec(), "pair": "M2"})
        back = load_limits(path)
        assert back.grid is None
        np.testing.assert_array_equal(back.table.thresholds[1:], table.thresholds[1:])

    def test_loaded_detector_behaves_identically(self, tmp_path, normal_model):
        table, grid = equivalent_limits(normal_model, builtin("M6"), 2.0, 15, SMALL)
        path = tmp_path / "lim.txt"
        save_limits(path, grid=grid, table=table)
        back = load_limits(path)
        X = normal_model.transform(normal_model.noise(np.random.default_rng(1), 2000, 15), 16)
        for a, b in ((grid, back.grid), (table, back.table)):
            T1 = optimal_detector(normal_model, builtin("M6"), a).run_paths(X).T
            T2 = optimal_detector(normal_model, builtin("M6"), b).run_paths(X).T
            np.testing.assert_array_equal(T1, T2)

    @pytest.mark.parametrize("text", [
        "",
        "not a limit file\n",
        "# optcd-limits\n# format_version: 99\n",
        "# optcd-limits\n# format_version: 1\n# c: 1.0\n",
    ])
    def test_malformed(self, tmp_path, text):
        path = tmp_path / "bad.txt"
        path.write_text(text)
        with pytest.raises(LimitFileError):
            load_limits(path)

    def test_corrupt_row(self, tmp_path, normal_model):
        table, grid = equivalent_limits(normal_model, builtin("M2"), 1.0, 5, GridSpec(ny=8))
        path = tmp_path / "lim.txt"
        save_limits(path, grid=grid, table=table)
        lines = path.read_text().splitlines()
        lines[-1] = lines[-1].rsplit(",", 1)[0] + ",abc"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(LimitFileError):
            load_limits(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_limits(tmp_path / "nope.txt")

    def test_nothing_to_save(self, tmp_path):
        with pytest.raises(ValueError):
            save_limits(tmp_path / "x.txt")
