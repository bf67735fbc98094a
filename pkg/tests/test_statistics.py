import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from twrqcd import statistics as st
from twrqcd.errors import InvalidArgumentError, InvalidInputError, NotDerivableError


def run_recursive(kind, log_r, rho=0.0):
    s = st.new_state(kind, rho)
    out = []
    for x in log_r:
        s = st.update_log(s, float(x))
        out.append(s.score)
    return np.array(out), s


class TestUpdates:
    def test_shiryaev_single_step(self):
        s = st.StatisticState(st.SHIRYAEV, 0.0, rho=0.5)
        assert st.shiryaev_update(s, 2.0).value == pytest.approx(4.0)

    def test_shiryaev_roberts_step(self):
        s = st.StatisticState(st.SHIRYAEV_ROBERTS, 1.0)
        assert st.shiryaev_roberts_update(s, 3.0).value == pytest.approx(6.0)

    def test_cusum_floors_at_zero(self):
        s = st.StatisticState(st.CUSUM, 0.5)
        assert st.cusum_update(s, -2.0).value == 0.0
        assert st.cusum_update(s, 1.0).value == pytest.approx(1.5)

    def test_reset_returns_to_zero(self):
        s = st.update_log(st.new_state(st.SHIRYAEV, 0.01), 3.0)
        r = st.reset(s)
        assert r.value == 0.0 and not r.log_scale and r.rho == 0.01

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
    def test_bad_ratio_rejected(self, bad):
        with pytest.raises(InvalidInputError):
            st.shiryaev_update(st.new_state(st.SHIRYAEV), bad)

    def test_wrong_kind_rejected(self):
        with pytest.raises(InvalidArgumentError):
            st.cusum_update(st.new_state(st.SHIRYAEV), 0.1)
        with pytest.raises(InvalidArgumentError):
            st.StatisticState("page", 0.0)
        with pytest.raises(InvalidArgumentError):
            st.StatisticState(st.CUSUM, 0.0, rho=0.1)

    def test_log_domain_switch_survives_huge_values(self):
        _, s = run_recursive(st.SHIRYAEV_ROBERTS, np.full(400, 5.0))
        assert s.log_scale
        # log sum_{j=1..n} e^{5j} = 5n - log(1 - e^-5) + log(1 - e^{-5n})
        assert s.score == pytest.approx(2000.0 - math.log1p(-math.exp(-5.0)), rel=1e-12)
        assert s.exceeds(1e50)

    def test_threshold_from_alpha(self):
        assert st.threshold_from_alpha(st.SHIRYAEV, 0.01) == pytest.approx(99.0)
        with pytest.raises(NotDerivableError):
            st.threshold_from_alpha(st.CUSUM, 0.01)


class TestBatchOracles:
    @pytest.mark.parametrize("rho", [0.0, 0.005, 0.5])
    def test_shiryaev_recursion_matches_batch(self, rho, rng):
        log_r = rng.normal(0.0, 1.0, 60)
        _, s = run_recursive(st.SHIRYAEV, log_r, rho)
        batch = st.shiryaev_batch(np.exp(log_r), rho, log=True)
        assert s.score == pytest.approx(batch, rel=1e-12)

    def test_known_value(self):
        # two steps with R = 2, 3 and rho = 0: S1 = 2, S2 = 3 * 3 = 9
        assert st.shiryaev_batch([2.0, 3.0], 0.0) == pytest.approx(9.0)

    def test_cusum_batch_is_max_suffix_sum(self):
        assert st.cusum_batch([1.0, -3.0, 2.0, 0.5]) == pytest.approx(2.5)
        assert st.cusum_batch([-1.0, -1.0]) == 0.0

    def test_caps(self):
        with pytest.raises(InvalidArgumentError):
            st.shiryaev_batch(np.ones(201), 0.1)


class TestPaths:
    @pytest.mark.parametrize("kind,rho", [(st.CUSUM, 0.0), (st.SHIRYAEV, 0.005), (st.SHIRYAEV_ROBERTS, 0.0)])
    def test_path_equals_recursion(self, kind, rho, rng):
        log_r = rng.normal(0.1, 1.0, 500)
        rec, _ = run_recursive(kind, log_r, rho)
        np.testing.assert_allclose(st.score_path(kind, log_r, rho), rec, rtol=1e-10, atol=1e-12)

    def test_numba_and_numpy_kernels_agree(self, rng):
        log_r = rng.normal(0.0, 2.0, 2000)
        np.testing.assert_allclose(st._nb_cusum_path(log_r), st._np_cusum_path(log_r), atol=1e-9)
        for g in (0.0, 0.01):
            np.testing.assert_allclose(st._nb_ratio_log_path(log_r, g), st._np_ratio_log_path(log_r, g),
                                       rtol=1e-10, atol=1e-9)

    def test_first_passage_is_strict(self):
        path = np.array([0.0, 1.0, 2.0, 2.0, 3.0])
        assert st.first_passage(path, 2.0) == 4
        assert st.first_passage(path, 3.0) is None
        assert st.first_passage(path, 0.5, start=2) == 2

    def test_crossing_level(self):
        assert st.crossing_level(st.CUSUM, 7.0) == 7.0
        assert st.crossing_level(st.SHIRYAEV, math.e) == pytest.approx(1.0)

    @settings(max_examples=50, deadline=None)
    @given(hst.lists(hst.floats(-5, 5), min_size=1, max_size=80))
    def test_cusum_path_matches_brute_force(self, xs):
        path = st.score_path(st.CUSUM, np.array(xs))
        assert path[-1] == pytest.approx(st.cusum_batch(xs), abs=1e-9)
        assert np.all(path >= 0)

    @settings(max_examples=30, deadline=None)
    @given(hst.lists(hst.floats(-3, 3), min_size=5, max_size=60), hst.floats(0.5, 20.0), hst.floats(0.5, 20.0))
    def test_first_passage_monotone_in_threshold(self, xs, b1, b2):
        path = st.score_path(st.CUSUM, np.array(xs))
        lo, hi = sorted((b1, b2))
        n_lo, n_hi = st.first_passage(path, lo), st.first_passage(path, hi)
        if n_hi is not None:
            assert n_lo is not None and n_lo <= n_hi
