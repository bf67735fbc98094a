import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from twrqcd import metrics as m
from twrqcd.errors import UndefinedResultError


def rec(lam, nu, oracle_nu=None, horizon=None, stream=m.CHANGE, B=1.0, det="a"):
    return m.TrialRecord(lam=lam, nu=nu, threshold=B, detector=det, seed=0, oracle_nu=oracle_nu,
                         horizon=horizon, stream=stream)


class TestPfa:
    def test_counting(self):
        rs = [rec(10, 5)] * 3 + [rec(10, 15)] * 7
        assert m.estimate_pfa(rs).value == pytest.approx(0.3)

    def test_no_early_alarm(self):
        assert m.estimate_pfa([rec(10, 11), rec(10, 20)]).value == 0.0

    def test_censored_counts_as_no_alarm(self):
        est = m.estimate_pfa([rec(10, None), rec(10, 3)])
        assert est.value == 0.5 and est.n_censored == 1


class TestAdd:
    def test_arithmetic(self):
        assert m.estimate_add([rec(10, 12), rec(10, 14)]).value == pytest.approx(3.0)

    def test_alarm_at_change(self):
        assert m.estimate_add([rec(10, 10)]).value == 0.0

    def test_early_and_censored_excluded(self):
        est = m.estimate_add([rec(10, 2), rec(10, None), rec(10, 13)])
        assert est.value == 3.0 and est.n_used == 1 and est.n_censored == 1

    def test_undefined(self):
        with pytest.raises(UndefinedResultError):
            m.estimate_add([rec(10, 3)])
        with pytest.raises(UndefinedResultError):
            m.estimate_add([])


class TestFar:
    def test_mean_stopping_time(self):
        est = m.estimate_far([rec(None, 100, stream=m.NO_CHANGE), rec(None, 300, stream=m.NO_CHANGE)])
        assert est.value == pytest.approx(0.005) and not est.is_bound

    def test_all_censored_is_a_bound(self):
        est = m.estimate_far([rec(None, None, horizon=400, stream=m.NO_CHANGE)] * 4)
        assert est.value <= 1 / 400 and est.is_bound


class TestCadd:
    def test_worst_group(self):
        rs = [rec(10, 13), rec(20, 27)]
        assert m.estimate_cadd(rs).value == 7.0

    def test_identical_groups_equal_add(self):
        rs = [rec(10, 14), rec(20, 24), rec(30, 34)]
        assert m.estimate_cadd(rs).value == m.estimate_add(rs).value

    def test_needs_two_groups(self):
        with pytest.raises(UndefinedResultError):
            m.estimate_cadd([rec(10, 12)])

    def test_iid_groups_agree(self):
        # delays of an iid procedure do not depend on lambda: two-sample test must not reject
        rng = np.random.default_rng(0)
        rs = [rec(lam, lam + int(rng.geometric(0.1)) - 1) for lam in (50, 150) for _ in range(300)]
        from scipy import stats

        a = [r.nu - r.lam for r in rs if r.lam == 50]
        b = [r.nu - r.lam for r in rs if r.lam == 150]
        assert stats.ttest_ind(a, b).pvalue > 0.01


class TestRegret:
    def test_arithmetic(self):
        rs = [rec(10, 15, oracle_nu=12), rec(10, 12, oracle_nu=12)]
        assert m.regret(rs).value == pytest.approx(1.5)

    def test_self_regret_zero(self):
        rs = [rec(10, n, oracle_nu=n) for n in (10, 11, 30)]
        assert m.regret(rs).value == 0.0

    def test_faster_than_oracle_excluded(self):
        rs = [rec(10, 11, oracle_nu=14), rec(10, 20, oracle_nu=14)]
        est = m.regret(rs)
        assert est.value == 6.0 and est.n_used == 1

    def test_undefined(self):
        with pytest.raises(UndefinedResultError):
            m.regret([rec(10, 5, oracle_nu=12)])


class TestAggregate:
    def test_row(self):
        rs = [rec(10, 12, oracle_nu=11), rec(10, 14, oracle_nu=12),
              rec(None, 50, horizon=100, stream=m.NO_CHANGE)]
        row = m.aggregate(rs, "a", 1.0)
        assert set(row) == set(m.AGGREGATE_COLUMNS)
        assert row["add"] == 3.0 and row["regret"] == 1.5 and row["far"] == 0.02 and math.isnan(row["cadd"])

    def test_round_trip(self):
        r = rec(10, 12, oracle_nu=11)
        assert m.TrialRecord.from_dict(r.to_dict()) == r

    @settings(max_examples=50, deadline=None)
    @given(hst.lists(hst.tuples(hst.integers(1, 50), hst.one_of(hst.none(), hst.integers(1, 100)),
                                hst.integers(1, 100)), min_size=2, max_size=30))
    def test_order_invariance_and_ranges(self, data):
        rs = [rec(lam, nu, oracle_nu=o) for lam, nu, o in data]
        shuffled = rs[:]
        random.Random(0).shuffle(shuffled)
        for est in (m.estimate_pfa, m.estimate_add, m.regret):
            a, b = m.safe(est, rs), m.safe(est, shuffled)
            assert (math.isnan(a.value) and math.isnan(b.value)) or a.value == pytest.approx(b.value)
        assert 0.0 <= m.estimate_pfa(rs).value <= 1.0
        for est in (m.estimate_add, m.regret):
            v = m.safe(est, rs).value
            assert math.isnan(v) or v >= 0
