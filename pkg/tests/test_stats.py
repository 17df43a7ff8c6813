import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from shelm.errors import ArgumentError, DegenerateInputError
from shelm.stats import bootstrap_ci, iqm, welch_t


class TestIqm:
    def test_one_through_eight(self):
        assert iqm([1, 2, 3, 4, 5, 6, 7, 8]) == 4.5

    def test_constant(self):
        assert iqm([3.3] * 7) == 3.3

    def test_permutation_invariant(self):
        vals = [9.0, -1.0, 4.0, 2.0, 7.0, 0.5]
        rng = np.random.default_rng(0)
        base = iqm(vals)
        for _ in range(10):
            assert iqm(rng.permutation(vals)) == base

    def test_within_min_max(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            vals = rng.standard_normal(int(rng.integers(4, 40)))
            assert vals.min() <= iqm(vals) <= vals.max()

    def test_too_few_values(self):
        with pytest.raises(ArgumentError):
            iqm([1, 2, 3])

    def test_trim_rule_floor(self):
        # n=5: drop floor(5/4)=1 from each side
        assert iqm([100, 1, 2, 3, -100]) == 2.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=4, max_size=30))
def test_iqm_bounds_property(vals):
    assert min(vals) - 1e-9 <= iqm(vals) <= max(vals) + 1e-9


class TestBootstrap:
    def test_constant_sample_degenerate_interval(self):
        lo, hi = bootstrap_ci([2.0] * 6, n_boot=200, seed=1)
        assert lo == hi == 2.0

    def test_same_seed_same_interval(self):
        vals = [1.0, 4.0, 2.0, 8.0, 5.0]
        assert bootstrap_ci(vals, seed=7) == bootstrap_ci(vals, seed=7)

    def test_different_seed_differs(self):
        vals = list(np.random.default_rng(2).standard_normal(12))
        assert bootstrap_ci(vals, n_boot=500, seed=1) != bootstrap_ci(vals, n_boot=500, seed=2)

    def test_interval_brackets_point_estimate(self):
        rng = np.random.default_rng(3)
        for i in range(1000):
            vals = rng.standard_normal(int(rng.integers(4, 24)))
            lo, hi = bootstrap_ci(vals, n_boot=300, seed=i)
            assert lo <= iqm(vals) <= hi

    def test_widens_with_level(self):
        vals = list(np.random.default_rng(4).standard_normal(16))
        lo90, hi90 = bootstrap_ci(vals, n_boot=2000, level=0.90, seed=5)
        lo99, hi99 = bootstrap_ci(vals, n_boot=2000, level=0.99, seed=5)
        assert lo99 <= lo90 and hi90 <= hi99

    def test_argument_validation(self):
        with pytest.raises(ArgumentError):
            bootstrap_ci([1, 2, 3, 4], n_boot=10)
        with pytest.raises(ArgumentError):
            bootstrap_ci([1, 2, 3, 4], level=1.5)


class TestWelch:
    def test_identical_samples(self):
        res = welch_t([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert res.t == 0.0
        assert res.p == pytest.approx(1.0)
        assert not res.significant

    def test_far_apart_is_significant(self):
        a = [0.0, 0.01, -0.01, 0.02, 0.0]
        b = [1000.0, 1000.01, 999.99, 1000.02]
        res = welch_t(a, b)
        assert res.p < 1e-6
        assert res.significant

    def test_swap_negates_t_preserves_p(self):
        rng = np.random.default_rng(5)
        a, b = rng.standard_normal(8), 0.5 + rng.standard_normal(6)
        r1, r2 = welch_t(a, b), welch_t(b, a)
        assert r1.t == pytest.approx(-r2.t)
        assert r1.p == pytest.approx(r2.p)
        assert r1.dof == pytest.approx(r2.dof)

    def test_matches_scipy(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            a = rng.standard_normal(int(rng.integers(2, 20)))
            b = 0.3 + rng.standard_normal(int(rng.integers(2, 20)))
            res = welch_t(a, b)
            ref = sps.ttest_ind(a, b, equal_var=False)
            assert res.t == pytest.approx(ref.statistic, rel=1e-12)
            assert res.p == pytest.approx(ref.pvalue, rel=1e-9)

    def test_p_in_unit_interval(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            a = rng.standard_normal(5)
            b = rng.standard_normal(5)
            res = welch_t(a, b)
            assert 0.0 < res.p <= 1.0

    def test_significance_monotone_in_alpha(self):
        a = [0.0, 0.1, 0.2, 0.05]
        b = [0.5, 0.6, 0.4, 0.55]
        p = welch_t(a, b, alpha=0.5).p
        assert welch_t(a, b, alpha=min(0.99, p + 0.01)).significant
        assert not welch_t(a, b, alpha=p / 2).significant

    def test_both_zero_variance_degenerate(self):
        with pytest.raises(DegenerateInputError):
            welch_t([1.0, 1.0], [2.0, 2.0])

    def test_too_small(self):
        with pytest.raises(ArgumentError):
            welch_t([1.0], [1.0, 2.0])
