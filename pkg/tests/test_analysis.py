import numpy as np
import pytest
from hypothesis import given, strategies as st

from infillgp.analysis import (posterior_relative_error, quantile_grid, rate_regression,
                               theoretical_rates, w2_barycenter)
from infillgp.errors import ValidationError

NS = np.array([200, 300, 450, 675, 1000])


class TestRateRegression:
    def test_exact_power(self):
        fit = rate_regression(NS, 3.0 * NS ** -0.5)
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)
        assert fit.stderr_slope == pytest.approx(0.0, abs=1e-12)
        assert fit.intercept == pytest.approx(np.log(3.0))

    def test_constant(self):
        assert rate_regression(NS, np.full(5, 0.2)).slope == pytest.approx(0.0, abs=1e-14)

    def test_noisy_recovery(self):
        rng = np.random.default_rng(0)
        ns = np.geomspace(100, 10_000, 12)
        errs = ns ** (-1 / 6) * (1 + 0.05 * rng.standard_normal(ns.size))
        fit = rate_regression(ns, errs)
        assert abs(fit.slope + 1 / 6) < 2 * fit.stderr_slope
        assert np.isfinite(fit.stderr_slope)

    @given(st.floats(1e-6, 1e6))
    def test_scale_invariant(self, c):
        errs = np.array([0.5, 0.41, 0.3, 0.27, 0.2])
        assert rate_regression(NS, c * errs).slope == pytest.approx(rate_regression(NS, errs).slope, abs=1e-10)

    @pytest.mark.parametrize("ns,errs", [([1, 2], [1, 1]), ([1, 2, 3], [1, 0, 1]), ([1, 2, 3], [1, 1]),
                                         ([5, 5, 5], [1, 2, 3]), ([1, 2, 3], [1, np.nan, 1])])
    def test_invalid(self, ns, errs):
        with pytest.raises(ValidationError):
            rate_regression(ns, errs)

    def test_to_dict(self):
        assert rate_regression(NS, NS ** -0.3).to_dict()["n_points"] == 5


class TestBarycenter:
    def test_identical_sets(self):
        x = np.random.default_rng(1).normal(size=512)
        np.testing.assert_array_equal(w2_barycenter([x, x.copy(), x[::-1]]), np.sort(x))

    def test_identical_sets_other_size(self):
        x = np.random.default_rng(2).normal(size=1000)
        np.testing.assert_allclose(w2_barycenter([x, x]), np.quantile(x, quantile_grid()), rtol=1e-15)

    def test_two_point_masses(self):
        np.testing.assert_allclose(w2_barycenter([np.full(10, 1.0), np.full(30, 4.0)]), 2.5)

    def test_shifted_copies(self):
        x = np.random.default_rng(3).exponential(size=512)
        got = w2_barycenter([x, x + 2.0])
        np.testing.assert_allclose(got, np.sort(x) + 1.0, rtol=1e-14)

    @given(st.lists(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40), min_size=1, max_size=5))
    def test_monotone(self, sets):
        q = w2_barycenter(sets)
        assert np.all(np.diff(q) >= -1e-9)

    def test_empty(self):
        with pytest.raises(ValidationError):
            w2_barycenter([])
        with pytest.raises(ValidationError):
            w2_barycenter([np.array([])])


class TestTheoreticalRates:
    def test_values(self):
        assert theoretical_rates(0.5, 2) == pytest.approx((1 / 4, 0.5))
        assert theoretical_rates(0.5, 1) == pytest.approx((1 / 6, 0.5))
        assert theoretical_rates(1.5, 1)[0] == pytest.approx(1 / 14)

    def test_large_dimension(self):
        assert theoretical_rates(0.5, 10 ** 9)[0] == pytest.approx(0.5, rel=1e-8)

    def test_invalid(self):
        with pytest.raises(ValidationError):
            theoretical_rates(0.0, 1)


def test_posterior_relative_error():
    assert posterior_relative_error([4.0, 6.0, 5.0], 5.0) == pytest.approx(0.4 / 3)
