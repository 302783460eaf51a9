import math

import numpy as np
import pytest
from scipy import integrate, stats

from cmmkit.density import ParzenEstimator, bandwidth_10nn, kl2_hat, kl2_hat_from_logs, kl2_terms, parzen_density
from cmmkit.errors import BandwidthError, EmptyInputError


class TestBandwidth:
    def test_two_points(self):
        assert bandwidth_10nn([[0.0, 0.0], [3.0, 0.0]]) == pytest.approx(3.0)

    def test_brute_force_1d(self):
        pts = np.arange(12.0)
        d = np.abs(pts[:, None] - pts[None, :])
        expected = np.mean([np.sort(row)[1:11].mean() for row in d])
        assert bandwidth_10nn(pts) == pytest.approx(expected, rel=1e-12)

    def test_duplicates_count_as_neighbours(self):
        pts = np.repeat(np.arange(3.0), 2)
        d = np.abs(pts[:, None] - pts[None, :])
        expected = np.mean([np.sort(row)[1:].mean() for row in d])
        assert bandwidth_10nn(pts) == pytest.approx(expected, rel=1e-12)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        pts = rng.standard_normal((60, 2))
        assert bandwidth_10nn(pts) == pytest.approx(bandwidth_10nn(pts[rng.permutation(60)]), rel=1e-12)

    def test_identical_points(self):
        with pytest.raises(BandwidthError):
            bandwidth_10nn(np.ones((5, 2)))

    def test_single_point(self):
        with pytest.raises(BandwidthError):
            bandwidth_10nn([[1.0]])


class TestParzen:
    def test_kernel_mode(self):
        est = ParzenEstimator([[2.0]], h=0.5)
        assert parzen_density(est, [2.0]) == pytest.approx(1 / math.sqrt(2 * math.pi * 0.25), rel=1e-12)

    def test_midpoint_symmetry(self):
        est = ParzenEstimator([[0.0], [2.0]], h=1.0)
        assert parzen_density(est, [1.0]) == pytest.approx(stats.norm.pdf(1.0), rel=1e-12)

    def test_direct_sum(self):
        rng = np.random.default_rng(1)
        pts = rng.standard_normal((50, 3))
        est = ParzenEstimator(pts, h=0.7)
        x = rng.standard_normal(3)
        direct = np.mean([stats.multivariate_normal.pdf(x, p, 0.49 * np.eye(3)) for p in pts])
        assert parzen_density(est, x) == pytest.approx(direct, rel=1e-10)

    def test_integrates_to_one(self):
        rng = np.random.default_rng(2)
        est = ParzenEstimator(rng.standard_normal(30)[:, None])
        val, _ = integrate.quad(lambda t: parzen_density(est, [t]), -20, 20, limit=200)
        assert val == pytest.approx(1.0, abs=1e-3)

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            ParzenEstimator(np.zeros((0, 2)), h=1.0)

    def test_bad_bandwidth(self):
        with pytest.raises(BandwidthError):
            ParzenEstimator([[0.0]], h=0.0)


class TestKl2:
    def test_identical_is_zero(self):
        lp = np.log(np.random.default_rng(3).random(100))
        assert kl2_hat_from_logs(lp, lp) == 0.0

    def test_gaussian_oracle(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(50_000)
        val = kl2_hat(lambda s: stats.norm.logpdf(s, 0, 1), lambda s: stats.norm.logpdf(s, 1, 1), x)
        assert val == pytest.approx(0.5, rel=0.10)

    def test_swap_agrees(self):
        rng = np.random.default_rng(5)
        x1 = rng.standard_normal(50_000)
        x2 = rng.standard_normal(50_000) + 1
        a = kl2_hat(lambda s: stats.norm.logpdf(s, 0, 1), lambda s: stats.norm.logpdf(s, 1, 1), x1)
        b = kl2_hat(lambda s: stats.norm.logpdf(s, 1, 1), lambda s: stats.norm.logpdf(s, 0, 1), x2)
        assert a == pytest.approx(b, rel=0.15)

    def test_terms_nonnegative_with_clamping(self):
        rng = np.random.default_rng(6)
        lp1 = rng.uniform(-2000, 10, 1000)
        lp2 = rng.uniform(-2000, 10, 1000)
        terms = kl2_terms(lp1, lp2)
        assert np.all(np.isfinite(terms)) and np.all(terms >= -1e-9)

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            kl2_hat_from_logs([], [])
