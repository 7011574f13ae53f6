import math

import numpy as np
import pytest
from scipy import stats

from dpsynth.core import BinGrid, DomainError, HistogramDensity
from dpsynth.estimators import SQRT2, EmpiricalCdf, SeriesDensity
from dpsynth.metrics import (ContinuousCdf, DistanceKind, ks_distance, l2_series_distance,
                             l2_squared_histogram, l2_squared_vs_true, sensitivity_bound,
                             uniform_cdf)


class TestKs:
    def test_single_atom(self):
        assert ks_distance(uniform_cdf(), EmpiricalCdf([0.5])) == 0.5

    def test_identical(self):
        x = np.random.default_rng(0).random(30)
        assert ks_distance(EmpiricalCdf(x), EmpiricalCdf(x[::-1])) == 0.0

    def test_two_atoms(self):
        assert ks_distance(EmpiricalCdf([0.25, 0.75]), uniform_cdf()) == 0.25

    def test_matches_scipy(self):
        rng = np.random.default_rng(1)
        x, z = rng.random(40), rng.random(25) ** 2
        assert ks_distance(EmpiricalCdf(x), EmpiricalCdf(z)) == pytest.approx(
            stats.ks_2samp(x, z).statistic, abs=1e-12)
        beta = stats.beta(2, 5)
        assert ks_distance(EmpiricalCdf(z), ContinuousCdf(beta.cdf)) == pytest.approx(
            stats.kstest(z, beta.cdf).statistic, abs=1e-12)

    def test_two_continuous_on_grid(self):
        d = ks_distance(uniform_cdf(), ContinuousCdf(lambda t: t ** 2), resolution=1001)
        assert d == pytest.approx(0.25, abs=1e-6)

    def test_two_dim_grid_lower_bound(self):
        cdf = EmpiricalCdf([[0.5, 0.5]])
        coarse = ks_distance(cdf, uniform_cdf(2), resolution=3)
        fine = ks_distance(cdf, uniform_cdf(2), resolution=257)
        assert coarse <= fine + 1e-12
        assert fine == pytest.approx(0.75, abs=0.01)

    def test_dimension_mismatch(self):
        with pytest.raises(DomainError):
            ks_distance(EmpiricalCdf([0.5]), uniform_cdf(2))


class TestL2:
    def test_histogram_examples(self):
        g = BinGrid(1, 2)
        a = HistogramDensity(g, np.array([1.0, 0.0]))
        b = HistogramDensity(g, np.array([0.0, 1.0]))
        assert l2_squared_histogram(a, a) == 0.0
        assert l2_squared_histogram(a, b) == pytest.approx(4.0)

    def test_histogram_grid_mismatch(self):
        a = HistogramDensity(BinGrid(1, 2), np.array([0.5, 0.5]))
        b = HistogramDensity(BinGrid(1, 4), np.full(4, 0.25))
        with pytest.raises(DomainError):
            l2_squared_histogram(a, b)

    def test_histogram_agrees_with_quadrature(self):
        g = BinGrid(1, 8)
        rng = np.random.default_rng(3)
        for _ in range(20):
            pa, pb = rng.dirichlet(np.ones(8)), rng.dirichlet(np.ones(8))
            a, b = HistogramDensity(g, pa), HistogramDensity(g, pb)
            quad = l2_squared_vs_true(lambda x: a.pdf(x), lambda x: b.pdf(x), 4096)
            assert quad == pytest.approx(l2_squared_histogram(a, b), abs=1e-9)

    def test_vs_true_parseval(self):
        truth = SeriesDensity(np.array([0.5]))
        assert l2_squared_vs_true(truth, truth) == 0.0
        val = l2_squared_vs_true(lambda x: np.ones_like(x), truth)
        assert val == pytest.approx(0.25, abs=1e-6)

    def test_vs_true_quadrature_halving(self):
        beta = stats.beta(10, 10)
        est = SeriesDensity(np.array([-0.5, 0.2, 0.05]))
        fine = l2_squared_vs_true(est, beta.pdf, 4096)
        coarse = l2_squared_vs_true(est, beta.pdf, 2048)
        assert abs(fine - coarse) < 1e-6

    def test_series_distance(self):
        a = SeriesDensity(np.array([0.3, 0.4]))
        assert l2_series_distance(a, a) == 0.0
        assert l2_series_distance(SeriesDensity(np.array([0.3])),
                                  SeriesDensity(np.zeros(0))) == pytest.approx(0.3)
        assert l2_series_distance(a, SeriesDensity(np.array([0.3]))) == pytest.approx(0.4)

    def test_series_distance_is_function_norm(self):
        a = SeriesDensity(np.array([0.3, -0.1, 0.2]))
        b = SeriesDensity(np.array([0.1]))
        quad = l2_squared_vs_true(a, b, 4096)
        assert math.sqrt(quad) == pytest.approx(l2_series_distance(a, b), abs=1e-9)


class TestSensitivity:
    def test_values(self):
        assert sensitivity_bound(DistanceKind.KS, 100) == 0.01
        assert sensitivity_bound("l2-series", 100, m_n=4) == pytest.approx(0.16)
        assert sensitivity_bound(DistanceKind.MEAN_SQUARED, 10, dim=2) == pytest.approx(0.2)
        assert 2 * SQRT2 ** 2 == pytest.approx(4.0)

    def test_histogram_l2_refused(self):
        with pytest.raises(DomainError, match="no sensitivity bound defined"):
            sensitivity_bound(DistanceKind.L2_SQUARED_HISTOGRAM, 10)

    def test_bad_inputs(self):
        with pytest.raises(DomainError):
            sensitivity_bound("ks", 0)
        with pytest.raises(DomainError):
            DistanceKind.parse("hellinger")
