import math

import numpy as np
import pytest
from scipy import integrate, stats
from sklearn.base import clone

from dpsynth.core import BinGrid, Dataset, DomainError, SeededRng
from dpsynth.estimators import C0, fit_histogram, fit_series, psi, series_order
from dpsynth.exponential import McmcConfig, default_release_size
from dpsynth.mechanisms import (ExponentialMeanMechanism, ExponentialMechanism, MechanismKind,
                                MechanismSpec, PerturbedHistogramMechanism,
                                PerturbedSeriesMechanism, PrivacyGateError, ReleaseReport,
                                SmoothedHistogramMechanism, _truncated_normal_1d,
                                check_smoothed_gate, histogram_noise_scale, laplace_noise,
                                minimal_delta, plan_smoothed_histogram,
                                release_exponential, release_exponential_mean,
                                release_perturbed_histogram, release_perturbed_series,
                                release_smoothed_histogram, series_noise_scale,
                                smoothed_histogram_budget)
from dpsynth.metrics import DistanceKind, l2_squared_vs_true


def beta_data(n, seed=0, a=10.0, b=10.0):
    return Dataset(np.random.default_rng(seed).beta(a, b, n))


class TestPlanner:
    def test_small_ks_plan(self):
        spec = plan_smoothed_histogram(100, 1, 1.0, "ks")
        assert (spec.m, spec.k) == (2, 14)
        assert spec.delta == pytest.approx(0.28)
        assert smoothed_histogram_budget(100, spec.m, spec.k, spec.delta) <= 1.0

    def test_budget_use_tends_to_one(self):
        used = []
        for n in (10 ** 3, 10 ** 5, 10 ** 7, 10 ** 9):
            s = plan_smoothed_histogram(n, 1, 1.0, "ks")
            used.append(smoothed_histogram_budget(n, s.m, s.k, s.delta))
            assert used[-1] <= 1.0
        assert used == sorted(used)
        assert used[-1] > 0.99
        assert plan_smoothed_histogram(10 ** 9, 1, 1.0).delta < 0.01

    def test_tiny_sample_is_repaired(self):
        spec = plan_smoothed_histogram(4, 1, 0.01, "ks")
        assert 0 < spec.delta < 1
        assert smoothed_histogram_budget(4, spec.m, spec.k, spec.delta) <= 0.01
        assert spec.notes

    def test_l2_plan_two_dim(self):
        spec = plan_smoothed_histogram(10_000, 2, 1.0, "l2")
        assert round(math.sqrt(spec.m)) ** 2 == spec.m
        assert smoothed_histogram_budget(10_000, spec.m, spec.k, spec.delta) <= 1.0

    def test_minimal_delta_is_tight(self):
        for n, m, k, a in [(10, 4, 3, 0.5), (1000, 16, 200, 1.0), (4, 2, 2, 0.01)]:
            d = minimal_delta(n, m, k, a)
            assert smoothed_histogram_budget(n, m, k, d) <= a
            assert smoothed_histogram_budget(n, m, k, d * (1 - 1e-9)) > a

    def test_infeasible(self):
        with pytest.raises(PrivacyGateError, match="budget infeasible"):
            minimal_delta(4, 2, 2, 1e-20)
        with pytest.raises(PrivacyGateError):
            plan_smoothed_histogram(10, 1, 0.0)

    def test_bad_target(self):
        with pytest.raises(DomainError):
            plan_smoothed_histogram(100, 1, 1.0, "tv")


class TestSmoothedRelease:
    def test_realized_alpha(self):
        spec = MechanismSpec(MechanismKind.SMOOTHED_HISTOGRAM, 1.0, m=2, delta=0.5, k=1)
        rep = release_smoothed_histogram(Dataset([0.1, 0.2]), spec, SeededRng(0))
        assert rep.realized_alpha == pytest.approx(math.log(2.0), rel=1e-15)
        assert rep.sanitized.n == 1

    def test_gate_refuses_with_values(self):
        spec = MechanismSpec(MechanismKind.SMOOTHED_HISTOGRAM, 0.1, m=10, delta=0.1, k=100)
        with pytest.raises(PrivacyGateError, match=r"k\*log\(\(1-delta\)\*m/\(n\*delta\)\+1\) = "):
            release_smoothed_histogram(beta_data(500), spec, SeededRng(0))

    def test_delta_zero_message(self):
        with pytest.raises(PrivacyGateError, match="does not preserve differential privacy"):
            check_smoothed_gate(10, 2, 1, 0.0, 1.0)

    def test_delta_near_one_is_uniform(self):
        spec = MechanismSpec(MechanismKind.SMOOTHED_HISTOGRAM, 1.0, m=8, delta=1 - 1e-9, k=5000)
        for data in (Dataset(np.zeros(50)), Dataset(np.ones(50))):
            z = release_smoothed_histogram(data, spec, SeededRng(3)).sanitized.points[:, 0]
            assert stats.kstest(z, "uniform").pvalue > 0.01

    def test_deterministic(self):
        spec = plan_smoothed_histogram(300, 1, 1.0)
        a = release_smoothed_histogram(beta_data(300), spec, SeededRng(5))
        b = release_smoothed_histogram(beta_data(300), spec, SeededRng(5))
        assert a.sanitized == b.sanitized
        assert a.to_text() == b.to_text()


class TestLaplace:
    def test_variance(self):
        draws = laplace_noise(histogram_noise_scale(0.1), 1_000_000, SeededRng(1))
        assert histogram_noise_scale(0.1) == 20.0
        assert abs(draws.var() - 800.0) / 800.0 < 0.05
        assert abs(draws.mean()) < 3 * math.sqrt(800.0 / 1e6)

    def test_distribution(self):
        draws = laplace_noise(2.0, 20_000, SeededRng(2))
        assert stats.kstest(draws, stats.laplace(scale=2.0).cdf).pvalue > 0.01

    def test_inverse_cdf_formula(self):
        rng = SeededRng(9)
        u = rng.child(0).open_uniform(10)
        expected = -3.0 * np.sign(u - 0.5) * np.log(1 - 2 * np.abs(u - 0.5))
        # same stream consumed through the library routine
        assert np.allclose(laplace_noise(3.0, 10, SeededRng(9).child(0)), expected)


class TestPerturbedHistogram:
    def test_zero_noise_matches_plain(self):
        data = beta_data(200)
        rep = release_perturbed_histogram(data, 10, 1.0, 50, SeededRng(0), noise=np.zeros(10))
        assert np.array_equal(rep.density.probs, fit_histogram(data, BinGrid(1, 10)).probs)
        assert rep.realized_alpha == 1.0
        assert rep.sanitized.n == 50

    def test_degenerate_is_uniform(self):
        rep = release_perturbed_histogram(beta_data(20), 4, 1.0, 10, SeededRng(0),
                                          noise=np.full(4, -1000.0))
        assert rep.diagnostics["degenerate_uniform"] is True
        assert rep.diagnostics["clamped_bins"] == 4
        assert np.allclose(rep.density.probs, 0.25)

    def test_clamp_bookkeeping(self):
        noise = np.array([-100.0, 0.5, 0.0, 0.0])
        data = Dataset([0.1, 0.3, 0.6, 0.9])
        rep = release_perturbed_histogram(data, 4, 1.0, None, SeededRng(0), noise=noise)
        assert rep.diagnostics["clamped_bins"] == 1
        assert rep.diagnostics["noisy_total"] == pytest.approx(3.5)
        assert np.allclose(rep.density.probs, [0, 1.5 / 3.5, 1 / 3.5, 1 / 3.5])
        assert rep.sanitized.n == 4

    def test_two_dim(self):
        pts = np.random.default_rng(0).random((100, 2))
        rep = release_perturbed_histogram(pts, 9, 1.0, 30, SeededRng(1))
        assert rep.sanitized.dim == 2 and rep.sanitized.n == 30

    def test_deterministic(self):
        a = release_perturbed_histogram(beta_data(100), 10, 0.1, 1000, SeededRng(7))
        b = release_perturbed_histogram(beta_data(100), 10, 0.1, 1000, SeededRng(7))
        assert a.sanitized == b.sanitized and a.to_text() == b.to_text()


class TestExponential:
    def test_release_size_formula(self):
        # (3/log 2)^(2/3) = 2.6557..., so the ceiling lands on 266
        k = default_release_size(DistanceKind.KS, 1000, 1.0, math.log(2.0))
        assert k == math.ceil((3 / math.log(2)) ** (2 / 3) * 1000 ** (2 / 3))
        assert k == 266

    def test_zero_alpha_is_flat(self):
        spec = MechanismSpec(MechanismKind.EXPONENTIAL, 0.0, k=4,
                             mcmc=McmcConfig(burn_in=100, thin=20))
        rep = release_exponential(beta_data(50), spec, SeededRng(1), n_samples=3000)
        assert rep.diagnostics["acceptance_rate"] == 1.0
        pooled = np.concatenate([s[:, 0] for s in rep.chain.samples])
        assert stats.kstest(pooled, "uniform").statistic < 0.03

    def test_large_alpha_drives_xi_down(self):
        spec = MechanismSpec(MechanismKind.EXPONENTIAL, 1e5, k=20,
                             mcmc=McmcConfig(burn_in=6000))
        rep = release_exponential(beta_data(200), spec, SeededRng(2))
        trace = rep.chain.trace
        assert rep.diagnostics["final_xi"] < rep.diagnostics["initial_xi"]
        assert rep.diagnostics["final_xi"] <= 1.5 / 20
        running = np.minimum.accumulate(trace)
        third = len(trace) // 3
        assert running[third] >= running[2 * third] >= running[-1]

    def test_low_acceptance_warning(self):
        # every move changes the mean-squared distance, so a sharp target stalls the chain
        spec = MechanismSpec(MechanismKind.EXPONENTIAL, 1e7, k=1,
                             distance=DistanceKind.MEAN_SQUARED, mcmc=McmcConfig(burn_in=4000))
        rep = release_exponential(beta_data(100), spec, SeededRng(0))
        assert rep.diagnostics["late_acceptance_rate"] < 0.01
        assert "warning" in rep.diagnostics

    def test_report_fields(self):
        spec = MechanismSpec(MechanismKind.EXPONENTIAL, 1.0, distance=DistanceKind.KS)
        rep = release_exponential(beta_data(100), spec, SeededRng(3))
        text = rep.to_text()
        assert "diag_acceptance_rate:" in text
        assert "log_sup_density: 0.693147" in text
        assert rep.spec.k == default_release_size(DistanceKind.KS, 100, 1.0)
        assert rep.spec.mcmc.burn_in == 50 * rep.spec.k

    def test_series_distance(self):
        spec = MechanismSpec(MechanismKind.EXPONENTIAL, 1.0, distance=DistanceKind.L2_SERIES,
                             gamma=2.0)
        rep = release_exponential(beta_data(100), spec, SeededRng(4))
        assert rep.sanitized.n == 10
        assert rep.diagnostics["sensitivity"] == pytest.approx(4 * series_order(100, 2.0) / 100)

    def test_two_dim_ks(self):
        pts = np.random.default_rng(0).random((40, 2))
        spec = MechanismSpec(MechanismKind.EXPONENTIAL, 1.0, k=5, mcmc=McmcConfig(burn_in=200))
        rep = release_exponential(pts, spec, SeededRng(5))
        assert rep.sanitized.dim == 2

    def test_histogram_l2_refused(self):
        spec = MechanismSpec(MechanismKind.EXPONENTIAL, 1.0, k=3,
                             distance=DistanceKind.L2_SQUARED_HISTOGRAM)
        with pytest.raises(DomainError):
            release_exponential(beta_data(10), spec, SeededRng(0))

    def test_deterministic(self):
        spec = MechanismSpec(MechanismKind.EXPONENTIAL, 1.0, k=10)
        a = release_exponential(beta_data(60), spec, SeededRng(8))
        b = release_exponential(beta_data(60), spec, SeededRng(8))
        assert a.sanitized == b.sanitized and a.to_text() == b.to_text()


def truncated_normal_moments(mu, sigma):
    w = lambda z: math.exp(-0.5 * ((z - mu) / sigma) ** 2)  # noqa: E731
    z0, _ = integrate.quad(w, 0, 1)
    m1, _ = integrate.quad(lambda z: z * w(z), 0, 1)
    m2, _ = integrate.quad(lambda z: z * z * w(z), 0, 1)
    mean = m1 / z0
    return mean, m2 / z0 - mean ** 2


class TestExponentialMean:
    def test_variance_against_quadrature(self):
        x = beta_data(100, seed=4)
        sigma = math.sqrt(1 / (1.0 * 100))
        mu = float(x.points.mean())
        gen = SeededRng(10).generator
        draws = np.array([_truncated_normal_1d(mu, sigma, gen) for _ in range(100_000)])
        mean, var = truncated_normal_moments(mu, sigma)
        assert abs(draws.var() - var) / var < 0.05
        # the public release uses the same kernel
        rep = release_exponential_mean(x, 1.0, SeededRng(10))
        assert rep.diagnostics["kernel_sd"] == pytest.approx(sigma)
        assert rep.spec.k == 1

    def test_wide_kernel_branch(self):
        gen = SeededRng(3).generator
        draws = np.array([_truncated_normal_1d(0.9, 3.0, gen) for _ in range(50_000)])
        mean, var = truncated_normal_moments(0.9, 3.0)
        assert abs(draws.mean() - mean) < 3 * math.sqrt(var / 50_000)

    def test_symmetric_centre(self):
        x = Dataset([0.25, 0.75])
        vals = np.array([release_exponential_mean(x, 1.0, SeededRng(i)).sanitized.points[0, 0]
                         for i in range(3000)])
        _, var = truncated_normal_moments(0.5, math.sqrt(1 / 2))
        assert abs(vals.mean() - 0.5) < 3 * math.sqrt(var / 3000)

    def test_concentrates(self):
        x = beta_data(1000, seed=1)
        z = release_exponential_mean(x, 1e6, SeededRng(0)).sanitized.points[0, 0]
        assert abs(z - x.points.mean()) < 1e-3

    def test_two_dim(self):
        pts = np.random.default_rng(0).random((50, 2))
        rep = release_exponential_mean(pts, 1.0, SeededRng(0))
        assert rep.sanitized.points.shape == (1, 2)
        assert rep.diagnostics["sensitivity"] == pytest.approx(2 / 50)


class TestPerturbedSeries:
    def test_noise_scale(self):
        assert series_order(1000, 2.0) == 4
        scale = series_noise_scale(1000, 4, 1.0)
        assert scale == pytest.approx(2 * C0 * 4 / 1000)
        draws = laplace_noise(scale, 1_000_000, SeededRng(1))
        assert abs(np.abs(draws).mean() - scale) / scale < 0.02

    def test_noise_meets_budget_on_neighbours(self):
        # density ratio of the noisy coefficients is exp(sum |beta_x - beta_y| / scale)
        rng = np.random.default_rng(0)
        n, alpha, gamma = 50, 1.0, 2.0
        m = series_order(n, gamma)
        scale = series_noise_scale(n, m, alpha)
        worst = 0.0
        for _ in range(500):
            x = rng.random(n)
            y = x.copy()
            y[rng.integers(n)] = rng.choice([0.0, 1.0, rng.random()])
            d = np.abs(fit_series(x, gamma).coeffs - fit_series(y, gamma).coeffs).sum()
            worst = max(worst, d / scale)
        assert worst <= alpha + 1e-12
        # moving a point from 0 to 1 shifts every odd coefficient by the full 2 c0 / n
        x = np.zeros(n)
        y = x.copy()
        y[0] = 1.0
        d = np.abs(fit_series(x, gamma).coeffs - fit_series(y, gamma).coeffs).sum()
        assert d / scale == pytest.approx(alpha * math.ceil(m / 2) / m)

    def test_zero_noise_keeps_coefficients(self):
        data = beta_data(500, a=3, b=3)
        beta = fit_series(data, 2.0)
        rep = release_perturbed_series(data, 2.0, 1.0, 100, SeededRng(0),
                                       noise=np.zeros(beta.order))
        assert np.array_equal(rep.density.series.coeffs, beta.coeffs)

    def test_uniform_data_gives_flat_release(self):
        x = SeededRng(12).uniform(20_000)
        rep = release_perturbed_series(x, 2.0, 1.0, None, SeededRng(1))
        assert l2_squared_vs_true(rep.density, lambda t: np.ones_like(t)) < 0.05
        assert rep.sanitized.n == 20_000
        assert {"noise_scale", "normalizer", "noise_mean_abs"} <= set(rep.diagnostics)

    def test_degenerate_fallback(self):
        data = Dataset(np.zeros(10))
        m = series_order(10, 2.0)
        noise = np.zeros(m)
        noise[-1] = 1e6
        rep = release_perturbed_series(data, 2.0, 1.0, 20, SeededRng(0), noise=noise,
                                       quadrature_points=2)
        assert rep.sanitized.n == 20

    def test_requires_one_dim(self):
        with pytest.raises(DomainError):
            release_perturbed_series(np.random.default_rng(0).random((5, 2)), 2.0, 1.0)


class TestReport:
    def test_overspend_refused(self):
        spec = MechanismSpec(MechanismKind.PERTURBED_HISTOGRAM, 0.5, m=2, k=1)
        with pytest.raises(PrivacyGateError):
            ReleaseReport(Dataset([0.5]), spec, 0, 0.6)

    def test_budget_travels_with_release(self, tmp_path):
        rep = release_perturbed_histogram(beta_data(30), 4, 0.3, 10, SeededRng(1))
        rep.write(tmp_path / "r.txt")
        text = (tmp_path / "r.txt").read_text()
        assert "realized_alpha: 0.3\n" in text and "seed: 1\n" in text

    def test_spec_validation(self):
        with pytest.raises(DomainError):
            MechanismSpec(MechanismKind.SMOOTHED_HISTOGRAM, -1.0)
        with pytest.raises(DomainError):
            MechanismSpec(MechanismKind.SMOOTHED_HISTOGRAM, 1.0, k=0)


class TestEstimatorFrontEnds:
    def test_smoothed(self):
        mech = SmoothedHistogramMechanism(alpha=1.0, random_state=0)
        z = mech.fit_transform(beta_data(500).points)
        assert z.shape[0] == mech.release_.spec.k
        assert clone(mech).get_params()["alpha"] == 1.0

    def test_perturbed(self):
        mech = PerturbedHistogramMechanism(alpha=1.0, bins=5, n_release=20, random_state=1)
        assert mech.fit_transform(beta_data(100).points).shape == (20, 1)
        assert mech.sample(7, random_state=2).shape == (7, 1)

    def test_exponential(self):
        mech = ExponentialMechanism(alpha=1.0, n_release=5, random_state=2)
        assert mech.fit_transform(beta_data(30).points).shape == (5, 1)

    def test_mean(self):
        assert ExponentialMeanMechanism(alpha=1.0, random_state=0).fit_transform(
            beta_data(30).points).shape == (1, 1)

    def test_series(self):
        mech = PerturbedSeriesMechanism(alpha=1.0, random_state=0).fit(beta_data(100).points)
        assert mech.sanitized_.shape == (100, 1)
        assert mech.sample(3, random_state=1).shape == (3, 1)
