"""Private release mechanisms.

Each ``release_*`` function consumes a dataset and a budget and returns a
:class:`ReleaseReport` carrying the sanitized points together with the exact
budget spent. The estimator classes at the bottom expose the same
mechanisms through the scikit-learn ``fit`` / ``get_params`` protocol.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import (BinGrid, Dataset, DomainError, HistogramDensity, PrivacyBudget,
                   as_dataset, check_rng, check_unit_cube, format_value,
                   histogram_counts, write_key_values)
from .estimators import (C0, NormalizedSeries, SeriesDensity, fit_histogram,
                         fit_series, sample_from_histogram, sample_from_series,
                         series_order, smooth_histogram)
from .exponential import (McmcConfig, default_release_size, initial_release,
                          make_state, run_chain)
from .metrics import DistanceKind, sensitivity_bound

LOG2 = math.log(2.0)


class PrivacyGateError(DomainError):
    """The requested parameters would spend more than the privacy budget."""


class MechanismKind(enum.Enum):
    SMOOTHED_HISTOGRAM = "smoothed-hist"
    PERTURBED_HISTOGRAM = "perturbed-hist"
    EXPONENTIAL = "exponential"
    EXPONENTIAL_MEAN = "exponential-mean"
    PERTURBED_SERIES = "perturbed-series"


@dataclass(frozen=True)
class MechanismSpec:
    kind: MechanismKind
    alpha: float
    m: int | None = None
    delta: float | None = None
    k: int | None = None
    gamma: float | None = None
    distance: DistanceKind | None = None
    mcmc: McmcConfig | None = None
    log_sup_density: float | None = None
    notes: tuple = ()

    def __post_init__(self):
        PrivacyBudget(self.alpha)
        for name in ("m", "k"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise DomainError(f"{name} must be positive")

    def items(self):
        yield "mechanism", self.kind.value
        yield "alpha", float(self.alpha)
        for name in ("m", "delta", "k", "gamma", "log_sup_density"):
            v = getattr(self, name)
            if v is not None:
                yield name, v
        if self.distance is not None:
            yield "distance", self.distance.value
        if self.mcmc is not None:
            for name in ("burn_in", "thin", "proposal_scale", "chain_init"):
                yield f"mcmc_{name}", getattr(self.mcmc, name)
        for i, note in enumerate(self.notes):
            yield f"note_{i}", note


@dataclass
class ReleaseReport:
    """A sanitized dataset with its provenance.

    ``realized_alpha`` is attached at release time and is never recomputed
    from downstream artifacts: anything derived from ``sanitized`` inherits it.
    """

    sanitized: Dataset
    spec: MechanismSpec
    seed: int
    realized_alpha: float
    diagnostics: dict = field(default_factory=dict)
    stream: tuple = ()
    density: object = field(default=None, repr=False, compare=False)
    chain: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.realized_alpha > self.spec.alpha + 1e-12:
            raise PrivacyGateError(
                f"realized alpha {self.realized_alpha!r} exceeds budget {self.spec.alpha!r}")

    def items(self):
        yield from self.spec.items()
        yield "n_released", self.sanitized.n
        yield "dim", self.sanitized.dim
        yield "realized_alpha", float(self.realized_alpha)
        yield "seed", self.seed
        if self.stream:
            yield "stream", list(self.stream)
        for key in sorted(self.diagnostics):
            yield f"diag_{key}", self.diagnostics[key]

    def write(self, path):
        write_key_values(path, self.items())

    def to_text(self):
        return "".join(f"{k}: {format_value(v)}\n" for k, v in self.items())


# ---------------------------------------------------------------------------
# noise


def laplace_noise(scale: float, size, rng) -> np.ndarray:
    """Zero-mean Laplace draws by inverting the CDF of open uniforms."""
    rng = check_rng(rng)
    u = rng.open_uniform(size) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def histogram_noise_scale(alpha: float) -> float:
    """Laplace scale ``2 / alpha`` for bin counts (one move shifts two counts by 1)."""
    return 2.0 / alpha


def series_noise_scale(n: int, m: int, alpha: float) -> float:
    """Laplace scale for ``m`` cosine coefficients averaged over ``n`` points.

    Swapping one point moves each coefficient by at most ``2 c0 / n``, so the
    coefficient vector has L1 sensitivity ``2 c0 m / n``.
    """
    return 2.0 * C0 * m / (n * alpha)


# ---------------------------------------------------------------------------
# smoothed histogram


def smoothed_histogram_budget(n: int, m: int, k: int, delta: float) -> float:
    """``k log((1 - delta) m / (n delta) + 1)``."""
    return k * math.log1p((1.0 - delta) * m / (n * delta))


def minimal_delta(n: int, m: int, k: int, alpha: float) -> float:
    """Smallest ``delta`` with ``smoothed_histogram_budget <= alpha``.

    Raises :class:`PrivacyGateError` when only ``delta >= 1`` would do.
    """
    if alpha <= 0:
        raise PrivacyGateError(
            f"budget infeasible for n={n}, m={m}, k={k}: alpha={alpha!r} needs delta=1")
    c = math.expm1(alpha / k)
    d = m / (m + c * n)
    while d < 1.0 and smoothed_histogram_budget(n, m, k, d) > alpha:
        d = math.nextafter(d, 1.0)
    if not d < 1.0:
        raise PrivacyGateError(
            f"budget infeasible for n={n}, m={m}, k={k}: no delta in (0,1) "
            f"satisfies k*log((1-delta)*m/(n*delta)+1) <= {alpha!r}")
    return d


def _round_bins(m_target: float, r: int) -> int:
    b = max(1, round(m_target ** (1.0 / r)))
    return b ** r


def plan_smoothed_histogram(n: int, r: int, alpha: float, target: str = "ks") -> MechanismSpec:
    """Rate-optimal ``(m, k, delta)`` for the smoothed histogram.

    KS: ``m ~ n^(r/(6+r))``, ``k ~ n^(4/(6+r))``; L2: ``m ~ n^(r/(2r+3))``,
    ``k ~ n^((r+2)/(2r+3))``. In both cases ``delta = m k / (n alpha)``, then
    raised to the smallest feasible value if the exact budget is exceeded.
    """
    if n < 2:
        raise DomainError("n must be >= 2")
    if not alpha > 0:
        raise PrivacyGateError("alpha must be positive")
    target = target.lower()
    if target == "ks":
        m = _round_bins(n ** (r / (6.0 + r)), r)
        k = max(1, round(n ** (4.0 / (6.0 + r))))
    elif target == "l2":
        m = _round_bins(n ** (r / (2.0 * r + 3.0)), r)
        k = max(1, round(n ** ((r + 2.0) / (2.0 * r + 3.0))))
    else:
        raise DomainError(f"unknown target {target!r}")
    notes = []
    delta = m * k / (n * alpha)
    if delta >= 1.0:
        notes.append(f"planned delta {delta!r} >= 1; clamped")
        delta = math.nextafter(1.0, 0.0)
    if smoothed_histogram_budget(n, m, k, delta) > alpha:
        fixed = minimal_delta(n, m, k, alpha)
        notes.append(f"delta raised from {delta!r} to {fixed!r} to meet the budget")
        delta = fixed
    return MechanismSpec(MechanismKind.SMOOTHED_HISTOGRAM, alpha, m=m, delta=delta, k=k,
                         notes=tuple(notes))


def check_smoothed_gate(n, m, k, delta, alpha) -> float:
    if delta is None or not 0.0 < delta < 1.0:
        raise PrivacyGateError(
            f"delta must lie in (0,1), got {delta!r}; sampling from the usual histogram "
            "(delta=0) does not preserve differential privacy")
    spent = smoothed_histogram_budget(n, m, k, delta)
    if spent > alpha:
        raise PrivacyGateError(
            f"k*log((1-delta)*m/(n*delta)+1) = {spent!r} > alpha = {alpha!r} "
            f"(n={n}, m={m}, k={k}, delta={delta!r})")
    return spent


def release_smoothed_histogram(data, spec: MechanismSpec, rng=None) -> ReleaseReport:
    if spec.kind is not MechanismKind.SMOOTHED_HISTOGRAM:
        raise DomainError("spec is not a smoothed-histogram spec")
    data = as_dataset(data)
    rng = check_rng(rng)
    grid = BinGrid.from_total_bins(spec.m, data.dim)
    spent = check_smoothed_gate(data.n, spec.m, spec.k, spec.delta, spec.alpha)
    hist = smooth_histogram(fit_histogram(data, grid), spec.delta)
    z = sample_from_histogram(hist, spec.k, rng)
    return ReleaseReport(z, spec, rng.seed, spent, {"min_bin_prob": float(hist.probs.min())},
                         rng.stream)


# ---------------------------------------------------------------------------
# perturbed histogram


def perturbed_probs(counts, noise):
    """Clamp noisy counts at zero and normalise; uniform when nothing survives."""
    noisy = counts + noise
    clamped = np.maximum(noisy, 0.0)
    total = math.fsum(clamped)
    if total > 0:
        return clamped / total, noisy, total, False
    return np.full(counts.shape[0], 1.0 / counts.shape[0]), noisy, 0.0, True


def release_perturbed_histogram(data, m: int, alpha: float, k: int | None = None,
                                rng=None, noise=None) -> ReleaseReport:
    """Laplace-perturbed bin counts, clamped, normalised and resampled.

    ``noise`` overrides the Laplace draws (testing only).
    """
    data = as_dataset(data)
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    rng = check_rng(rng)
    k = data.n if k is None else k
    grid = BinGrid.from_total_bins(m, data.dim)
    counts = histogram_counts(data, grid).astype(float)
    if noise is None:
        noise = laplace_noise(histogram_noise_scale(alpha), grid.m, rng)
    probs, noisy, total, degenerate = perturbed_probs(counts, np.asarray(noise, dtype=float))
    hist = HistogramDensity(grid, probs)
    z = sample_from_histogram(hist, k, rng)
    spec = MechanismSpec(MechanismKind.PERTURBED_HISTOGRAM, alpha, m=m, k=k)
    diag = {
        "clamped_bins": int((noisy < 0).sum()),
        "noisy_total": total,
        "degenerate_uniform": degenerate,
        "noisy_counts": noisy,
    }
    return ReleaseReport(z, spec, rng.seed, alpha, diag, rng.stream, density=hist)


# ---------------------------------------------------------------------------
# exponential mechanism


def release_exponential(data, spec: MechanismSpec, rng=None, n_samples=0) -> ReleaseReport:
    """Approximate draw from ``exp(-alpha xi(x, z) / (2 Delta))`` by Metropolis.

    The reported budget is nominal: it holds for exact draws from the target,
    and the chain diagnostics quantify how close the sampler got.
    """
    data = as_dataset(data)
    rng = check_rng(rng)
    kind = spec.distance or DistanceKind.KS
    x = data.points
    gamma = spec.gamma or 2.0
    m_n = series_order(data.n, gamma) if kind is DistanceKind.L2_SERIES else 1
    sens = sensitivity_bound(kind, data.n, m_n, data.dim)
    B = LOG2 if spec.log_sup_density is None else spec.log_sup_density
    k = spec.k or default_release_size(kind, data.n, spec.alpha, B)
    config = (spec.mcmc or McmcConfig()).resolved(k)
    spec = replace(spec, kind=MechanismKind.EXPONENTIAL, distance=kind, k=k, mcmc=config,
                   log_sup_density=B if kind is DistanceKind.KS else spec.log_sup_density,
                   gamma=gamma if kind is DistanceKind.L2_SERIES else spec.gamma)
    gen = rng.generator
    z0 = initial_release(x, k, config, gen)
    state = make_state(kind, x, z0, gamma=gamma, ks_resolution=config.ks_resolution)
    initial_xi = state.value
    chain = run_chain(state, spec.alpha, sens, config, gen, n_samples=n_samples)
    diag = {
        "sensitivity": sens,
        "acceptance_rate": chain.acceptance_rate,
        "late_acceptance_rate": chain.late_acceptance_rate,
        "initial_xi": initial_xi,
        "final_xi": chain.value,
        "min_xi": float(chain.trace.min()),
        "steps": chain.steps,
        "budget_caveat": "nominal; exact for exact sampling of the target",
    }
    if chain.late_acceptance_rate < 0.01:
        diag["warning"] = "acceptance rate below 1% after burn-in"
    return ReleaseReport(Dataset(np.clip(chain.z, 0.0, 1.0)), spec, rng.seed, spec.alpha,
                         diag, rng.stream, chain=chain)


def _truncated_normal_1d(mu, sigma, gen, max_tries=1_000_000):
    """One draw from N(mu, sigma^2) restricted to [0, 1] by rejection.

    Narrow kernels propose from the Gaussian itself; wide ones (sigma > 1,
    where most Gaussian mass falls outside the box) propose uniformly and
    accept with the Gaussian weight.
    """
    for _ in range(max_tries):
        if sigma <= 1.0:
            z = gen.normal(mu, sigma)
            if 0.0 <= z <= 1.0:
                return z
        else:
            z = gen.random()
            if gen.random() <= math.exp(-0.5 * ((z - mu) / sigma) ** 2):
                return z
    raise RuntimeError("truncated normal rejection sampler did not terminate")


def truncated_normal_mass(mu, sigma):
    return float(ndtr((1.0 - mu) / sigma) - ndtr(-mu / sigma))


def release_exponential_mean(data, alpha: float, rng=None) -> ReleaseReport:
    """Release one point from the density ``exp(-alpha n ||xbar - z||^2 / (2 r))`` on the cube."""
    data = as_dataset(data)
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    rng = check_rng(rng)
    gen = rng.generator
    r = data.dim
    xbar = data.points.mean(axis=0)
    sigma = math.sqrt(r / (alpha * data.n))
    z = np.array([_truncated_normal_1d(mu, sigma, gen) for mu in xbar])
    spec = MechanismSpec(MechanismKind.EXPONENTIAL_MEAN, alpha, k=1,
                         distance=DistanceKind.MEAN_SQUARED)
    diag = {"sensitivity": r / data.n, "kernel_sd": sigma}
    return ReleaseReport(Dataset(z.reshape(1, -1)), spec, rng.seed, alpha, diag, rng.stream)


# ---------------------------------------------------------------------------
# perturbed orthogonal series


def release_perturbed_series(data, gamma: float, alpha: float, k: int | None = None,
                             rng=None, noise=None, quadrature_points: int = 4096) -> ReleaseReport:
    data = as_dataset(data)
    if data.dim != 1:
        raise DomainError("series release is one-dimensional")
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    rng = check_rng(rng)
    k = data.n if k is None else k
    beta = fit_series(data, gamma)
    m = beta.order
    scale = series_noise_scale(data.n, m, alpha)
    if noise is None:
        noise = laplace_noise(scale, m, rng)
    noise = np.asarray(noise, dtype=float)
    noisy = SeriesDensity(beta.coeffs + noise)
    diag = {"order": m, "noise_scale": scale, "noise": noise,
            "noise_mean_abs": float(np.abs(noise).mean())}
    try:
        density = NormalizedSeries(noisy, quadrature_points)
        diag["normalizer"] = density.Z
        diag["truncated"] = density.truncated
        diag["degenerate_uniform"] = False
    except DomainError:
        density = NormalizedSeries(SeriesDensity(np.zeros(0)), quadrature_points)
        diag["normalizer"] = 0.0
        diag["degenerate_uniform"] = True
    z = sample_from_series(density, k, rng)
    spec = MechanismSpec(MechanismKind.PERTURBED_SERIES, alpha, k=k, gamma=gamma, m=m)
    return ReleaseReport(z, spec, rng.seed, alpha, diag, rng.stream, density=density)


# ---------------------------------------------------------------------------
# scikit-learn style front ends


class _ReleaseMixin:
    def fit_release(self, X, y=None) -> ReleaseReport:
        return self.fit(X).release_

    def fit_transform(self, X, y=None):
        """Fit and return the sanitized points; their count is the release size, not ``n``."""
        return self.fit(X).release_.sanitized.points.copy()

    @property
    def sanitized_(self):
        check_is_fitted(self, "release_")
        return self.release_.sanitized.points


class SmoothedHistogramMechanism(_ReleaseMixin, BaseEstimator):
    """Sample from a histogram mixed with the uniform density.

    Leave any of ``bins``, ``n_release`` or ``delta`` as ``None`` to take the
    planned value for ``target``.
    """

    def __init__(self, alpha=1.0, bins=None, delta=None, n_release=None, target="ks",
                 random_state=None):
        self.alpha = alpha
        self.bins = bins
        self.delta = delta
        self.n_release = n_release
        self.target = target
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_unit_cube(X)
        n, r = X.shape
        plan = plan_smoothed_histogram(n, r, self.alpha, self.target) if None in (
            self.bins, self.delta, self.n_release) else None
        spec = MechanismSpec(
            MechanismKind.SMOOTHED_HISTOGRAM, self.alpha,
            m=self.bins if self.bins is not None else plan.m,
            delta=self.delta if self.delta is not None else plan.delta,
            k=self.n_release if self.n_release is not None else plan.k,
            notes=plan.notes if plan else ())
        self.release_ = release_smoothed_histogram(X, spec, self.random_state)
        self.n_features_in_ = r
        return self


class PerturbedHistogramMechanism(_ReleaseMixin, BaseEstimator):
    """Laplace-perturbed histogram; ``density_`` may be resampled freely afterwards."""

    def __init__(self, alpha=1.0, bins=10, n_release=None, random_state=None):
        self.alpha = alpha
        self.bins = bins
        self.n_release = n_release
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_unit_cube(X)
        self.release_ = release_perturbed_histogram(X, self.bins, self.alpha, self.n_release,
                                                    self.random_state)
        self.density_ = self.release_.density
        self.n_features_in_ = X.shape[1]
        return self

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self, "density_")
        return sample_from_histogram(self.density_, n_samples, random_state).points


class ExponentialMechanism(_ReleaseMixin, BaseEstimator):
    def __init__(self, alpha=1.0, distance="ks", n_release=None, gamma=2.0,
                 log_sup_density=LOG2, mcmc=None, random_state=None):
        self.alpha = alpha
        self.distance = distance
        self.n_release = n_release
        self.gamma = gamma
        self.log_sup_density = log_sup_density
        self.mcmc = mcmc
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_unit_cube(X)
        spec = MechanismSpec(MechanismKind.EXPONENTIAL, self.alpha, k=self.n_release,
                             gamma=self.gamma, distance=DistanceKind.parse(self.distance),
                             mcmc=self.mcmc, log_sup_density=self.log_sup_density)
        self.release_ = release_exponential(X, spec, self.random_state)
        self.n_features_in_ = X.shape[1]
        return self


class ExponentialMeanMechanism(_ReleaseMixin, BaseEstimator):
    """Release a single point whose location privately tracks the sample mean."""

    def __init__(self, alpha=1.0, random_state=None):
        self.alpha = alpha
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_unit_cube(X)
        self.release_ = release_exponential_mean(X, self.alpha, self.random_state)
        self.n_features_in_ = X.shape[1]
        return self


class PerturbedSeriesMechanism(_ReleaseMixin, BaseEstimator):
    def __init__(self, alpha=1.0, gamma=2.0, n_release=None, random_state=None):
        self.alpha = alpha
        self.gamma = gamma
        self.n_release = n_release
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_unit_cube(X, 1)
        self.release_ = release_perturbed_series(X, self.gamma, self.alpha, self.n_release,
                                                 self.random_state)
        self.density_ = self.release_.density
        self.n_features_in_ = 1
        return self

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self, "density_")
        return sample_from_series(self.density_, n_samples, random_state).points
