"""Simulation harness: integrated squared error curves and empirical convergence rates."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .core import BinGrid, DomainError, check_rng
from .estimators import EmpiricalCdf, fit_series
from .exponential import McmcConfig, default_release_size
from .mechanisms import (MechanismKind, MechanismSpec, PrivacyGateError,
                         histogram_noise_scale, laplace_noise, perturbed_probs,
                         plan_smoothed_histogram, release_exponential,
                         release_perturbed_histogram, release_perturbed_series,
                         release_smoothed_histogram)
from .metrics import ContinuousCdf, DistanceKind, ks_distance, l2_squared_vs_true

COLUMNS = ("mechanism", "n", "r", "m", "k", "alpha", "delta_or_gamma", "replication",
           "metric_name", "value", "seed")


def beta_sampler(a: float, b: float, rng, size=None):
    """Beta(a, b) draws as ``G_a / (G_a + G_b)`` from two gamma variates."""
    if not (a > 0 and b > 0):
        raise DomainError("beta parameters must be positive")
    gen = check_rng(rng).generator
    ga = gen.gamma(a, size=size)
    gb = gen.gamma(b, size=size)
    return ga / (ga + gb)


@dataclass(frozen=True)
class TrueDensity:
    """A known density on [0, 1] used as simulation truth.

    ``tag`` is ``"beta"`` (params ``a, b``), ``"beta-mixture"``
    (``a1, b1, a2, b2, weight``) or ``"uniform"``.
    """

    tag: str
    params: tuple = ()

    @classmethod
    def beta(cls, a, b):
        return cls("beta", (float(a), float(b)))

    @classmethod
    def mixture(cls, a1, b1, a2, b2, weight=0.5):
        return cls("beta-mixture", (float(a1), float(b1), float(a2), float(b2), float(weight)))

    @classmethod
    def uniform(cls):
        return cls("uniform")

    @classmethod
    def parse(cls, text: str) -> "TrueDensity":
        """``beta:10,10``, ``mixture:10,3,3,10[,0.5]`` or ``uniform``."""
        name, _, rest = text.partition(":")
        vals = [float(v) for v in rest.split(",")] if rest else []
        if name == "beta" and len(vals) == 2:
            return cls.beta(*vals)
        if name in ("mixture", "beta-mixture") and len(vals) in (4, 5):
            return cls.mixture(*vals)
        if name == "uniform" and not vals:
            return cls.uniform()
        raise DomainError(f"cannot parse density {text!r}")

    @property
    def label(self) -> str:
        if self.tag == "uniform":
            return "uniform"
        return f"{self.tag}({','.join(f'{v:g}' for v in self.params)})"

    def _components(self):
        if self.tag == "beta":
            return [(1.0, stats.beta(*self.params))]
        if self.tag == "beta-mixture":
            a1, b1, a2, b2, w = self.params
            return [(w, stats.beta(a1, b1)), (1.0 - w, stats.beta(a2, b2))]
        if self.tag == "uniform":
            return [(1.0, stats.uniform(0.0, 1.0))]
        raise DomainError(f"unknown density tag {self.tag!r}")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return sum(w * d.pdf(x) for w, d in self._components())

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return sum(w * d.cdf(x) for w, d in self._components())

    def sample(self, n, rng) -> np.ndarray:
        rng = check_rng(rng)
        if self.tag == "uniform":
            return rng.generator.random(n)
        if self.tag == "beta":
            return beta_sampler(*self.params, rng, size=n)
        a1, b1, a2, b2, w = self.params
        first = rng.generator.random(n) < w
        return np.where(first, beta_sampler(a1, b1, rng, size=n),
                        beta_sampler(a2, b2, rng, size=n))

    def sup_density(self, resolution=100_001) -> float:
        """Grid maximum of the density."""
        x = np.linspace(0.0, 1.0, resolution)
        return float(np.max(self.pdf(x)))

    def squared_integral(self) -> float:
        """``int p^2``."""
        val, _ = integrate.quad(lambda t: float(self.pdf(t)) ** 2, 0.0, 1.0,
                                limit=200, epsabs=1e-13, epsrel=1e-12)
        return val


def histogram_ise(probs, grid_edges_cdf, p2: float, h: float) -> float:
    """Exact ``int (f - p)^2`` for a one-dimensional histogram ``f``.

    ``grid_edges_cdf`` holds the true bin masses; ``p2`` is ``int p^2``.
    """
    heights = probs / h
    return float(p2 - 2.0 * np.dot(heights, grid_edges_cdf) + np.dot(heights, heights) * h)


def histogram_ise_batch(probs, masses, p2, h):
    """Row-wise :func:`histogram_ise` for a stack of probability vectors."""
    heights = probs / h
    return p2 - 2.0 * heights @ masses + np.sum(heights * heights, axis=-1) * h


@dataclass
class BenchResult:
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def add(self, **kw):
        self.rows.append(tuple(kw.get(c, "") for c in COLUMNS))

    def extend(self, other: "BenchResult"):
        self.rows.extend(other.rows)
        self.notes.extend(other.notes)

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for row in self.rows:
                w.writerow([_cell(v) for v in row])

    def column(self, name):
        i = COLUMNS.index(name)
        return [r[i] for r in self.rows]

    def mean_by(self, *keys, metric=None, value="value"):
        """Mean of ``value`` grouped by the given columns."""
        idx = [COLUMNS.index(k) for k in keys]
        vi = COLUMNS.index(value)
        mi = COLUMNS.index("metric_name")
        sums, counts = {}, {}
        for r in self.rows:
            if metric is not None and r[mi] != metric:
                continue
            key = tuple(r[i] for i in idx)
            sums[key] = sums.get(key, 0.0) + r[vi]
            counts[key] = counts.get(key, 0) + 1
        return {key: sums[key] / counts[key] for key in sums}


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _bin_masses(density: TrueDensity, m: int) -> np.ndarray:
    edges = np.linspace(0.0, 1.0, m + 1)
    return np.diff(density.cdf(edges))


def _ordered_map(func, items, workers):
    """``map`` that keeps input order; ``workers > 1`` uses a thread pool."""
    if workers is None or workers <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def mise_experiment(density: TrueDensity, n_values=(100, 1000), alpha_values=(0.1, 0.01),
                    m_values=range(2, 31), replications=1000, rng=None,
                    workers: int = 1) -> BenchResult:
    """Integrated squared error of the plain and Laplace-perturbed histograms.

    For each ``(n, rep)`` one sample is drawn and reused for every ``alpha``
    and ``m`` (common random numbers), so the perturbed-minus-plain gap
    isolates the privacy noise.
    """
    rng = check_rng(rng)
    m_values = list(m_values)
    p2 = density.squared_integral()
    masses = {m: _bin_masses(density, m) for m in m_values}

    def one(task):
        ni, n, rep = task
        child = rng.child(0, ni, rep)
        x = density.sample(n, child)
        part = BenchResult()
        for m in m_values:
            grid = BinGrid(1, m)
            idx = grid.axis_indices(x.reshape(-1, 1))[:, 0]
            counts = np.bincount(idx, minlength=m).astype(float)
            plain = histogram_ise(counts / n, masses[m], p2, grid.h)
            for alpha in alpha_values:
                noise = laplace_noise(histogram_noise_scale(alpha), m, child)
                probs = perturbed_probs(counts, noise)[0]
                pert = histogram_ise(probs, masses[m], p2, grid.h)
                common = dict(n=n, r=1, m=m, alpha=alpha, replication=rep,
                              metric_name="ise", seed=rng.seed)
                part.add(mechanism="histogram", value=plain, **common)
                part.add(mechanism="perturbed-hist", value=pert, **common)
        return part

    tasks = [(ni, n, rep) for ni, n in enumerate(n_values) for rep in range(replications)]
    result = BenchResult()
    for part in _ordered_map(one, tasks, workers):
        result.extend(part)
    return result


# theoretical log-log slopes of the error in n, r = 1
def theory_slope(mechanism: str, gamma: float = 2.0, r: int = 1) -> float:
    table = {
        "histogram-l2": -2.0 / (2 + r),
        "perturbed-hist-l2": -2.0 / (2 + r),
        "smoothed-hist-l2": -2.0 / (2 * r + 3),
        "smoothed-hist-ks": -2.0 / (6 + r),
        "exponential-ks": -1.0 / 3.0,
        "perturbed-series-l2": -2.0 * gamma / (2 * gamma + 1),
    }
    if mechanism not in table:
        raise DomainError(f"unknown rate experiment {mechanism!r}")
    return table[mechanism]


RATE_MECHANISMS = ("histogram-l2", "perturbed-hist-l2", "perturbed-series-l2",
                   "smoothed-hist-l2", "smoothed-hist-ks", "exponential-ks")


@dataclass
class RateResult:
    mechanism: str
    slope: float
    theory: float
    per_n_means: dict
    per_n_medians: dict
    result: BenchResult
    dropped: list


def loglog_slope(ns, values) -> float:
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])


def _one_rate_cell(mechanism, density, n, alpha, gamma, rep_rng, extras):
    """Return ``(m, k, delta_or_gamma, metric, value)`` for one replication."""
    x = density.sample(n, rep_rng).reshape(-1, 1)
    if mechanism == "histogram-l2":
        m = math.ceil(n ** (1.0 / 3.0) - 1e-9)
        grid = BinGrid(1, m)
        counts = np.bincount(grid.axis_indices(x)[:, 0], minlength=m)
        return m, "", "", "ise", histogram_ise(counts / n, extras["masses"](m), extras["p2"], grid.h)
    if mechanism == "perturbed-hist-l2":
        m = math.ceil(n ** (1.0 / 3.0) - 1e-9)
        rep = release_perturbed_histogram(x, m, alpha, n, rep_rng)
        grid = BinGrid(1, m)
        counts = np.bincount(grid.axis_indices(rep.sanitized.points)[:, 0], minlength=m)
        return m, n, "", "ise", histogram_ise(counts / n, extras["masses"](m), extras["p2"], grid.h)
    if mechanism == "perturbed-series-l2":
        rep = release_perturbed_series(x, gamma, alpha, n, rep_rng)
        est = fit_series(rep.sanitized, gamma)
        return rep.spec.m, n, gamma, "ise", l2_squared_vs_true(est, density.pdf)
    if mechanism in ("smoothed-hist-l2", "smoothed-hist-ks"):
        target = mechanism.rsplit("-", 1)[1]
        spec = plan_smoothed_histogram(n, 1, alpha, target)
        rep = release_smoothed_histogram(x, spec, rep_rng)
        z = rep.sanitized
        if target == "ks":
            value = ks_distance(EmpiricalCdf(z), ContinuousCdf(density.cdf))
            return spec.m, spec.k, spec.delta, "ks", value
        grid = BinGrid(1, spec.m)
        counts = np.bincount(grid.axis_indices(z.points)[:, 0], minlength=spec.m)
        value = histogram_ise(counts / spec.k, extras["masses"](spec.m), extras["p2"], grid.h)
        return spec.m, spec.k, spec.delta, "ise", value
    if mechanism == "exponential-ks":
        B = extras["log_sup"]
        k = default_release_size(DistanceKind.KS, n, alpha, B)
        spec = MechanismSpec(MechanismKind.EXPONENTIAL, alpha, k=k, log_sup_density=B,
                             mcmc=extras.get("mcmc"))
        rep = release_exponential(x, spec, rep_rng)
        value = ks_distance(EmpiricalCdf(rep.sanitized), ContinuousCdf(density.cdf))
        return "", k, "", "ks", value
    raise DomainError(f"unknown rate experiment {mechanism!r}")


def rate_experiment(density: TrueDensity, mechanism: str, n_grid=(250, 500, 1000, 2000, 4000, 8000),
                    alpha=1.0, replications=200, rng=None, gamma=2.0,
                    mcmc: McmcConfig | None = None, workers: int = 1) -> RateResult:
    """Least-squares slope of ``log(mean error)`` against ``log n``.

    Sizes whose parameters fail the privacy gate are dropped and listed in
    ``dropped``; the slope uses the remaining ones.
    """
    if len(n_grid) < 4:
        raise DomainError("need at least four sample sizes")
    rng = check_rng(rng)
    theory = theory_slope(mechanism, gamma)
    p2 = density.squared_integral()
    mass_cache = {}

    def masses(m):
        if m not in mass_cache:
            mass_cache[m] = _bin_masses(density, m)
        return mass_cache[m]

    extras = {"p2": p2, "masses": masses, "mcmc": mcmc}
    if mechanism == "exponential-ks":
        extras["log_sup"] = math.log(density.sup_density())
    result = BenchResult()
    dropped = []
    means, medians = {}, {}
    for ni, n in enumerate(n_grid):
        def one(rep, ni=ni, n=n):
            return _one_rate_cell(mechanism, density, n, alpha, gamma, rng.child(1, ni, rep), extras)
        try:
            cells = _ordered_map(one, range(replications), workers)
        except PrivacyGateError as exc:
            dropped.append(n)
            result.notes.append(f"{mechanism}: n={n} dropped: {exc}")
            continue
        values = []
        for rep, (m, k, dg, metric, value) in enumerate(cells):
            values.append(value)
            result.add(mechanism=mechanism, n=n, r=1, m=m, k=k, alpha=alpha,
                       delta_or_gamma=dg, replication=rep, metric_name=metric,
                       value=float(value), seed=rng.seed)
        means[n] = float(np.mean(values))
        medians[n] = float(np.median(values))
    kept = sorted(means)
    slope = loglog_slope(kept, [means[n] for n in kept]) if len(kept) >= 2 else float("nan")
    return RateResult(mechanism, slope, theory, means, medians, result, dropped)
