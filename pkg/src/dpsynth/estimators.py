"""Nonprivate estimators that the release mechanisms build on."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import (BinGrid, Dataset, DomainError, HistogramDensity, as_dataset,
                   check_rng, check_unit_cube, histogram_counts)

SQRT2 = math.sqrt(2.0)
#: sup_j sup_x |psi_j(x)| for the cosine basis
C0 = SQRT2
DEFAULT_QUADRATURE = 4096


class EmpiricalCdf:
    """``F(t) = #{i : X_i <= t coordinatewise} / n``.

    For one-dimensional data evaluation is a binary search in a sorted copy;
    higher dimensions fall back to a dominance scan.
    """

    def __init__(self, data):
        self.source = as_dataset(data)
        self.dim = self.source.dim
        self.n = self.source.n
        self.sorted_ = np.sort(self.source.points[:, 0]) if self.dim == 1 else None

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.dim == 1:
            if t.ndim == 2:
                if t.shape[1] != 1:
                    raise DomainError("dimension mismatch")
                t = t[:, 0]
            return np.searchsorted(self.sorted_, t, side="right") / self.n
        t2 = np.atleast_2d(t)
        if t2.shape[-1] != self.dim:
            raise DomainError("dimension mismatch")
        out = np.empty(t2.shape[0])
        pts = self.source.points
        for s in range(0, t2.shape[0], 4096):
            chunk = t2[s:s + 4096]
            out[s:s + 4096] = np.all(pts[None, :, :] <= chunk[:, None, :], axis=2).mean(axis=1)
        return out if t.ndim == 2 else out.reshape(t.shape[:-1])


def empirical_cdf_eval(cdf: EmpiricalCdf, t) -> float:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.shape != (cdf.dim,):
        raise DomainError(f"point has dim {t.shape[-1]}, cdf has {cdf.dim}")
    return float(cdf(t.reshape(1, -1))[0])


def fit_histogram(data, grid: BinGrid) -> HistogramDensity:
    data = as_dataset(data)
    counts = histogram_counts(data, grid)
    return HistogramDensity(grid, counts / data.n)


def smooth_histogram(hist: HistogramDensity, delta: float) -> HistogramDensity:
    """Mix with the uniform density: ``(1 - delta) * hist + delta``."""
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta!r}")
    probs = (1.0 - delta) * hist.probs + delta * hist.grid.volume
    return HistogramDensity(hist.grid, _renormalize(probs))


def _renormalize(probs):
    # absorb rounding so the sum is 1 to within a few ulps
    probs = np.maximum(probs, 0.0)
    return probs / math.fsum(probs)


def sample_from_histogram(hist: HistogramDensity, k: int, rng=None) -> Dataset:
    """Draw ``k`` iid points: a bin by its probability, then uniformly inside it."""
    if k < 1:
        raise DomainError("k must be >= 1")
    rng = check_rng(rng)
    gen = rng.generator
    grid = hist.grid
    cum = np.cumsum(hist.probs)
    cum[-1] = 1.0
    j = np.searchsorted(cum, gen.random(k), side="right")
    j = np.minimum(j, grid.m - 1)
    pts = grid.lower_corners(j) + grid.h * gen.random((k, grid.dim))
    return Dataset(np.clip(pts, 0.0, 1.0))


def psi(j, x) -> np.ndarray:
    """Cosine basis ``sqrt(2) cos(pi j x)`` evaluated on the outer grid ``x`` by ``j``."""
    j = np.asarray(j, dtype=float)
    x = np.asarray(x, dtype=float)
    return SQRT2 * np.cos(np.pi * np.multiply.outer(x, j))


def series_order(n: int, gamma: float) -> int:
    """Number of cosine terms ``ceil(n ** (1 / (2 gamma + 1)))``."""
    if gamma <= 0.5:
        raise DomainError("gamma must exceed 1/2")
    raw = n ** (1.0 / (2.0 * gamma + 1.0))
    return max(1, math.ceil(raw - 1e-9))


@dataclass(frozen=True, eq=False)
class SeriesDensity:
    """``p(x) = 1 + sum_j coeffs[j-1] psi_j(x)`` on [0, 1]."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    c0 = C0

    @property
    def order(self) -> int:
        return self.coeffs.shape[0]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.order == 0:
            return np.ones_like(x)
        return 1.0 + psi(np.arange(1, self.order + 1), x) @ self.coeffs

    @property
    def envelope(self) -> float:
        """Uniform upper bound ``1 + sqrt(2) sum |beta_j|``."""
        return 1.0 + SQRT2 * float(np.abs(self.coeffs).sum())


def fit_series(data, gamma: float, order: int | None = None) -> SeriesDensity:
    """Sample-mean cosine coefficients with ``series_order(n, gamma)`` terms."""
    data = as_dataset(data)
    if data.dim != 1:
        raise DomainError("series estimation is one-dimensional")
    m = series_order(data.n, gamma) if order is None else int(order)
    if m == 0:
        return SeriesDensity(np.zeros(0))
    x = data.points[:, 0]
    # accumulate in a sorted order so the result is permutation invariant
    x = np.sort(x)
    return SeriesDensity(psi(np.arange(1, m + 1), x).mean(axis=0))


class NormalizedSeries:
    """``max(p, 0) / Z`` for a series density ``p``.

    ``Z`` is a composite midpoint rule on ``quadrature_points`` nodes. When
    ``p`` is provably nonnegative (``sqrt(2) sum |beta_j| <= 1``) or is
    nonnegative on the whole quadrature grid, ``Z = 1`` and the evaluator is
    ``p`` itself.
    """

    def __init__(self, series: SeriesDensity, quadrature_points: int = DEFAULT_QUADRATURE):
        if quadrature_points < 2:
            raise DomainError("quadrature_points must be >= 2")
        self.series = series
        self.quadrature_points = quadrature_points
        nodes = (np.arange(quadrature_points) + 0.5) / quadrature_points
        vals = series(nodes)
        self.truncated = bool(series.envelope - 1.0 > 1.0 and (vals < 0).any())
        if self.truncated:
            self.Z = float(np.maximum(vals, 0.0).mean())
            if not self.Z > 0.0:
                raise DomainError("series density is nonpositive everywhere")
        else:
            self.Z = 1.0

    def __call__(self, x) -> np.ndarray:
        v = self.series(x)
        if not self.truncated:
            return v
        return np.maximum(v, 0.0) / self.Z

    @property
    def envelope(self) -> float:
        return self.series.envelope / self.Z


def positive_part_normalize(p: SeriesDensity,
                            quadrature_points: int = DEFAULT_QUADRATURE) -> NormalizedSeries:
    return NormalizedSeries(p, quadrature_points)


def sample_from_series(p, k: int, rng=None) -> Dataset:
    """Rejection sampling against the uniform envelope."""
    if k < 1:
        raise DomainError("k must be >= 1")
    if isinstance(p, SeriesDensity):
        p = NormalizedSeries(p)
    gen = check_rng(rng).generator
    M = p.envelope
    out = []
    need = k
    while need > 0:
        batch = max(64, int(need * M * 1.1) + 16)
        x = gen.random(batch)
        u = gen.random(batch)
        acc = x[u * M <= p(x)]
        out.append(acc[:need])
        need -= out[-1].shape[0]
    return Dataset(np.concatenate(out).reshape(-1, 1))


class HistogramEstimator(BaseEstimator):
    """Histogram density estimator on an equal-width grid.

    Parameters
    ----------
    bins_per_axis : int
        Number of bins along each coordinate; the grid has
        ``bins_per_axis ** n_features`` cells.
    smoothing : float
        Weight of the uniform component mixed into the fitted histogram.
        Zero gives the plain histogram.
    """

    def __init__(self, bins_per_axis=10, smoothing=0.0):
        self.bins_per_axis = bins_per_axis
        self.smoothing = smoothing

    def fit(self, X, y=None):
        X = check_unit_cube(X)
        grid = BinGrid(X.shape[1], int(self.bins_per_axis))
        hist = fit_histogram(X, grid)
        if self.smoothing:
            hist = smooth_histogram(hist, self.smoothing)
        self.density_ = hist
        self.n_features_in_ = X.shape[1]
        return self

    def score_samples(self, X):
        check_is_fitted(self, "density_")
        X = check_unit_cube(X, self.n_features_in_)
        with np.errstate(divide="ignore"):
            return np.log(self.density_.pdf(X))

    def score(self, X, y=None):
        return float(self.score_samples(X).sum())

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self, "density_")
        return sample_from_histogram(self.density_, n_samples, random_state).points


class SeriesEstimator(BaseEstimator):
    """Cosine-series density estimator on [0, 1].

    ``n_terms=None`` picks ``ceil(n ** (1 / (2 gamma + 1)))`` terms.
    """

    def __init__(self, gamma=2.0, n_terms=None, quadrature_points=DEFAULT_QUADRATURE):
        self.gamma = gamma
        self.n_terms = n_terms
        self.quadrature_points = quadrature_points

    def fit(self, X, y=None):
        X = check_unit_cube(X, 1)
        self.series_ = fit_series(X, self.gamma, self.n_terms)
        self.density_ = positive_part_normalize(self.series_, self.quadrature_points)
        self.n_features_in_ = 1
        return self

    def score_samples(self, X):
        check_is_fitted(self, "density_")
        X = check_unit_cube(X, 1)
        with np.errstate(divide="ignore"):
            return np.log(self.density_(X[:, 0]))

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self, "density_")
        return sample_from_series(self.density_, n_samples, random_state).points
