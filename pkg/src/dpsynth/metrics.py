"""Distances between distributions and the sensitivity constants of the exponential mechanism."""

from __future__ import annotations

import enum
import itertools

import numpy as np

from .core import DomainError, HistogramDensity
from .estimators import C0, DEFAULT_QUADRATURE, EmpiricalCdf, SeriesDensity

DEFAULT_KS_RESOLUTION = 256


class DistanceKind(enum.Enum):
    KS = "ks"
    L2_SQUARED_HISTOGRAM = "l2-hist"
    L2_SERIES = "l2-series"
    MEAN_SQUARED = "mean-squared"

    @classmethod
    def parse(cls, value) -> "DistanceKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown distance {value!r}") from None


class ContinuousCdf:
    """Wrap a vectorised distribution function ``func(t) -> [0, 1]``."""

    def __init__(self, func, dim=1):
        self.func = func
        self.dim = dim

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.dim == 1 and t.ndim == 2:
            t = t[:, 0]
        return np.asarray(self.func(t), dtype=float)


def uniform_cdf(dim=1) -> ContinuousCdf:
    if dim == 1:
        return ContinuousCdf(lambda t: np.clip(t, 0.0, 1.0), 1)
    return ContinuousCdf(lambda t: np.prod(np.clip(t, 0.0, 1.0), axis=-1), dim)


def ks_two_sample(x_sorted: np.ndarray, z_sorted: np.ndarray) -> float:
    """Exact ``sup_t |F_x(t) - F_z(t)|`` for two sorted one-dimensional samples."""
    n, k = x_sorted.shape[0], z_sorted.shape[0]
    pts = np.concatenate([x_sorted, z_sorted])
    fx = np.searchsorted(x_sorted, pts, side="right") / n
    fz = np.searchsorted(z_sorted, pts, side="right") / k
    return float(np.abs(fx - fz).max())


def ks_one_sample(z_sorted: np.ndarray, cdf) -> float:
    """Exact ``sup_t |F(t) - F_z(t)|`` for a continuous ``F``."""
    k = z_sorted.shape[0]
    f = np.asarray(cdf(z_sorted), dtype=float)
    i = np.arange(1, k + 1)
    return float(max(np.abs(f - i / k).max(), np.abs(f - (i - 1) / k).max()))


def _grid_points(dim, resolution):
    axis = np.linspace(0.0, 1.0, resolution)
    return np.array(list(itertools.product(axis, repeat=dim)))


def ks_distance(a, b, resolution: int = DEFAULT_KS_RESOLUTION) -> float:
    """Kolmogorov-Smirnov distance between two distribution functions.

    In one dimension the result is exact whenever at least one side is an
    :class:`EmpiricalCdf`. With two continuous sides, or in two or more
    dimensions, it is the maximum over a regular grid with ``resolution``
    points per axis and is therefore a lower bound on the true supremum.
    """
    if a.dim != b.dim:
        raise DomainError(f"dimension mismatch: {a.dim} vs {b.dim}")
    a_emp, b_emp = isinstance(a, EmpiricalCdf), isinstance(b, EmpiricalCdf)
    if a.dim == 1:
        if a_emp and b_emp:
            return ks_two_sample(a.sorted_, b.sorted_)
        if a_emp or b_emp:
            emp, other = (a, b) if a_emp else (b, a)
            return ks_one_sample(emp.sorted_, other)
    grid = _grid_points(a.dim, resolution)
    return float(np.abs(a(grid) - b(grid)).max())


def l2_squared_histogram(a: HistogramDensity, b: HistogramDensity) -> float:
    if a.grid != b.grid:
        raise DomainError("histograms are on different grids")
    d = a.probs - b.probs
    return float(np.dot(d, d) / a.grid.volume)


def midpoint_nodes(quadrature_points: int) -> np.ndarray:
    return (np.arange(quadrature_points) + 0.5) / quadrature_points


def l2_squared_vs_true(est, true_density, quadrature_points: int = DEFAULT_QUADRATURE) -> float:
    """``int_0^1 (est - true)^2`` by the composite midpoint rule."""
    x = midpoint_nodes(quadrature_points)
    d = np.asarray(est(x), dtype=float) - np.asarray(true_density(x), dtype=float)
    return float(np.mean(d * d))


def l2_series_distance(a: SeriesDensity, b: SeriesDensity) -> float:
    """``||a - b||_2`` via Parseval; missing coefficients count as zero."""
    m = max(a.order, b.order)
    ca = np.zeros(m)
    cb = np.zeros(m)
    ca[:a.order] = a.coeffs
    cb[:b.order] = b.coeffs
    return float(np.sqrt(np.sum((ca - cb) ** 2)))


def sensitivity_bound(kind, n: int, m_n: int = 1, dim: int = 1) -> float:
    """Largest change of the distance when one of the ``n`` input points is swapped."""
    kind = DistanceKind.parse(kind)
    if n < 1:
        raise DomainError("n must be >= 1")
    if kind is DistanceKind.KS:
        return 1.0 / n
    if kind is DistanceKind.L2_SERIES:
        return 2.0 * C0 ** 2 * m_n / n
    if kind is DistanceKind.MEAN_SQUARED:
        return dim / n
    raise DomainError(f"no sensitivity bound defined for {kind.value}")
