"""Brute-force privacy audits on small instances.

The smoothed-histogram release depends on the input only through its bin
counts, and within a bin the released point is uniform whatever the data.
So the audit works with count vectors and with the bins of the ``k``
released points, which makes every likelihood ratio exactly enumerable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import BinGrid, DomainError, HistogramDensity, check_rng
from .estimators import sample_from_histogram, smooth_histogram
from .mechanisms import PrivacyGateError, smoothed_histogram_budget

MAX_OUTCOMES = 200_000
MAX_RATIO_EVALUATIONS = 50_000_000


def count_vectors(n: int, m: int):
    """All ways to place ``n`` indistinguishable points into ``m`` bins."""
    for cut in itertools.combinations(range(n + m - 1), m - 1):
        edges = (-1,) + cut + (n + m - 1,)
        yield tuple(edges[i + 1] - edges[i] - 1 for i in range(m))


def neighbours(counts):
    """Count vectors reachable by moving one point to a different bin."""
    m = len(counts)
    for a in range(m):
        if counts[a] == 0:
            continue
        for b in range(m):
            if b != a:
                c = list(counts)
                c[a] -= 1
                c[b] += 1
                yield tuple(c)


def smoothed_bin_probs(counts, delta: float) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    n, m = counts.sum(), counts.shape[0]
    return (1.0 - delta) * counts / n + delta / m


def _check_size(n, m, k):
    pairs = math.comb(n + m - 1, m - 1) * m * (m - 1)
    if pairs * m ** k > MAX_RATIO_EVALUATIONS:
        raise DomainError(f"enumeration too large for n={n}, m={m}, k={k}")


@dataclass
class RatioAudit:
    ratio: float
    bound: float
    argmax_x: tuple
    argmax_y: tuple
    argmax_bins: tuple

    @property
    def passed(self) -> bool:
        return self.ratio <= self.bound * (1 + 1e-9)


def audit_smoothed(n: int, m: int, delta: float, k: int) -> RatioAudit:
    """Largest density ratio of the ``k``-point release over all neighbouring inputs."""
    if not 0.0 < delta < 1.0:
        raise PrivacyGateError(
            "delta must lie in (0,1): sampling from the usual histogram corresponding "
            "to delta=0 does not preserve differential privacy")
    _check_size(n, m, k)
    tuples = np.array(list(itertools.product(range(m), repeat=k)), dtype=np.int64)
    best, arg = 0.0, None
    for x in count_vectors(n, m):
        log_px = np.log(smoothed_bin_probs(x, delta))
        lx = log_px[tuples].sum(axis=1)
        for y in neighbours(x):
            ly = np.log(smoothed_bin_probs(y, delta))[tuples].sum(axis=1)
            diff = lx - ly
            i = int(np.argmax(diff))
            if diff[i] > best or arg is None:
                best, arg = float(diff[i]), (x, y, tuple(tuples[i]))
    bound = math.exp(smoothed_histogram_budget(n, m, k, delta))
    return RatioAudit(math.exp(best), bound, *arg)


def worst_case_ratio_smoothed(n: int, m: int, delta: float, k: int) -> float:
    return audit_smoothed(n, m, delta, k).ratio


def laplace_output_grid(n: int, grid_step: float = 0.25, margin: float = 4.0) -> np.ndarray:
    return np.arange(-margin, n + margin + grid_step / 2, grid_step)


def laplace_pair_log_ratio(x, y, alpha: float, grid) -> float:
    """Sup over ``grid``-valued outputs of the log density ratio of noisy counts.

    The noise density ``(alpha/4) exp(-alpha |v| / 2)`` factorises over bins,
    so the log ratio is a sum of per-bin terms and its supremum over a product
    grid is the sum of the per-bin suprema. Unchanged bins contribute 0.
    """
    half = alpha / 2.0
    total = 0.0
    for cx, cy in zip(x, y):
        if cx != cy:
            total += float(np.max(half * (np.abs(grid - cy) - np.abs(grid - cx))))
    return total


def worst_case_ratio_laplace_counts(n: int, m: int, alpha: float, grid_step: float = 0.25,
                                    margin: float = 4.0) -> float:
    """Sup of the noisy-count density ratio over all neighbouring count vectors.

    Outputs range over ``[-margin, n + margin]`` in steps of ``grid_step``
    in every bin.
    """
    if m < 2:
        raise DomainError("need at least two bins")
    grid = laplace_output_grid(n, grid_step, margin)
    best = 0.0
    for x in count_vectors(n, m):
        for y in neighbours(x):
            best = max(best, laplace_pair_log_ratio(x, y, alpha, grid))
    return math.exp(best)


def outcome_distribution(counts, delta: float, k: int):
    """Probabilities of every length-``k`` tuple of released bins."""
    p = smoothed_bin_probs(counts, delta)
    m = p.shape[0]
    if m ** k > MAX_OUTCOMES:
        raise DomainError(f"{m}^{k} outcomes is too many to enumerate")
    tuples = np.array(list(itertools.product(range(m), repeat=k)), dtype=np.int64)
    return tuples, np.prod(p[tuples], axis=1)


def neyman_pearson(p0, p1, level: float):
    """Most powerful randomised level-``level`` test of ``p0`` against ``p1``.

    Returns ``(phi, power)`` where ``phi[i]`` is the rejection probability
    at outcome ``i``; its size under ``p0`` is exactly ``level``.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.where(p0 > 0, p1 / p0, np.inf)
    order = np.argsort(-lr, kind="stable")
    phi = np.zeros_like(p0)
    spent = 0.0
    i = 0
    while i < order.shape[0] and spent < level:
        # outcomes sharing a likelihood ratio are randomised together
        j = i
        while j + 1 < order.shape[0] and lr[order[j + 1]] == lr[order[i]]:
            j += 1
        block = order[i:j + 1]
        mass = p0[block].sum()
        if spent + mass <= level:
            phi[block] = 1.0
            spent += mass
        else:
            phi[block] = (level - spent) / mass
            spent = level
        i = j + 1
    return phi, float(np.dot(phi, p1))


@dataclass
class PowerReport:
    power_exact: float
    power_estimate: float
    std_error: float
    bound: float
    level: float
    alpha: float
    replications: int

    @property
    def passed(self) -> bool:
        return (self.power_exact <= self.bound + 1e-12
                and self.power_estimate <= self.bound + 3 * self.std_error)


def power_bound_experiment(n: int, m: int, delta: float, k: int, level: float = 0.05,
                           replications: int = 100_000, rng=None, s_bin: int = 0,
                           t_bin: int | None = None, others=None) -> PowerReport:
    """Test ``H0: X_1 in bin s`` against ``H1: X_1 in bin t``, rest of the data fixed.

    ``others`` gives the bins of ``X_2..X_n`` (default: all in ``s_bin``, the
    configuration that maximises the likelihood ratio). Power is computed
    exactly by enumeration and estimated by simulating the mechanism under
    ``H1`` and applying the randomised test.
    """
    if not 0.0 < delta < 1.0:
        raise PrivacyGateError(
            "delta must lie in (0,1): sampling from the usual histogram corresponding "
            "to delta=0 does not preserve differential privacy")
    t_bin = m - 1 if t_bin is None else t_bin
    others = [s_bin] * (n - 1) if others is None else list(others)
    if len(others) != n - 1:
        raise DomainError("others must list n - 1 bins")
    c0 = np.bincount([s_bin] + others, minlength=m)
    c1 = np.bincount([t_bin] + others, minlength=m)
    tuples, p0 = outcome_distribution(c0, delta, k)
    _, p1 = outcome_distribution(c1, delta, k)
    phi, power = neyman_pearson(p0, p1, level)
    alpha = smoothed_histogram_budget(n, m, k, delta)

    rng = check_rng(rng)
    grid = BinGrid(1, m)
    hist = smooth_histogram(HistogramDensity(grid, c1 / n), delta)
    # outcome tuples are enumerated lexicographically: index = base-m number
    weights = m ** np.arange(k - 1, -1, -1)
    rejections = np.empty(replications)
    batch = 10_000
    gen = rng.generator
    for s in range(0, replications, batch):
        size = min(batch, replications - s)
        z = sample_from_histogram(hist, size * k, rng).points[:, 0]
        bins = grid.axis_indices(z.reshape(-1, 1))[:, 0].reshape(size, k)
        idx = bins @ weights
        rejections[s:s + size] = gen.random(size) < phi[idx]
    est = float(rejections.mean())
    se = float(rejections.std(ddof=1) / math.sqrt(replications)) if replications > 1 else 0.0
    return PowerReport(power, est, se, level * math.exp(alpha), level, alpha, replications)


def bayes_factor_range(n: int, m: int, delta: float, k: int):
    """Extreme likelihood ratios between the two simple hypotheses over all outputs."""
    c0 = np.zeros(m, dtype=int)
    c0[0] = n
    c1 = c0.copy()
    c1[0] -= 1
    c1[m - 1] += 1
    _, p0 = outcome_distribution(c0, delta, k)
    _, p1 = outcome_distribution(c1, delta, k)
    lr = p1 / p0
    return float(lr.min()), float(lr.max())
