"""Metropolis sampling from the exponential-mechanism density.

The target on ``[0,1]^(k x r)`` is proportional to
``exp(-alpha * xi(x, z) / (2 * Delta))``. Each step proposes moving one
released point by a uniform jitter reflected back into the unit cube; the
proposal is symmetric, so the Metropolis ratio only involves ``xi``.

Every distance has a small state object that keeps enough running
statistics to score a one-point move without rescanning the whole release.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError
from .estimators import psi, series_order
from .metrics import DEFAULT_KS_RESOLUTION, DistanceKind, _grid_points


@dataclass(frozen=True)
class McmcConfig:
    """Chain settings. ``None`` burn-in / thin resolve to ``50 k`` / ``k`` steps."""

    burn_in: int | None = None
    thin: int | None = None
    proposal_scale: float = 1.0
    chain_init: str = "uniform"
    ks_resolution: int = 32

    def __post_init__(self):
        if self.burn_in is not None and self.burn_in < 0:
            raise DomainError("burn_in must be >= 0")
        if self.thin is not None and self.thin < 1:
            raise DomainError("thin must be >= 1")
        if not 0.0 < self.proposal_scale <= 1.0:
            raise DomainError("proposal_scale must lie in (0, 1]")
        if self.chain_init not in ("uniform", "resample"):
            raise DomainError("chain_init must be 'uniform' or 'resample'")

    def resolved(self, k: int) -> "McmcConfig":
        return McmcConfig(
            burn_in=50 * k if self.burn_in is None else self.burn_in,
            thin=k if self.thin is None else self.thin,
            proposal_scale=self.proposal_scale,
            chain_init=self.chain_init,
            ks_resolution=self.ks_resolution,
        )


def reflect(y):
    """Fold the real line onto [0, 1] by reflection at 0 and 1."""
    y = np.mod(y, 2.0)
    return np.where(y > 1.0, 2.0 - y, y)


class _KS1D:
    """Exact one-dimensional KS between the data and the release."""

    def __init__(self, x, z):
        self.xs = np.sort(x[:, 0])
        self.n = self.xs.shape[0]
        self.fx_at_x = np.searchsorted(self.xs, self.xs, side="right") / self.n
        self.z = z
        self.zs = np.sort(z[:, 0])
        self.k = self.zs.shape[0]
        self.value = self._ks(self.zs)

    def _ks(self, zs):
        fz_x = np.searchsorted(zs, self.xs, side="right") / self.k
        fx_z = np.searchsorted(self.xs, zs, side="right") / self.n
        fz_z = np.searchsorted(zs, zs, side="right") / self.k
        return max(np.abs(fz_x - self.fx_at_x).max(), np.abs(fz_z - fx_z).max())

    def propose(self, i, new):
        zs = self.zs
        old = self.z[i, 0]
        pos = np.searchsorted(zs, old)
        ins = np.searchsorted(zs, new[0])
        if ins > pos:
            cand = np.concatenate([zs[:pos], zs[pos + 1:ins], new, zs[ins:]])
        else:
            cand = np.concatenate([zs[:ins], new, zs[ins:pos], zs[pos + 1:]])
        self._cand = cand
        return self._ks(cand)

    def accept(self, i, new, value):
        self.z[i] = new
        self.zs = self._cand
        self.value = value


class _KSGrid:
    """KS over a regular grid (lower bound on the sup) for dim >= 2."""

    def __init__(self, x, z, resolution):
        self.grid = _grid_points(x.shape[1], resolution)
        self.fx = np.array([np.all(x <= g, axis=1).mean() for g in self.grid])
        self.z = z
        self.k = z.shape[0]
        self.cz = np.zeros(self.grid.shape[0])
        for p in z:
            self.cz += self._dominates(p)
        self.value = float(np.abs(self.cz / self.k - self.fx).max())

    def _dominates(self, p):
        return np.all(self.grid >= p, axis=1)

    def propose(self, i, new):
        cand = self.cz - self._dominates(self.z[i]) + self._dominates(new)
        self._cand = cand
        return float(np.abs(cand / self.k - self.fx).max())

    def accept(self, i, new, value):
        self.z[i] = new
        self.cz = self._cand
        self.value = value


class _SeriesL2:
    """L2 distance between the data and release cosine-series estimates."""

    def __init__(self, x, z, gamma):
        n, k = x.shape[0], z.shape[0]
        self.m_n = series_order(n, gamma)
        self.m_k = series_order(k, gamma)
        self.size = max(self.m_n, self.m_k)
        self.beta_x = np.zeros(self.size)
        self.beta_x[:self.m_n] = psi(np.arange(1, self.m_n + 1), np.sort(x[:, 0])).mean(axis=0)
        self.j = np.arange(1, self.m_k + 1)
        self.z = z
        self.k = k
        self.sums = psi(self.j, z[:, 0]).sum(axis=0)
        self.value = self._dist(self.sums)

    def _dist(self, sums):
        d = self.beta_x.copy()
        d[:self.m_k] -= sums / self.k
        return float(np.sqrt(np.dot(d, d)))

    def propose(self, i, new):
        cand = self.sums - psi(self.j, self.z[i, 0]) + psi(self.j, new[0])
        self._cand = cand
        return self._dist(cand)

    def accept(self, i, new, value):
        self.z[i] = new
        self.sums = self._cand
        self.value = value


class _MeanSquared:
    def __init__(self, x, z):
        self.xbar = x.mean(axis=0)
        self.z = z
        self.k = z.shape[0]
        self.total = z.sum(axis=0)
        self.value = self._dist(self.total)

    def _dist(self, total):
        d = self.xbar - total / self.k
        return float(np.dot(d, d))

    def propose(self, i, new):
        cand = self.total - self.z[i] + new
        self._cand = cand
        return self._dist(cand)

    def accept(self, i, new, value):
        self.z[i] = new
        self.total = self._cand
        self.value = value


def make_state(kind: DistanceKind, x, z, *, gamma=2.0, ks_resolution=DEFAULT_KS_RESOLUTION):
    if kind is DistanceKind.KS:
        return _KS1D(x, z) if x.shape[1] == 1 else _KSGrid(x, z, ks_resolution)
    if kind is DistanceKind.L2_SERIES:
        if x.shape[1] != 1:
            raise DomainError("series distance is one-dimensional")
        return _SeriesL2(x, z, gamma)
    if kind is DistanceKind.MEAN_SQUARED:
        return _MeanSquared(x, z)
    raise DomainError(f"no sampler state for {kind.value}")


def initial_release(x, k, config: McmcConfig, gen):
    if config.chain_init == "uniform":
        return gen.random((k, x.shape[1]))
    return x[gen.integers(0, x.shape[0], size=k)].copy()


@dataclass
class ChainResult:
    z: np.ndarray
    value: float
    accepted: int
    steps: int
    late_accepted: int
    late_steps: int
    trace: np.ndarray
    samples: list

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.steps if self.steps else 1.0

    @property
    def late_acceptance_rate(self) -> float:
        return self.late_accepted / self.late_steps if self.late_steps else 1.0


def run_chain(state, alpha, sensitivity, config: McmcConfig, gen, n_samples=0,
              trace_every=None) -> ChainResult:
    """Run ``burn_in`` steps, then collect ``n_samples`` states ``thin`` steps apart.

    The returned ``z`` is the final state. ``trace`` holds ``xi`` every
    ``trace_every`` steps (default: once per ``k`` steps).
    """
    k, dim = state.z.shape
    burn_in, thin = config.burn_in, config.thin
    total = burn_in + n_samples * thin
    scale = config.proposal_scale
    temp = alpha / (2.0 * sensitivity)
    trace_every = trace_every or k
    # randomness is drawn in chunks so long chains stay bounded in memory
    accepted = late_accepted = late_steps = 0
    late_start = burn_in // 2
    trace = [state.value]
    samples = []
    chunk = 65536
    step = 0
    while step < total:
        size = min(chunk, total - step)
        idx = gen.integers(0, k, size=size)
        jitter = scale * (gen.random((size, dim)) - 0.5)
        log_u = np.log(gen.random(size))
        for t in range(size):
            i = idx[t]
            new = reflect(state.z[i] + jitter[t])
            value = state.propose(i, new)
            ok = temp == 0.0 or log_u[t] < -temp * (value - state.value)
            if ok:
                state.accept(i, new, value)
                accepted += 1
            step += 1
            if step > late_start:
                late_steps += 1
                late_accepted += ok
            if step % trace_every == 0:
                trace.append(state.value)
            if step > burn_in and (step - burn_in) % thin == 0:
                samples.append(state.z.copy())
    return ChainResult(state.z, state.value, accepted, total, late_accepted, late_steps,
                       np.array(trace), samples)


def default_release_size(kind: DistanceKind, n: int, alpha: float,
                         log_sup_density: float = math.log(2.0)) -> int:
    """Release size used when none is given.

    KS: ``ceil((3 alpha / B)^(2/3) n^(2/3))``; series: ``ceil(sqrt(n))``;
    mean: 1.
    """
    if kind is DistanceKind.KS:
        if log_sup_density <= 0:
            raise DomainError("log_sup_density must be positive")
        if alpha <= 0:
            return 1
        return max(1, math.ceil((3.0 * alpha / log_sup_density) ** (2.0 / 3.0)
                                * n ** (2.0 / 3.0) - 1e-9))
    if kind is DistanceKind.L2_SERIES:
        return max(1, math.ceil(math.sqrt(n) - 1e-9))
    return 1
