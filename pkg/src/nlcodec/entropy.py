"""Continuous CDFs, midpoint-bin discretization, and integer coder tables.

Latent components are discretized into ``2**P`` unit-width bins centered on
the integers ``[-2**(P-1), 2**(P-1) - 1]``; the extreme bins absorb the
distribution tails so every bin table is a proper distribution. Tables are
quantized to 16-bit cumulative frequencies for the range coder.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import expit, ndtr

DEFAULT_PRECISION = 10
TABLE_FREQ_BITS = 16
TABLE_TOTAL = 1 << TABLE_FREQ_BITS
PMF_FLOOR = 1e-9
SIGMA_MIN = 0.05
SIGMA_MAX = 256.0
SIGMA_LEVELS = 64


@dataclass(frozen=True)
class BinGrid:
    """Uniform unit-width bins with integer midpoints spanning a 2**P range."""

    precision: int = DEFAULT_PRECISION

    def __post_init__(self):
        if not 1 <= self.precision <= 16:
            raise ValueError("precision must be within [1, 16]")

    @property
    def n_bins(self) -> int:
        return 1 << self.precision

    @property
    def lo(self) -> int:
        return -(1 << (self.precision - 1))

    @property
    def hi(self) -> int:
        return (1 << (self.precision - 1)) - 1


def logistic_cdf(x):
    """CDF of the standard logistic distribution, 1 / (1 + exp(-x))."""
    return expit(x)


def gaussian_cdf(x, sigma):
    """CDF of a zero-mean Gaussian with standard deviation ``sigma``."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if not np.all(sigma > 0):
        raise ValueError("sigma must be positive")
    return ndtr(np.asarray(x, dtype=np.float64) / sigma)


class LogisticPrior:
    """Standard logistic prior, independent across components."""

    __slots__ = ()

    def cdf(self, x):
        return logistic_cdf(x)


class ConditionalGaussian:
    """Zero-mean Gaussian with a per-element standard deviation field."""

    __slots__ = ("sigma",)

    def __init__(self, sigma):
        sigma = np.asarray(sigma, dtype=np.float64)
        if not np.all(sigma > 0):
            raise ValueError("sigma must be positive")
        self.sigma = sigma

    def cdf(self, x):
        return ndtr(np.asarray(x, dtype=np.float64) / self.sigma)


def bin_pmf(dist, b: int, grid: BinGrid = BinGrid()) -> float:
    """Probability mass of integer bin ``b``; extreme bins absorb the tails."""
    if not grid.lo <= b <= grid.hi:
        raise ValueError(f"bin {b} outside grid [{grid.lo}, {grid.hi}]")
    upper = 1.0 if b == grid.hi else float(dist.cdf(b + 0.5))
    lower = 0.0 if b == grid.lo else float(dist.cdf(b - 0.5))
    return upper - lower


def pmf_array(dist, grid: BinGrid = BinGrid()) -> np.ndarray:
    """Masses of every bin in the grid; sums to 1 by tail absorption."""
    edges = np.arange(grid.lo, grid.hi, dtype=np.float64) + 0.5
    c = np.asarray(dist.cdf(edges), dtype=np.float64)
    pmf = np.empty(grid.n_bins, dtype=np.float64)
    pmf[0] = c[0]
    pmf[1:-1] = np.diff(c)
    pmf[-1] = 1.0 - c[-1]
    return pmf


def estimate_rate_bits(latent, dist, grid: BinGrid = BinGrid()) -> float:
    """Total code length in bits of an integer grid under a continuous model.

    ``dist`` is a :class:`LogisticPrior`, a :class:`ConditionalGaussian`
    (with ``sigma`` broadcastable to the latent shape), or an explicit per-bin
    pmf array. Bin masses are floored at 1e-9.
    """
    latent = np.asarray(latent)
    if latent.size == 0:
        return 0.0
    if not np.issubdtype(latent.dtype, np.integer):
        raise ValueError("latent must be an integer grid")
    if latent.min() < grid.lo or latent.max() > grid.hi:
        raise ValueError("latent values outside the bin grid")
    if isinstance(dist, np.ndarray):
        if dist.shape != (grid.n_bins,):
            raise ValueError(f"pmf array must have length {grid.n_bins}")
        mass = dist[latent - grid.lo]
    elif isinstance(dist, LogisticPrior):
        mass = pmf_array(dist, grid)[latent - grid.lo]
    else:
        if dist.sigma.ndim and dist.sigma.shape != latent.shape:
            raise ValueError(f"sigma shape {dist.sigma.shape} does not match "
                             f"latent shape {latent.shape}")
        v = latent.astype(np.float64)
        upper = np.where(latent == grid.hi, 1.0, dist.cdf(v + 0.5))
        lower = np.where(latent == grid.lo, 0.0, dist.cdf(v - 0.5))
        mass = upper - lower
    return float(-np.log2(np.maximum(mass, PMF_FLOOR)).sum())


class QuantizedCdfTable:
    """Strictly increasing cumulative frequencies totalling 2**16."""

    __slots__ = ("cum",)

    def __init__(self, cum):
        cum = tuple(int(v) for v in cum)
        if cum[0] != 0 or cum[-1] != TABLE_TOTAL:
            raise ValueError("cumulative table must run from 0 to 2**16")
        if any(b <= a for a, b in zip(cum, cum[1:])):
            raise ValueError("cumulative table must be strictly increasing")
        self.cum = cum

    @property
    def n_symbols(self) -> int:
        return len(self.cum) - 1

    def freq(self, symbol: int) -> int:
        return self.cum[symbol + 1] - self.cum[symbol]

    def frequencies(self) -> np.ndarray:
        return np.diff(np.asarray(self.cum, dtype=np.int64))


def quantize_cdf(pmf, grid: BinGrid = BinGrid()) -> QuantizedCdfTable:
    """Round a pmf to integer frequencies totalling exactly 2**16.

    Largest-remainder rounding distributes the floor surplus; bins rounded to
    zero are raised to frequency 1, the deficit taken one unit at a time from
    the currently largest bin (ties to the lower index).
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.shape != (grid.n_bins,):
        raise ValueError(f"pmf must have length {grid.n_bins}")
    if np.any(pmf < 0):
        raise ValueError("pmf must be nonnegative")
    if abs(pmf.sum() - 1.0) > 1e-9:
        raise ValueError("pmf must sum to 1 within 1e-9")

    scaled = pmf * TABLE_TOTAL
    freqs = np.floor(scaled).astype(np.int64)
    surplus = TABLE_TOTAL - int(freqs.sum())
    if surplus > 0:
        order = np.lexsort((np.arange(len(pmf)), freqs - scaled))
        freqs[order[:surplus]] += 1

    deficit = int(np.count_nonzero(freqs == 0))
    if deficit:
        freqs[freqs == 0] = 1
        heap = [(-int(f), int(i)) for i, f in enumerate(freqs) if f > 1]
        heapq.heapify(heap)
        for _ in range(deficit):
            f, i = heapq.heappop(heap)
            f = -f - 1
            freqs[i] = f
            if f > 1:
                heapq.heappush(heap, (-f, i))

    cum = np.zeros(grid.n_bins + 1, dtype=np.int64)
    np.cumsum(freqs, out=cum[1:])
    return QuantizedCdfTable(cum)


class ScaleTable:
    """Log-spaced Gaussian scale levels with precomputed coder tables.

    Scales are rounded up to the next level (conservative coding), so the
    modeled distribution is never narrower than the predicted one except at
    the upper clamp.
    """

    def __init__(self, sigma_min: float = SIGMA_MIN, sigma_max: float = SIGMA_MAX,
                 levels: int = SIGMA_LEVELS, grid: BinGrid = BinGrid()):
        if not (0 < sigma_min < sigma_max and levels >= 2):
            raise ValueError("need 0 < sigma_min < sigma_max and >= 2 levels")
        sigmas = np.exp(np.linspace(math.log(sigma_min), math.log(sigma_max),
                                    levels))
        sigmas[0], sigmas[-1] = sigma_min, sigma_max
        self.sigma_min = float(sigma_min)
        self.sigma_max = float(sigma_max)
        self.grid = grid
        self.sigmas = sigmas
        self.tables = tuple(
            quantize_cdf(pmf_array(ConditionalGaussian(s), grid), grid)
            for s in sigmas)
        self.freq_matrix = np.stack([t.frequencies() for t in self.tables])

    def __len__(self) -> int:
        return len(self.tables)

    def quantize_sigma(self, sigma) -> np.ndarray:
        """Index of the smallest level >= sigma, after clamping to the range."""
        s = np.clip(np.asarray(sigma, dtype=np.float64),
                    self.sigmas[0], self.sigmas[-1])
        idx = np.searchsorted(self.sigmas, s, side="left")
        return np.minimum(idx, len(self.sigmas) - 1)


def quantize_sigma(sigma, table: ScaleTable):
    """Map scale values to the table's level indices (see ScaleTable)."""
    return table.quantize_sigma(sigma)


def table_rate_bits(symbols, tables) -> float:
    """Exact code length in bits under per-symbol quantized tables."""
    total = 0.0
    for s, t in zip(symbols, tables, strict=True):
        total -= math.log2(t.freq(int(s)) / TABLE_TOTAL)
    return total


@lru_cache(maxsize=4)
def default_scale_table(precision: int = DEFAULT_PRECISION) -> ScaleTable:
    return ScaleTable(grid=BinGrid(precision))


@lru_cache(maxsize=4)
def logistic_table(precision: int = DEFAULT_PRECISION) -> QuantizedCdfTable:
    grid = BinGrid(precision)
    return quantize_cdf(pmf_array(LogisticPrior(), grid), grid)
