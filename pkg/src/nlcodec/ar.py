"""Enumeration-scale check that a nested latent chain reproduces an
autoregressive model over binary pixels.

A pixel sequence x(1)..x(T) with conditionals p(x(t)=1 | x(t-1)..x(1)) maps to
a chain of T single-component binary latents decoded top-down: the t-th
decoded latent carries x(t), conditioned on the previously decoded ones. Both
models assign identical evidence to every outcome, verified by brute force.

History indexing convention: the table for pixel t is indexed by the integer
whose bit j-1 is x(j), j = 1..t-1 (first pixel in the lowest bit).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ResourceLimitError

MAX_PIXELS = 12


def _validate_tables(tables, what: str) -> tuple[np.ndarray, ...]:
    t = len(tables)
    if t < 1:
        raise ValueError(f"{what} needs at least one variable")
    if t > MAX_PIXELS:
        raise ResourceLimitError(
            f"{what} supports at most {MAX_PIXELS} variables, got {t}")
    out = []
    for i, table in enumerate(tables):
        arr = np.asarray(table, dtype=np.float64).reshape(-1)
        if arr.shape != (1 << i,):
            raise ValueError(
                f"table {i} must have {1 << i} entries, got {arr.shape[0]}")
        if np.any(arr < 0) or np.any(arr > 1):
            raise ValueError("conditional probabilities must lie in [0, 1]")
        out.append(arr)
    return tuple(out)


@dataclass(frozen=True)
class TinyARModel:
    """Autoregressive model over T binary pixels, T <= 12.

    ``tables[t-1][h]`` is p(x(t) = 1 | history h) with h indexed as in the
    module docstring.
    """

    tables: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "tables",
                           _validate_tables(self.tables, "TinyARModel"))

    @property
    def size(self) -> int:
        return len(self.tables)


@dataclass(frozen=True)
class NestedChainModel:
    """Chain of single-component binary latents decoded top-down.

    ``tables[0]`` is the prior over the top latent; ``tables[i][h]`` conditions
    the i-th decoded latent on the previously decoded ones (most recently
    decoded in the highest history bit... i.e. the same integer indexing as
    TinyARModel after the pixel-to-latent relabeling).
    """

    tables: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "tables",
                           _validate_tables(self.tables, "NestedChainModel"))

    @property
    def size(self) -> int:
        return len(self.tables)


def build_nested(ar: TinyARModel) -> NestedChainModel:
    """Nested chain whose t-th decoded latent carries pixel x(t).

    The prior over the top latent equals p(x(1)); conditional tables carry
    over verbatim because relabeling pixels to latents reverses only the
    variable names, not the history order.
    """
    if ar.size > MAX_PIXELS:
        raise ResourceLimitError(f"at most {MAX_PIXELS} pixels supported")
    return NestedChainModel(tuple(t.copy() for t in ar.tables))


def evidence(model, x) -> float:
    """Exact probability of a full bit vector under either model form."""
    bits = [int(b) for b in x]
    if len(bits) != model.size:
        raise ValueError(f"expected {model.size} bits, got {len(bits)}")
    if any(b not in (0, 1) for b in bits):
        raise ValueError("outcome must be a bit vector")
    p = 1.0
    history = 0
    for t, bit in enumerate(bits):
        q = float(model.tables[t][history])
        p *= q if bit else 1.0 - q
        history |= bit << t
    return p


def all_evidences(model) -> np.ndarray:
    """Evidence of every outcome, indexed by the bits-as-integer encoding."""
    t = model.size
    out = np.empty(1 << t, dtype=np.float64)
    for idx in range(1 << t):
        out[idx] = evidence(model, [(idx >> j) & 1 for j in range(t)])
    return out


def truncate_context(model: NestedChainModel, k: int) -> NestedChainModel:
    """Limit every conditional to its k most recently decoded latents.

    History bits older than k steps are fixed to zero when reading the
    original tables, so a model whose true context is at most k is unchanged.
    """
    if k < 0:
        raise ValueError("context must be nonnegative")
    tables = []
    for t, table in enumerate(model.tables):
        if t <= k:
            tables.append(table.copy())
            continue
        trunc = np.empty_like(table)
        keep_shift = t - k
        for h in range(len(table)):
            trunc[h] = table[(h >> keep_shift) << keep_shift]
        tables.append(trunc)
    return NestedChainModel(tuple(tables))


def limited_context_check(ar: TinyARModel, k: int) -> float:
    """Max evidence gap between the AR model and a k-context nested chain."""
    nested = truncate_context(build_nested(ar), k)
    return float(np.abs(all_evidences(ar) - all_evidences(nested)).max())


def max_evidence_gap(ar: TinyARModel) -> float:
    """Max |AR - nested| evidence over all outcomes (full context)."""
    nested = build_nested(ar)
    return float(np.abs(all_evidences(ar) - all_evidences(nested)).max())


def random_model(size: int, rng: np.random.Generator) -> TinyARModel:
    """Random AR model with conditionals drawn uniformly from (0, 1)."""
    tables = tuple(rng.uniform(1e-6, 1.0 - 1e-6, size=1 << t)
                   for t in range(size))
    return TinyARModel(tables)
