"""Synthetic label-set generators for the simulation-based tests.

Three pooling-driven samplers produce same-shape synthetic datasets: the
cluster sampler draws a pool per item from the pool-proportion weights,
the NBP sampler draws a source pool uniformly, and the bootstrap sampler
draws a source item uniformly. All fill each synthetic item with m
sequential categorical draws from the chosen distribution. A generic
population sampler generates fully synthetic datasets from configured
per-item true distributions and an annotator pool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from labelpool import _kernels
from labelpool.core import DataItem, Dataset, LabelCounts, LabelSpace, Pooling

__all__ = [
    "GenerativeConfig",
    "SyntheticLabelSet",
    "generate_population_sample",
    "cluster_sampler",
    "nbp_sampler",
    "bootstrap_sampler",
]


@dataclass(frozen=True)
class SyntheticLabelSet:
    """Counts of one synthetic dataset plus provenance of the draw."""

    counts: np.ndarray
    kind: str
    seed: int

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def d(self) -> int:
        return self.counts.shape[1]

    @property
    def vote_counts(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def to_dataset(self, label_space: LabelSpace) -> Dataset:
        items = [
            DataItem(f"{self.kind}-{i}", LabelCounts(row))
            for i, row in enumerate(self.counts)
        ]
        return Dataset(label_space, items)


def _votes_per_item(m, n: int) -> np.ndarray:
    m = np.asarray(m, dtype=np.int64)
    if m.ndim == 0:
        m = np.full(n, int(m), dtype=np.int64)
    if m.shape != (n,):
        raise ValueError(f"m must be a scalar or a length-{n} vector")
    if np.any(m < 1):
        raise ValueError("every item needs at least one vote")
    return m


def _row_cdfs(rows: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(rows, axis=1)
    cdf[:, -1] = 1.0
    return cdf


def _multinomial_counts(
    rows: np.ndarray, src: np.ndarray, m: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Sequential categorical draws: vote v of item i comes from rows[src[i]]."""
    u = rng.random(int(m.sum()))
    return _kernels.categorical_counts(_row_cdfs(rows), src, u, m)


@dataclass(frozen=True)
class GenerativeConfig:
    """Population model: per-item true distributions and an annotator pool.

    Each annotator answers from the item's true distribution with
    probability ``reliability`` and uniformly at random otherwise.
    """

    true_dists: np.ndarray
    reliabilities: np.ndarray
    m: int | np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        dists = np.asarray(self.true_dists, dtype=np.float64)
        rel = np.asarray(self.reliabilities, dtype=np.float64)
        if dists.ndim != 2:
            raise ValueError("true_dists must be an (n, d) matrix")
        if np.any(dists < 0) or np.any(np.abs(dists.sum(axis=1) - 1) > 1e-9):
            raise ValueError("each true distribution must lie on the simplex")
        if rel.ndim != 1 or rel.size == 0 or np.any((rel < 0) | (rel > 1)):
            raise ValueError("reliabilities must be a non-empty vector in [0, 1]")
        object.__setattr__(self, "true_dists", dists)
        object.__setattr__(self, "reliabilities", rel)

    @property
    def n(self) -> int:
        return self.true_dists.shape[0]

    @property
    def d(self) -> int:
        return self.true_dists.shape[1]


def generate_population_sample(config: GenerativeConfig, seed: int) -> Dataset:
    """Draw a full dataset: m annotators per item, each emitting one label
    from its reliability-weighted mixture of the item's true distribution
    and uniform noise. Annotator ids are recorded on the items.
    """
    n, d = config.n, config.d
    m = _votes_per_item(config.m, n)
    rng = np.random.default_rng(seed)
    n_annotators = config.reliabilities.shape[0]

    item_of_vote = np.repeat(np.arange(n), m)
    annotator = rng.integers(0, n_annotators, size=item_of_vote.shape[0])
    rel = config.reliabilities[annotator][:, None]
    probs = rel * config.true_dists[item_of_vote] + (1 - rel) / d
    u = rng.random(item_of_vote.shape[0])
    labels = np.minimum(np.sum(u[:, None] >= _row_cdfs(probs), axis=1), d - 1)

    counts = np.zeros((n, d), dtype=np.int64)
    np.add.at(counts, (item_of_vote, labels), 1)

    names = config.labels or tuple(f"L{y}" for y in range(d))
    space = LabelSpace(names)
    items = []
    offset = 0
    for i in range(n):
        ann = tuple(f"a{a}" for a in annotator[offset : offset + m[i]])
        items.append(DataItem(f"x{i}", LabelCounts(counts[i]), None, ann))
        offset += m[i]
    return Dataset(space, items)


def _pool_weights(pooling: Pooling) -> np.ndarray:
    sizes = pooling.pool_sizes().astype(np.float64)
    if sizes.sum() == 0:
        raise ValueError("pooling has no members")
    return sizes / sizes.sum()


def cluster_sampler(
    pooling: Pooling, n: int, m, seed: int, weights: np.ndarray | None = None
) -> SyntheticLabelSet:
    """Per item: draw a pool from the pool weights, then m votes from its
    refined distribution.

    Weights default to the empirical pool proportions, which are defined
    for every model kind and give empty pools zero mass. Explicit model
    weights are renormalized over non-empty pools so an empty pool is
    never drawn.
    """
    if weights is None:
        weights = _pool_weights(pooling)
    else:
        weights = np.asarray(weights, dtype=np.float64).copy()
        weights[pooling.pool_sizes() == 0] = 0.0
        if weights.sum() <= 0:
            raise ValueError("no non-empty pool has positive weight")
        weights = weights / weights.sum()
    m = _votes_per_item(m, n)
    rng = np.random.default_rng(seed)
    src = rng.choice(pooling.p, size=n, p=weights)
    counts = _multinomial_counts(pooling.refined, src, m, rng)
    return SyntheticLabelSet(counts, "cluster", seed)


def nbp_sampler(pooling: Pooling, n: int, m, seed: int) -> SyntheticLabelSet:
    """Per item: draw a source pool uniformly from the n NBP pools, then m
    votes from its refined distribution."""
    m = _votes_per_item(m, n)
    rng = np.random.default_rng(seed)
    src = rng.integers(0, pooling.p, size=n)
    counts = _multinomial_counts(pooling.refined, src, m, rng)
    return SyntheticLabelSet(counts, "nbp", seed)


def bootstrap_sampler(dataset: Dataset, n: int, m, seed: int) -> SyntheticLabelSet:
    """Per item: draw a source item uniformly, then m votes from its raw
    empirical distribution."""
    m = _votes_per_item(m, n)
    rng = np.random.default_rng(seed)
    src = rng.integers(0, dataset.n, size=n)
    counts = _multinomial_counts(dataset.distributions(0.0), src, m, rng)
    return SyntheticLabelSet(counts, "bootstrap", seed)
