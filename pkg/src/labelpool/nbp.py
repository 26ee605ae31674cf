"""Neighborhood-based pooling: one pool per item within divergence radius r.

Pool i collects every item whose empirical distribution lies within
radius r of item i's distribution, measured as D(other || center). Each
item is assigned to its own pool, so p equals n. Membership uses <= r,
which makes self-membership unconditional (D = 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from labelpool.core import Dataset, Pooling, normalize
from labelpool.divergence import KINDS, pairwise_matrix

__all__ = ["NbpConfig", "NeighborhoodStats", "build_nbp_pooling", "neighborhood_profile"]

DEFAULT_COMPARISON_ALPHA = 0.01


@dataclass(frozen=True)
class NbpConfig:
    """Radius, divergence measure and smoothing for the comparison step.

    ``alpha`` smooths the distributions being compared (required for kl
    whenever counts contain zeros); ``refine_alpha`` smooths the refined
    output distributions.
    """

    radius: float
    measure: str = "kl"
    alpha: float = DEFAULT_COMPARISON_ALPHA
    refine_alpha: float = 0.0

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be >= 0")
        if self.measure not in KINDS:
            raise ValueError(f"unknown measure {self.measure!r}; expected one of {KINDS}")
        if self.alpha < 0 or self.refine_alpha < 0:
            raise ValueError("smoothing must be >= 0")


@dataclass(frozen=True)
class NeighborhoodStats:
    sizes: np.ndarray
    median: float = field(init=False)
    maximum: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "median", float(np.median(self.sizes)))
        object.__setattr__(self, "maximum", int(self.sizes.max()))


def _comparison_matrix(dataset: Dataset, config: NbpConfig) -> np.ndarray:
    """All-pairs divergences between the items' comparison distributions."""
    dists = dataset.distributions(config.alpha)
    if config.measure == "kl" and config.alpha == 0 and np.any(dists == 0):
        raise ValueError(
            "kl comparison is undefined on zero counts with alpha=0; set alpha > 0"
        )
    return pairwise_matrix(dists, config.measure)


def _pooling_from_membership(
    membership: np.ndarray, counts: np.ndarray, config: NbpConfig
) -> tuple[Pooling, NeighborhoodStats]:
    n = counts.shape[0]
    pools = [np.flatnonzero(membership[:, i]) for i in range(n)]
    pooled = membership.T.astype(np.float64) @ counts
    refined = normalize(pooled, config.refine_alpha)
    pooling = Pooling(
        pools,
        np.arange(n),
        refined,
        config.refine_alpha,
        method="nbp",
        meta={"radius": config.radius, "measure": config.measure, "alpha": config.alpha},
    )
    return pooling, NeighborhoodStats(pooling.pool_sizes())


def build_nbp_pooling(dataset: Dataset, config: NbpConfig):
    """Construct the NBP pooling and its neighborhood-size statistics.

    Pool i is ``{j : D(dist_j || dist_i) <= r}``; the refined
    distribution of pool i is the normalized sum of member counts. The n
    membership tests are independent; the all-pairs divergences run on
    the kernel backend.
    """
    div = _comparison_matrix(dataset, config)
    membership = div <= config.radius
    return _pooling_from_membership(membership, dataset.counts, config)


def neighborhood_profile(
    dataset: Dataset,
    r_grid,
    config: NbpConfig | None = None,
    loss_alpha: float = DEFAULT_COMPARISON_ALPHA,
) -> dict[str, np.ndarray]:
    """Mean pooled-vs-empirical KL loss and size stats across a radius grid.

    The pairwise divergences are computed once and re-thresholded per
    radius. Returns columns r, mean_kl, n_median, n_max.
    """
    from labelpool.selection import loss_mean_kl

    r_grid = np.asarray(r_grid, dtype=np.float64)
    if r_grid.size == 0:
        raise ValueError("r_grid must be non-empty")
    if np.any(np.diff(r_grid) < 0):
        raise ValueError("r_grid must be sorted ascending")
    if config is None:
        config = NbpConfig(radius=0.0)
    div = _comparison_matrix(dataset, config)
    mean_kl = np.empty(r_grid.size)
    n_median = np.empty(r_grid.size)
    n_max = np.empty(r_grid.size, dtype=np.int64)
    for t, r in enumerate(r_grid):
        pooling, stats = _pooling_from_membership(div <= r, dataset.counts, config)
        mean_kl[t] = loss_mean_kl(pooling, dataset, loss_alpha)
        n_median[t] = stats.median
        n_max[t] = stats.maximum
    return {"r": r_grid, "mean_kl": mean_kl, "n_median": n_median, "n_max": n_max}
