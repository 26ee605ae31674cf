"""Losses, simulation-based statistics and hyperparameter selection.

A candidate hyperparameter (cluster count p or neighborhood radius r)
is scored by comparing the training loss of its pooling against the
loss distribution over b synthetic label sets drawn from the pooling
itself: the standardized difference (mean synthetic loss minus training
loss, over the synthetic standard deviation) is driven toward zero over
p, and its elbow over the radius grid picks r. The plain replicate-count
fraction is also computed and reported, but selection rests on the
standardized difference because replicate losses frequently fall
entirely on one side of the training loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.special import gammaln

from labelpool.core import Dataset, Pooling, normalize
from labelpool.samplers import SyntheticLabelSet, bootstrap_sampler, cluster_sampler, nbp_sampler

__all__ = [
    "LOSS_KINDS",
    "SelectionReport",
    "loss_mean_kl",
    "loss_multinomial_loglik",
    "compute_loss",
    "run_replicates",
    "pvalue_fraction",
    "standardized_difference",
    "fit_two_segment",
    "select_cluster_count",
    "select_radius",
]

LOSS_KINDS = ("mean_kl", "multinomial_loglik")

_LOG_FLOOR = 1e-300


def _counts_of(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.counts
    if isinstance(data, SyntheticLabelSet):
        return data.counts
    return np.asarray(data, dtype=np.int64)


def loss_mean_kl(pooling: Pooling, data, alpha: float = 0.01) -> float:
    """Mean KL from each item's refined distribution to its (smoothed)
    empirical distribution, KL(refined || empirical).

    ``alpha`` smooths the empirical side, which sits in the denominator
    and may contain zeros; with ``alpha = 0`` a zero under refined
    support is an error.
    """
    counts = _counts_of(data)
    refined = pooling.refined_per_item()
    if refined.shape != counts.shape:
        raise ValueError("pooling does not match the data shape")
    emp = normalize(counts, alpha)
    support = refined > 0
    if np.any(emp[support] <= 0):
        raise ValueError(
            "undefined KL: empirical distribution has zero mass under refined "
            "support; use alpha > 0"
        )
    logs = np.log(np.maximum(refined, _LOG_FLOOR)) - np.log(np.maximum(emp, _LOG_FLOOR))
    per_item = np.sum(np.where(support, refined * logs, 0.0), axis=1)
    return float(per_item.mean())


def loss_multinomial_loglik(pooling: Pooling, data) -> float:
    """Negated log-probability of the observed label sets under each
    item's refined distribution (per-item multinomial log-pmf, summed).

    Lower is better, matching the mean-KL orientation. Refined
    distributions must be strictly positive wherever counts are; build
    the pooling with refine_alpha > 0 otherwise.
    """
    counts = _counts_of(data)
    refined = pooling.refined_per_item()
    if refined.shape != counts.shape:
        raise ValueError("pooling does not match the data shape")
    observed = counts > 0
    if np.any(refined[observed] <= 0):
        raise ValueError(
            "refined distribution has zero mass on an observed label; "
            "rebuild the pooling with refine_alpha > 0"
        )
    m = counts.sum(axis=1)
    log_ref = np.log(np.maximum(refined, _LOG_FLOOR))
    loglik = (
        gammaln(m + 1).sum()
        + np.sum(np.where(observed, counts * log_ref, 0.0))
        - gammaln(counts + 1).sum()
    )
    return float(-loglik)


def compute_loss(pooling: Pooling, data, kind: str, alpha: float = 0.01) -> float:
    if kind == "mean_kl":
        return loss_mean_kl(pooling, data, alpha)
    if kind == "multinomial_loglik":
        return loss_multinomial_loglik(pooling, data)
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


def run_replicates(
    generator,
    pooling: Pooling,
    loss: str = "mean_kl",
    b: int = 1000,
    seed: int = 0,
    alpha: float = 0.01,
    n_jobs: int = 1,
) -> np.ndarray:
    """Score b synthetic label sets from ``generator`` against the pooling.

    ``generator`` is a closure mapping a seed to a synthetic label set;
    replicate i uses seed + i, so results do not depend on the execution
    schedule.
    """
    if b < 1:
        raise ValueError("b must be >= 1")

    def _one(i: int) -> float:
        return compute_loss(pooling, generator(seed + i), loss, alpha)

    if n_jobs == 1:
        return np.array([_one(i) for i in range(b)])
    return np.array(Parallel(n_jobs=n_jobs)(delayed(_one)(i) for i in range(b)))


def pvalue_fraction(losses, train_loss: float) -> float:
    """Fraction of replicates whose loss exceeds the training loss."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.size == 0:
        raise ValueError("losses must be non-empty")
    return float(np.mean(losses > train_loss))


def standardized_difference(losses, train_loss: float) -> float:
    """(mean synthetic loss - training loss) / sample std of synthetic loss."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.size < 2:
        raise ValueError("need at least 2 replicate losses")
    sd = losses.std(ddof=1)
    if sd == 0:
        raise ValueError("degenerate synthetic distribution: zero standard deviation")
    return float((losses.mean() - train_loss) / sd)


# ---------------------------------------------------------------------------
# Two-segment piecewise-linear elbow
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ElbowFit:
    break_index: int
    breakpoint: float
    slopes: tuple[float, float]
    sse: float
    no_elbow: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "no_elbow", abs(self.slopes[0] - self.slopes[1]) <= 1e-6
        )


def fit_two_segment(x, y) -> ElbowFit:
    """Continuous two-segment least-squares line; the breakpoint is chosen
    by exhaustive search over interior grid points (>= 2 points per side).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be vectors of equal length")
    if x.size < 4:
        raise ValueError("need at least 4 points (2 per segment)")
    best = None
    for i in range(1, x.size - 2):
        c = x[i]
        left = x <= c
        design = np.column_stack(
            [np.ones_like(x), np.where(left, x - c, 0.0), np.where(left, 0.0, x - c)]
        )
        coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ coef
        sse = float(resid @ resid)
        if best is None or sse < best[0] - 1e-15:
            best = (sse, i, c, (float(coef[1]), float(coef[2])))
    sse, i, c, slopes = best
    return ElbowFit(break_index=i, breakpoint=float(c), slopes=slopes, sse=sse)


# ---------------------------------------------------------------------------
# Selection reports and drivers
# ---------------------------------------------------------------------------

REPORT_COLUMNS = ("train_loss", "synth_mean", "synth_std", "std_diff", "pvalue_fraction")


@dataclass
class SelectionReport:
    """Per-candidate scores plus the chosen hyperparameter value.

    ``columns`` always carries train_loss, synth_mean, synth_std,
    std_diff and pvalue_fraction; extra columns (bootstrap comparison,
    neighborhood sizes) depend on the driver. Failed candidates hold NaN
    rows and are listed in ``meta['failed']``.
    """

    param_name: str
    values: np.ndarray
    columns: dict[str, np.ndarray]
    chosen: float
    meta: dict

    def to_csv_text(self) -> str:
        meta = dict(self.meta, param_name=self.param_name, chosen=self.chosen)
        names = ["param"] + list(self.columns)
        lines = ["# config: " + _json_compact(meta), ",".join(names)]
        for row in range(self.values.size):
            cells = [_format_number(self.values[row])]
            cells += [_format_number(self.columns[c][row]) for c in self.columns]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "format": "labelpool.selection",
            "param_name": self.param_name,
            "chosen": self.chosen,
            "values": self.values.tolist(),
            "columns": {k: v.tolist() for k, v in self.columns.items()},
            "meta": self.meta,
        }


def _json_compact(payload: dict) -> str:
    import json

    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


def _format_number(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.6f}"


def _derive_seed(seed: int, *key: int) -> int:
    """Stable per-task seed from the run seed and a task key."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *key])
    return int(ss.generate_state(1)[0])


def _candidate_stats(losses: np.ndarray, train_loss: float) -> tuple:
    return (
        float(losses.mean()),
        float(losses.std(ddof=1)),
        standardized_difference(losses, train_loss),
        pvalue_fraction(losses, train_loss),
    )


def select_cluster_count(
    dataset: Dataset,
    kind: str,
    p_grid=tuple(range(1, 41)),
    trials: int = 100,
    loss: str = "mean_kl",
    b: int = 1000,
    seed: int = 0,
    loss_alpha: float = 0.01,
    refine_alpha: float = 0.01,
    fit_config=None,
    n_jobs: int = 1,
) -> SelectionReport:
    """Pick the cluster count whose standardized difference under the
    cluster sampler is closest to zero; bootstrap-sampler columns are
    reported alongside for comparison. Ties break toward the smaller p;
    failed candidates are skipped.
    """
    import dataclasses

    from labelpool.clustering import FitConfig, fit_median_of_trials, pooling_from_fit

    p_grid = [int(p) for p in p_grid]
    if not p_grid:
        raise ValueError("p_grid must be non-empty")
    if fit_config is None:
        fit_config = FitConfig(p=p_grid[0])
    n, m = dataset.n, dataset.vote_counts

    cols = {name: np.full(len(p_grid), np.nan) for name in REPORT_COLUMNS}
    for name in ("boot_mean", "boot_std", "boot_std_diff", "boot_pvalue_fraction"):
        cols[name] = np.full(len(p_grid), np.nan)
    failed: list[dict] = []

    for idx, p in enumerate(p_grid):
        try:
            cfg = dataclasses.replace(fit_config, p=p, seed=_derive_seed(seed, 0, idx))
            fit = fit_median_of_trials(
                dataset, kind, cfg, trials, loss_alpha=loss_alpha, n_jobs=n_jobs
            )
            pooling = pooling_from_fit(fit, dataset, refine_alpha)
            train_loss = compute_loss(pooling, dataset, loss, loss_alpha)

            cl = run_replicates(
                lambda s: cluster_sampler(pooling, n, m, s),
                pooling, loss, b, _derive_seed(seed, 1, idx), loss_alpha, n_jobs,
            )
            bt = run_replicates(
                lambda s: bootstrap_sampler(dataset, n, m, s),
                pooling, loss, b, _derive_seed(seed, 2, idx), loss_alpha, n_jobs,
            )
        except (ValueError, RuntimeError) as exc:
            failed.append({"p": p, "error": str(exc)})
            continue
        cols["train_loss"][idx] = train_loss
        (
            cols["synth_mean"][idx],
            cols["synth_std"][idx],
            cols["std_diff"][idx],
            cols["pvalue_fraction"][idx],
        ) = _candidate_stats(cl, train_loss)
        (
            cols["boot_mean"][idx],
            cols["boot_std"][idx],
            cols["boot_std_diff"][idx],
            cols["boot_pvalue_fraction"][idx],
        ) = _candidate_stats(bt, train_loss)

    if np.all(np.isnan(cols["std_diff"])):
        raise RuntimeError(f"all cluster-count candidates failed: {failed}")
    # The synthetic-vs-train comparison is two-sided: a pooling that is too
    # coarse scores far negative, one that is too fine far positive, and a
    # well-matched pooling sits near zero. Minimize the magnitude.
    chosen = p_grid[int(np.nanargmin(np.abs(cols["std_diff"])))]
    meta = {
        "method": f"cluster:{kind}",
        "sampler": "cluster",
        "loss": loss,
        "b": b,
        "trials": trials,
        "seed": seed,
        "loss_alpha": loss_alpha,
        "refine_alpha": refine_alpha,
        "failed": failed,
    }
    return SelectionReport("p", np.array(p_grid), cols, int(chosen), meta)


def select_radius(
    dataset: Dataset,
    r_grid,
    sampler_kind: str = "nbp",
    loss: str = "mean_kl",
    b: int = 1000,
    seed: int = 0,
    measure: str = "kl",
    comparison_alpha: float = 0.01,
    loss_alpha: float = 0.01,
    refine_alpha: float = 0.01,
    n_jobs: int = 1,
) -> SelectionReport:
    """Pick the NBP radius as the elbow (breakpoint) of a two-segment
    piecewise-linear fit to the standardized-difference curve over the
    radius grid, under the NBP or bootstrap sampler.
    """
    from labelpool.nbp import NbpConfig, build_nbp_pooling

    if sampler_kind not in ("nbp", "bootstrap"):
        raise ValueError("sampler_kind must be 'nbp' or 'bootstrap'")
    r_grid = np.asarray(r_grid, dtype=np.float64)
    if r_grid.size < 4:
        raise ValueError("r_grid needs at least 4 values (2 per elbow segment)")
    if np.any(np.diff(r_grid) <= 0):
        raise ValueError("r_grid must be strictly ascending")
    n, m = dataset.n, dataset.vote_counts

    cols = {name: np.full(r_grid.size, np.nan) for name in REPORT_COLUMNS}
    cols["n_median"] = np.full(r_grid.size, np.nan)
    cols["n_max"] = np.full(r_grid.size, np.nan)
    failed: list[dict] = []

    for idx, r in enumerate(r_grid):
        try:
            config = NbpConfig(
                radius=float(r),
                measure=measure,
                alpha=comparison_alpha,
                refine_alpha=refine_alpha,
            )
            pooling, stats = build_nbp_pooling(dataset, config)
            train_loss = compute_loss(pooling, dataset, loss, loss_alpha)
            if sampler_kind == "nbp":
                generator = lambda s: nbp_sampler(pooling, n, m, s)
            else:
                generator = lambda s: bootstrap_sampler(dataset, n, m, s)
            losses = run_replicates(
                generator, pooling, loss, b, _derive_seed(seed, 3, idx), loss_alpha, n_jobs
            )
        except (ValueError, RuntimeError) as exc:
            failed.append({"r": float(r), "error": str(exc)})
            continue
        cols["train_loss"][idx] = train_loss
        (
            cols["synth_mean"][idx],
            cols["synth_std"][idx],
            cols["std_diff"][idx],
            cols["pvalue_fraction"][idx],
        ) = _candidate_stats(losses, train_loss)
        cols["n_median"][idx] = stats.median
        cols["n_max"][idx] = stats.maximum

    ok = ~np.isnan(cols["std_diff"])
    if ok.sum() < 4:
        raise RuntimeError(
            f"fewer than 4 radius candidates succeeded; cannot place an elbow: {failed}"
        )
    elbow = fit_two_segment(r_grid[ok], cols["std_diff"][ok])
    meta = {
        "method": "nbp",
        "sampler": sampler_kind,
        "loss": loss,
        "b": b,
        "seed": seed,
        "measure": measure,
        "comparison_alpha": comparison_alpha,
        "loss_alpha": loss_alpha,
        "refine_alpha": refine_alpha,
        "elbow_slopes": list(elbow.slopes),
        "elbow_sse": elbow.sse,
        "no_elbow": elbow.no_elbow,
        "failed": failed,
    }
    return SelectionReport("r", r_grid, cols, float(elbow.breakpoint), meta)
