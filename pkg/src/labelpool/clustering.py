"""Cluster-based pooling models over the label space.

Four models, all producing hard assignments over items: a multinomial
mixture fit by MAP-EM on count vectors (fmm), a diagonal-covariance
Gaussian mixture on distribution vectors (gmm), Lloyd's k-means on
distribution vectors (kmeans), and LDA by collapsed Gibbs sampling over
the annotation tokens (lda). Soft responsibilities stay internal; the
Pooling refined distributions are always recomputed from pooled member
counts so samplers and losses see one consistent object per method.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy.special import gammaln, logsumexp

from labelpool import _kernels
from labelpool.core import Dataset, Pooling

__all__ = [
    "MODEL_KINDS",
    "FitConfig",
    "ClusterFit",
    "fit_fmm",
    "fit_gmm",
    "fit_kmeans",
    "fit_lda",
    "fit_model",
    "fit_median_of_trials",
    "pooling_from_fit",
]

MODEL_KINDS = ("fmm", "gmm", "kmeans", "lda")

_LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class FitConfig:
    """Shared fitting knobs; Dirichlet priors apply to fmm, the lda_*
    fields to lda, variance_floor to gmm."""

    p: int
    max_iter: int = 200
    tol: float = 1e-8
    seed: int = 0
    gamma_pi: float = 75.0
    gamma_phi: float = 0.1
    variance_floor: float = 1e-6
    lda_alpha: float | None = None  # None -> 50 / p
    lda_beta: float = 0.1
    lda_sweeps: int = 1000
    lda_burnin: int = 500

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 <= self.lda_burnin < self.lda_sweeps:
            raise ValueError("need 0 <= lda_burnin < lda_sweeps")


@dataclass
class ClusterFit:
    """Result of one model fit: parameters, hard assignment, diagnostics.

    ``components`` rows are multinomial parameters (fmm/lda), means
    (gmm) or centroids (kmeans). ``objective`` is the final penalized
    log-likelihood (fmm), log-likelihood (gmm), inertia (kmeans) or
    collapsed joint log-likelihood (lda).
    """

    kind: str
    p: int
    weights: np.ndarray
    components: np.ndarray
    assignment: np.ndarray
    objective: float
    objective_trace: np.ndarray
    n_iter: int
    converged: bool
    seed: int
    variances: np.ndarray | None = None
    doc_topic: np.ndarray | None = None

    def to_json(self) -> dict:
        payload = {
            "format": "labelpool.fit",
            "kind": self.kind,
            "p": self.p,
            "weights": self.weights.tolist(),
            "components": self.components.tolist(),
            "assignment": self.assignment.tolist(),
            "objective": self.objective,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "seed": self.seed,
        }
        if self.variances is not None:
            payload["variances"] = self.variances.tolist()
        return payload

    @classmethod
    def from_json(cls, payload: dict) -> "ClusterFit":
        variances = payload.get("variances")
        return cls(
            kind=payload["kind"],
            p=payload["p"],
            weights=np.asarray(payload["weights"], dtype=np.float64),
            components=np.asarray(payload["components"], dtype=np.float64),
            assignment=np.asarray(payload["assignment"], dtype=np.int64),
            objective=float(payload["objective"]),
            objective_trace=np.array([payload["objective"]]),
            n_iter=payload["n_iter"],
            converged=payload["converged"],
            seed=payload["seed"],
            variances=None if variances is None else np.asarray(variances),
        )


def _safe_log(x: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(x, _LOG_FLOOR))


def fit_fmm(dataset: Dataset, config: FitConfig) -> ClusterFit:
    """MAP-EM for a multinomial mixture over the raw count vectors.

    Symmetric Dirichlet priors: concentration gamma_pi on the mixture
    weights (MAP pseudocount gamma_pi - 1, floored at zero) and additive
    smoothing gamma_phi on each component. The reported objective is the
    log-likelihood plus the matching Dirichlet penalty terms, which the
    M-step maximizes exactly, so it is non-decreasing per iteration.
    """
    counts = dataset.counts.astype(np.float64)
    n, d = counts.shape
    p = config.p
    rng = np.random.default_rng(config.seed)
    resp = rng.dirichlet(np.ones(p), size=n)

    trace = []
    converged = False
    pi = np.full(p, 1.0 / p)
    phi = np.full((p, d), 1.0 / d)
    logw = None
    for it in range(config.max_iter):
        # M-step from current responsibilities
        pi_num = np.maximum(resp.sum(axis=0) + (config.gamma_pi - 1.0), 0.0)
        pi = pi_num / pi_num.sum()
        phi_num = resp.T @ counts + config.gamma_phi
        phi = phi_num / phi_num.sum(axis=1, keepdims=True)
        # E-step and penalized objective
        logw = _safe_log(pi)[None, :] + counts @ _safe_log(phi).T
        lse = logsumexp(logw, axis=1)
        objective = (
            lse.sum()
            + (config.gamma_pi - 1.0) * _safe_log(pi).sum()
            + config.gamma_phi * _safe_log(phi).sum()
        )
        resp = np.exp(logw - lse[:, None])
        trace.append(objective)
        if it > 0 and abs(trace[-1] - trace[-2]) <= config.tol * (1 + abs(trace[-1])):
            converged = True
            break

    assignment = np.argmax(logw, axis=1)
    return ClusterFit(
        kind="fmm",
        p=p,
        weights=pi,
        components=phi,
        assignment=assignment,
        objective=trace[-1],
        objective_trace=np.array(trace),
        n_iter=len(trace),
        converged=converged,
        seed=config.seed,
    )


def fit_gmm(dataset: Dataset, config: FitConfig) -> ClusterFit:
    """EM for a diagonal-covariance Gaussian mixture on distribution vectors.

    Variances are floored at ``config.variance_floor`` each M-step to
    prevent component collapse.
    """
    x = dataset.distributions(0.0)
    n, d = x.shape
    p = config.p
    rng = np.random.default_rng(config.seed)
    means = x[rng.choice(n, size=p, replace=p > n)].copy()
    variances = np.tile(np.maximum(x.var(axis=0), config.variance_floor), (p, 1))
    pi = np.full(p, 1.0 / p)

    trace = []
    converged = False
    logw = None
    for it in range(config.max_iter):
        const = -0.5 * np.sum(np.log(2 * np.pi * variances), axis=1)
        diff = x[:, None, :] - means[None, :, :]
        quad = np.sum(diff * diff / (2 * variances[None, :, :]), axis=2)
        logw = _safe_log(pi)[None, :] + const[None, :] - quad
        lse = logsumexp(logw, axis=1)
        trace.append(lse.sum())
        resp = np.exp(logw - lse[:, None])

        nj = resp.sum(axis=0)
        alive = nj > 1e-12
        pi = nj / n
        new_means = means.copy()
        new_vars = variances.copy()
        safe_nj = np.where(alive, nj, 1.0)
        mu = (resp.T @ x) / safe_nj[:, None]
        second = (resp.T @ (x * x)) / safe_nj[:, None]
        new_means[alive] = mu[alive]
        new_vars[alive] = np.maximum(
            second[alive] - mu[alive] ** 2, config.variance_floor
        )
        means, variances = new_means, new_vars
        if it > 0 and abs(trace[-1] - trace[-2]) <= config.tol * (1 + abs(trace[-1])):
            converged = True
            break

    assignment = np.argmax(logw, axis=1)
    return ClusterFit(
        kind="gmm",
        p=p,
        weights=pi,
        components=means,
        assignment=assignment,
        objective=trace[-1],
        objective_trace=np.array(trace),
        n_iter=len(trace),
        converged=converged,
        seed=config.seed,
        variances=variances,
    )


def _kmeans_pp_init(x: np.ndarray, p: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((p, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    closest = np.sum((x - centroids[0]) ** 2, axis=1)
    for j in range(1, p):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centroids[j] = x[idx]
        closest = np.minimum(closest, np.sum((x - centroids[j]) ** 2, axis=1))
    return centroids


def fit_kmeans(dataset: Dataset, config: FitConfig) -> ClusterFit:
    """Lloyd's algorithm on distribution vectors with k-means++ seeding.

    Nearest-centroid ties break toward the lowest cluster index; a
    cluster left empty is re-seeded at the point farthest from its
    centroid. Stops when the assignment is a fixed point.
    """
    x = dataset.distributions(0.0)
    n = x.shape[0]
    p = config.p
    if p > n:
        raise ValueError(f"kmeans needs p <= n ({p} > {n})")
    rng = np.random.default_rng(config.seed)
    centroids = _kmeans_pp_init(x, p, rng)

    def _distances(c):
        return np.sum((x[:, None, :] - c[None, :, :]) ** 2, axis=2)

    d2 = _distances(centroids)
    assignment = np.argmin(d2, axis=1)
    trace = [float(d2[np.arange(n), assignment].sum())]
    converged = False
    for _ in range(config.max_iter):
        for j in range(p):
            members = assignment == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
            else:
                centroids[j] = x[np.argmax(np.sum((x - centroids[j]) ** 2, axis=1))]
        d2 = _distances(centroids)
        new_assignment = np.argmin(d2, axis=1)
        trace.append(float(d2[np.arange(n), new_assignment].sum()))
        if np.array_equal(new_assignment, assignment):
            converged = True
            break
        assignment = new_assignment

    return ClusterFit(
        kind="kmeans",
        p=p,
        weights=np.bincount(assignment, minlength=p) / n,
        components=centroids,
        assignment=assignment,
        objective=trace[-1],
        objective_trace=np.array(trace),
        n_iter=len(trace) - 1,
        converged=converged,
        seed=config.seed,
    )


def _token_layout(counts: np.ndarray):
    """Flatten count vectors into (item, label) token streams, row-major."""
    items, labels = np.nonzero(counts)
    reps = counts[items, labels]
    doc = np.repeat(items, reps).astype(np.int32)
    word = np.repeat(labels, reps).astype(np.int32)
    return doc, word


def fit_lda(dataset: Dataset, config: FitConfig) -> ClusterFit:
    """Collapsed Gibbs sampling treating each item's labels as a document.

    After burn-in, per-item topic proportions and topic-label
    distributions are averaged over the remaining sweeps; the hard
    assignment is each item's argmax topic proportion.
    """
    counts = dataset.counts
    n, d = counts.shape
    p = config.p
    alpha = config.lda_alpha if config.lda_alpha is not None else 50.0 / p
    beta = config.lda_beta
    rng = np.random.default_rng(config.seed)

    doc, word = _token_layout(counts)
    t_count = doc.shape[0]
    z = rng.integers(0, p, size=t_count, dtype=np.int32)
    n_iz = np.zeros((n, p), dtype=np.int64)
    n_zw = np.zeros((p, d), dtype=np.int64)
    n_z = np.zeros(p, dtype=np.int64)
    np.add.at(n_iz, (doc, z), 1)
    np.add.at(n_zw, (z, word), 1)
    np.add.at(n_z, z, 1)

    m_per_item = counts.sum(axis=1).astype(np.float64)
    theta_acc = np.zeros((n, p))
    phi_acc = np.zeros((p, d))
    kept = 0
    for sweep in range(config.lda_sweeps):
        u = rng.random(t_count)
        _kernels.lda_sweep(doc, word, z, n_iz, n_zw, n_z, alpha, beta, u)
        if sweep >= config.lda_burnin:
            theta_acc += (n_iz + alpha) / (m_per_item + alpha * p)[:, None]
            phi_acc += (n_zw + beta) / (n_z + beta * d)[:, None]
            kept += 1

    theta = theta_acc / kept
    phi = phi_acc / kept
    assignment = np.argmax(theta, axis=1)
    # collapsed joint log p(w, z) up to constants, as a fit diagnostic
    objective = float(
        np.sum(gammaln(n_zw + beta)) - np.sum(gammaln(n_z + beta * d))
        + np.sum(gammaln(n_iz + alpha)) - np.sum(gammaln(m_per_item + alpha * p))
    )
    return ClusterFit(
        kind="lda",
        p=p,
        weights=theta.mean(axis=0),
        components=phi,
        assignment=assignment,
        objective=objective,
        objective_trace=np.array([objective]),
        n_iter=config.lda_sweeps,
        converged=True,
        seed=config.seed,
        doc_topic=theta,
    )


_FITTERS = {"fmm": fit_fmm, "gmm": fit_gmm, "kmeans": fit_kmeans, "lda": fit_lda}


def fit_model(dataset: Dataset, kind: str, config: FitConfig) -> ClusterFit:
    if kind not in _FITTERS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return _FITTERS[kind](dataset, config)


def pooling_from_fit(
    fit: ClusterFit, dataset: Dataset, refine_alpha: float = 0.0
) -> Pooling:
    """Pools are the assignment preimages; refined from pooled counts."""
    return Pooling.from_assignment(
        dataset.counts,
        fit.assignment,
        fit.p,
        refine_alpha,
        method=f"cluster:{fit.kind}",
        meta={"kind": fit.kind, "p": fit.p, "seed": fit.seed},
    )


def fit_median_of_trials(
    dataset: Dataset,
    kind: str,
    config: FitConfig,
    trials: int,
    loss_alpha: float = 0.01,
    n_jobs: int = 1,
) -> ClusterFit:
    """Fit ``trials`` times with seeds seed+0..seed+trials-1 and return the
    fit whose pooled mean-KL loss is the median (lower median for even
    counts). Individual trial failures are tolerated; only an all-fail
    run raises.
    """
    from labelpool.selection import loss_mean_kl

    if trials < 1:
        raise ValueError("trials must be >= 1")

    def _one(trial: int):
        cfg = dataclasses.replace(config, seed=config.seed + trial)
        try:
            fit = fit_model(dataset, kind, cfg)
        except Exception as exc:  # propagate only if every trial fails
            return None, str(exc)
        pooling = pooling_from_fit(fit, dataset, refine_alpha=loss_alpha)
        return fit, loss_mean_kl(pooling, dataset, loss_alpha)

    if n_jobs == 1:
        results = [_one(t) for t in range(trials)]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(_one)(t) for t in range(trials))

    scored = [(loss, fit) for fit, loss in results if fit is not None]
    if not scored:
        errors = {msg for fit, msg in results if fit is None}
        raise RuntimeError(f"all {trials} trials failed: {sorted(errors)}")
    scored.sort(key=lambda pair: pair[0])
    return scored[(len(scored) - 1) // 2][1]
