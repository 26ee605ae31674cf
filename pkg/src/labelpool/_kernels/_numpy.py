"""Numpy implementations of the hot kernels (fallback backend).

Semantics match labelpool._kernels._core. The sequential sampling
kernels replicate the compiled arithmetic order exactly so that both
backends produce identical draws from identical uniform streams.
"""

from __future__ import annotations

import numpy as np


def divergence_matrix(rows: np.ndarray, kind: int) -> np.ndarray:
    """All-pairs divergences, out[i, j] = D(rows[i] || rows[j]).

    kind: 0 = kl, 1 = euclidean, 2 = chebyshev, 3 = canberra.
    """
    p = np.ascontiguousarray(rows, dtype=np.float64)
    if kind == 0:
        logp = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), 0.0)
        self_term = np.sum(p * logp, axis=1)
        out = self_term[:, None] - p @ logp.T
        # p_i > 0 where p_j == 0 makes the divergence undefined (+inf)
        bad = (p > 0).astype(np.float64) @ (p <= 0).astype(np.float64).T
        out[bad > 0] = np.inf
        # dot() and sum() may round differently; identical rows are exactly 0
        _, inverse = np.unique(p, axis=0, return_inverse=True)
        out[inverse[:, None] == inverse[None, :]] = 0.0
        return out
    if kind == 1:
        diff = p[:, None, :] - p[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=2))
    if kind == 2:
        diff = np.abs(p[:, None, :] - p[None, :, :])
        return diff.max(axis=2)
    if kind == 3:
        num = np.abs(p[:, None, :] - p[None, :, :])
        den = p[:, None, :] + p[None, :, :]
        terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        return terms.sum(axis=2)
    raise ValueError(f"unknown kind code {kind}")


def categorical_counts(
    cdf: np.ndarray, src: np.ndarray, u: np.ndarray, m: np.ndarray
) -> np.ndarray:
    """Sequential categorical draws aggregated into count vectors.

    cdf: (k, d) row-wise cumulative distributions (last column == 1).
    src: (n,) row index into cdf for each output item.
    u:   (sum(m),) uniforms consumed item-major, vote-minor.
    m:   (n,) votes per output item.

    Vote t of item i lands on the first label y with u[t] < cdf[src[i], y].
    """
    cdf = np.asarray(cdf, dtype=np.float64)
    src = np.asarray(src, dtype=np.int64)
    u = np.asarray(u, dtype=np.float64)
    m = np.asarray(m, dtype=np.int64)
    n, d = src.shape[0], cdf.shape[1]
    item_of_vote = np.repeat(np.arange(n), m)
    # count of boundaries passed == searchsorted(cdf_row, u, side="right")
    labels = np.sum(u[:, None] >= cdf[src[item_of_vote]], axis=1)
    labels = np.minimum(labels, d - 1)
    out = np.zeros((n, d), dtype=np.int64)
    np.add.at(out, (item_of_vote, labels), 1)
    return out


def lda_sweep(
    doc: np.ndarray,
    word: np.ndarray,
    z: np.ndarray,
    n_iz: np.ndarray,
    n_zw: np.ndarray,
    n_z: np.ndarray,
    alpha: float,
    beta: float,
    u: np.ndarray,
) -> None:
    """One collapsed Gibbs sweep over all tokens, updating state in place.

    Arithmetic mirrors the compiled kernel term for term so the sampled
    topics agree exactly given the same uniforms.
    """
    p, d = n_zw.shape
    beta_d = beta * d
    t_count = doc.shape[0]
    weights = [0.0] * p
    for t in range(t_count):
        i = int(doc[t])
        w = int(word[t])
        k = int(z[t])
        n_iz[i, k] -= 1
        n_zw[k, w] -= 1
        n_z[k] -= 1
        total = 0.0
        for j in range(p):
            wj = (
                (float(n_zw[j, w]) + beta)
                / (float(n_z[j]) + beta_d)
                * (float(n_iz[i, j]) + alpha)
            )
            weights[j] = wj
            total += wj
        threshold = float(u[t]) * total
        run = 0.0
        k = p - 1
        for j in range(p):
            run += weights[j]
            if run > threshold:
                k = j
                break
        z[t] = k
        n_iz[i, k] += 1
        n_zw[k, w] += 1
        n_z[k] += 1
