"""Distances and divergences between label distributions.

Four measures drive neighborhood pooling and the loss functions: KL
divergence (natural log), Euclidean, Chebyshev and Canberra. KL is
asymmetric and undefined when the second argument has zero mass where
the first does not; callers smooth the second argument when needed.
"""

from __future__ import annotations

import numpy as np

from labelpool import _kernels

__all__ = ["KINDS", "kl", "distance", "pairwise_matrix"]

KINDS = ("kl", "euclidean", "chebyshev", "canberra")

_KIND_CODES = {name: code for code, name in enumerate(KINDS)}


def _check_pair(p, q):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError("p and q must be vectors of equal length")
    return p, q


def kl(p, q) -> float:
    """KL divergence sum(p * log(p / q)) in natural-log units.

    Terms with ``p[y] == 0`` contribute zero. Raises when some
    ``p[y] > 0`` meets ``q[y] == 0``, where the divergence is undefined.
    """
    p, q = _check_pair(p, q)
    support = p > 0
    if np.any(q[support] <= 0):
        raise ValueError(
            "undefined divergence: q has zero mass on p's support (smooth q)"
        )
    ps = p[support]
    return float(np.sum(ps * (np.log(ps) - np.log(q[support]))))


def distance(p, q, kind: str) -> float:
    """Dispatch to one of the four supported measures."""
    if kind == "kl":
        return kl(p, q)
    p, q = _check_pair(p, q)
    if kind == "euclidean":
        return float(np.sqrt(np.sum((p - q) ** 2)))
    if kind == "chebyshev":
        return float(np.max(np.abs(p - q)))
    if kind == "canberra":
        num = np.abs(p - q)
        den = p + q
        terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        return float(terms.sum())
    raise ValueError(f"unknown divergence kind {kind!r}; expected one of {KINDS}")


def pairwise_matrix(rows: np.ndarray, kind: str) -> np.ndarray:
    """All-pairs divergences: ``out[i, j] = D(rows[i] || rows[j])``.

    Runs on the compiled kernel backend when available. For ``kl``,
    entries where the column distribution has zero mass on the row's
    support come back as ``inf``.
    """
    if kind not in _KIND_CODES:
        raise ValueError(f"unknown divergence kind {kind!r}; expected one of {KINDS}")
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("rows must be an (n, d) matrix")
    return _kernels.divergence_matrix(rows, _KIND_CODES[kind])
