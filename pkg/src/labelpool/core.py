"""Domain types, dataset I/O and the count/distribution primitives.

A dataset is an ordered collection of items, each carrying a vector of
non-negative integer annotation counts over a fixed label space. Load
order defines the canonical item index used everywhere else (pools,
assignments, splits).
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "LabelSpace",
    "LabelCounts",
    "LabelDistribution",
    "DataItem",
    "Dataset",
    "Pooling",
    "normalize",
    "pooled_distribution",
    "split_dataset",
    "load_dataset",
    "save_dataset",
]

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class LabelSpace:
    """Ordered label names; order fixes the vector index of each label."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) < 2:
            raise ValueError("label space needs at least 2 labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("label names must be unique")
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))

    @property
    def d(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class LabelCounts:
    """Annotation counts for one item; the size-m sample."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1:
            raise ValueError("counts must be a vector")
        if not np.issubdtype(c.dtype, np.integer):
            if not np.all(c == np.floor(c)):
                raise ValueError("counts must be integers")
            c = c.astype(np.int64)
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        if c.sum() < 1:
            raise ValueError("counts must sum to at least 1")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @property
    def m(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class LabelDistribution:
    """A probability vector over the label space."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1:
            raise ValueError("probs must be a vector")
        if np.any(p < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(p.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)


@dataclass(frozen=True)
class DataItem:
    id: str
    counts: LabelCounts
    features: np.ndarray | None = None
    annotator_ids: tuple[str, ...] | None = None


class Dataset:
    """Immutable indexed collection of items over one label space.

    The raw per-item counts are exposed as an ``(n, d)`` integer matrix,
    which is what the numeric modules operate on.
    """

    def __init__(self, label_space: LabelSpace, items: list[DataItem]):
        if not items:
            raise ValueError("dataset must contain at least one item")
        d = label_space.d
        feat_dim = None
        for it in items:
            if it.counts.counts.shape[0] != d:
                raise ValueError(
                    f"item {it.id!r}: dimension mismatch "
                    f"(counts length {it.counts.counts.shape[0]}, expected {d})"
                )
            if it.features is not None:
                if feat_dim is None:
                    feat_dim = len(it.features)
                elif len(it.features) != feat_dim:
                    raise ValueError(f"item {it.id!r}: feature length mismatch")
        if feat_dim is not None and any(it.features is None for it in items):
            raise ValueError("either all items have features or none do")

        self.label_space = label_space
        self.items = tuple(items)
        self._counts = np.stack([it.counts.counts for it in items]).astype(np.int64)
        self._counts.setflags(write=False)
        if feat_dim is not None:
            self._features = np.stack(
                [np.asarray(it.features, dtype=np.float64) for it in items]
            )
            self._features.setflags(write=False)
        else:
            self._features = None

    @property
    def n(self) -> int:
        return len(self.items)

    @property
    def d(self) -> int:
        return self.label_space.d

    @property
    def counts(self) -> np.ndarray:
        """(n, d) int64 matrix of annotation counts."""
        return self._counts

    @property
    def features(self) -> np.ndarray | None:
        """(n, f) float matrix, or None when items carry no features."""
        return self._features

    @property
    def vote_counts(self) -> np.ndarray:
        """Per-item total number of votes m_i."""
        return self._counts.sum(axis=1)

    @property
    def uniform_m(self) -> int | None:
        """The common vote count, or None when m varies across items."""
        m = self.vote_counts
        return int(m[0]) if np.all(m == m[0]) else None

    def distributions(self, alpha: float = 0.0) -> np.ndarray:
        """(n, d) matrix of per-item empirical label distributions."""
        return normalize(self._counts, alpha)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.label_space, [self.items[int(i)] for i in idx])

    def __len__(self) -> int:
        return self.n


def normalize(counts, alpha: float = 0.0) -> np.ndarray:
    """Counts to probabilities with additive smoothing.

    ``probs[y] = (counts[y] + alpha) / (m + alpha * d)``; ``alpha = 0``
    gives raw relative frequencies. Accepts a single count vector or an
    ``(n, d)`` matrix of count rows (normalized row-wise).
    """
    if alpha < 0:
        raise ValueError("smoothing alpha must be >= 0")
    c = np.asarray(counts, dtype=np.float64)
    if c.ndim == 1:
        m = c.sum()
        if m < 1:
            raise ValueError("cannot normalize counts with zero total")
        return (c + alpha) / (m + alpha * c.shape[0])
    m = c.sum(axis=1, keepdims=True)
    if np.any(m < 1):
        bad = int(np.argmin(m))
        raise ValueError(f"cannot normalize counts with zero total (row {bad})")
    return (c + alpha) / (m + alpha * c.shape[1])


def pooled_distribution(pool, dataset: Dataset, alpha: float = 0.0) -> np.ndarray:
    """Distribution of the merged counts of all pool members."""
    idx = np.asarray(sorted(pool), dtype=np.int64)
    if idx.size == 0:
        raise ValueError("pool must be non-empty")
    return normalize(dataset.counts[idx].sum(axis=0), alpha)


class Pooling:
    """A cover of the item set by p pools plus an item-to-pool assignment.

    ``refined`` holds one distribution per pool, recomputed from the
    pooled member counts under ``refine_alpha`` smoothing. Rows of empty
    pools are NaN and are never referenced by any assignment.
    """

    def __init__(
        self,
        pools: list[np.ndarray],
        assignment: np.ndarray,
        refined: np.ndarray,
        refine_alpha: float = 0.0,
        method: str = "",
        meta: dict | None = None,
    ):
        self.pools = [np.asarray(k, dtype=np.int64) for k in pools]
        self.assignment = np.asarray(assignment, dtype=np.int64)
        self.refined = np.asarray(refined, dtype=np.float64)
        self.refine_alpha = float(refine_alpha)
        self.method = method
        self.meta = dict(meta or {})
        if self.refined.shape[0] != len(self.pools):
            raise ValueError("refined must have one row per pool")
        if self.assignment.size and (
            self.assignment.min() < 0 or self.assignment.max() >= len(self.pools)
        ):
            raise ValueError("assignment indexes a pool out of range")

    @property
    def p(self) -> int:
        return len(self.pools)

    @property
    def n(self) -> int:
        return self.assignment.shape[0]

    def pool_sizes(self) -> np.ndarray:
        return np.array([k.size for k in self.pools], dtype=np.int64)

    def refined_per_item(self) -> np.ndarray:
        """(n, d) matrix: the refined distribution of each item's pool."""
        return self.refined[self.assignment]

    def validate_cover(self, n: int) -> None:
        """Check the pooling invariants against an n-item dataset."""
        if self.assignment.shape[0] != n:
            raise ValueError("assignment length does not match dataset size")
        covered = np.zeros(n, dtype=bool)
        for k in self.pools:
            covered[k] = True
        if not covered.all():
            raise ValueError("pools do not cover all items")

    @classmethod
    def from_assignment(
        cls,
        counts: np.ndarray,
        assignment: np.ndarray,
        p: int,
        refine_alpha: float = 0.0,
        method: str = "",
        meta: dict | None = None,
    ) -> "Pooling":
        """Build pools as assignment preimages; refined from pooled counts."""
        assignment = np.asarray(assignment, dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        d = counts.shape[1]
        pools = [np.flatnonzero(assignment == j) for j in range(p)]
        refined = np.full((p, d), np.nan)
        for j, k in enumerate(pools):
            if k.size:
                refined[j] = normalize(counts[k].sum(axis=0), refine_alpha)
        return cls(pools, assignment, refined, refine_alpha, method, meta)

    def to_json(self) -> dict:
        return {
            "format": "labelpool.pooling",
            "version": _version(),
            "method": self.method,
            "refine_alpha": self.refine_alpha,
            "p": self.p,
            "pools": [k.tolist() for k in self.pools],
            "assignment": self.assignment.tolist(),
            "refined": [
                None if np.any(np.isnan(row)) else row.tolist()
                for row in self.refined
            ],
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "Pooling":
        d = None
        for row in payload["refined"]:
            if row is not None:
                d = len(row)
                break
        if d is None:
            raise ValueError("pooling has no non-empty pool")
        refined = np.array(
            [row if row is not None else [np.nan] * d for row in payload["refined"]]
        )
        return cls(
            [np.asarray(k, dtype=np.int64) for k in payload["pools"]],
            np.asarray(payload["assignment"], dtype=np.int64),
            refined,
            payload.get("refine_alpha", 0.0),
            payload.get("method", ""),
            payload.get("meta"),
        )


def split_dataset(dataset: Dataset, ratios, seed: int):
    """Disjoint train/dev/test partition by seeded random permutation."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise ValueError("ratios must be a (train, dev, test) triple")
    if any(r < 0 for r in ratios):
        raise ValueError("ratios must be non-negative")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios sum to {sum(ratios)}, not 1")
    n = dataset.n
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_dev = int(round(ratios[1] * n))
    n_dev = min(n_dev, n - n_train)
    parts = (
        np.sort(perm[:n_train]),
        np.sort(perm[n_train : n_train + n_dev]),
        np.sort(perm[n_train + n_dev :]),
    )
    return tuple(dataset.subset(idx) for idx in parts)


# ---------------------------------------------------------------------------
# I/O
#
# JSON-lines: one object per item with keys id, counts, optional features,
# optional annotators. The first line may be a header object {"labels": [...]};
# otherwise a sidecar <file>.labels.json must declare the label names.
# CSV: columns id, one count column per label name, optional feature columns
# prefixed f_.
# ---------------------------------------------------------------------------


def load_dataset(path, format: str | None = None) -> Dataset:
    """Load and validate a dataset from a jsonl or csv file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format == "jsonl":
        return _load_jsonl(path)
    if format == "csv":
        return _load_csv(path)
    raise ValueError(f"unknown dataset format {format!r}")


def _item_from_record(rec: dict, row_no: int, d: int) -> DataItem:
    if "id" not in rec or "counts" not in rec:
        raise ValueError(f"line {row_no}: item object needs 'id' and 'counts'")
    item_id = str(rec["id"])
    raw = rec["counts"]
    if len(raw) != d:
        raise ValueError(
            f"line {row_no}: dimension mismatch (counts length {len(raw)}, expected {d})"
        )
    try:
        counts = LabelCounts(np.asarray(raw))
    except ValueError as exc:
        raise ValueError(f"item {item_id!r}: {exc}") from exc
    features = rec.get("features")
    if features is not None:
        features = np.asarray(features, dtype=np.float64)
    annotators = rec.get("annotators")
    if annotators is not None:
        annotators = tuple(str(a) for a in annotators)
    return DataItem(item_id, counts, features, annotators)


def _load_jsonl(path: Path) -> Dataset:
    labels = None
    items = []
    with path.open("r", encoding="utf-8") as fh:
        for row_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {row_no}: malformed JSON ({exc.msg})") from exc
            if labels is None and "labels" in rec and "id" not in rec:
                labels = LabelSpace(tuple(rec["labels"]))
                continue
            if labels is None:
                labels = _sidecar_labels(path)
            items.append(_item_from_record(rec, row_no, labels.d))
    if labels is None:
        raise ValueError(f"{path}: no label header and no items")
    return Dataset(labels, items)


def _sidecar_labels(path: Path) -> LabelSpace:
    sidecar = path.with_suffix(path.suffix + ".labels.json")
    if not sidecar.exists():
        raise ValueError(
            f"{path}: first line declares no labels and sidecar {sidecar.name} is missing"
        )
    with sidecar.open("r", encoding="utf-8") as fh:
        return LabelSpace(tuple(json.load(fh)["labels"]))


def _load_csv(path: Path) -> Dataset:
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty csv file") from None
        if not header or header[0] != "id":
            raise ValueError(f"{path}: first csv column must be 'id'")
        label_cols = [c for c in header[1:] if not c.startswith("f_")]
        feat_cols = [c for c in header[1:] if c.startswith("f_")]
        labels = LabelSpace(tuple(label_cols))
        col_index = {c: i for i, c in enumerate(header)}
        items = []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"line {row_no}: expected {len(header)} columns, got {len(row)}")
            try:
                raw = [float(row[col_index[c]]) for c in label_cols]
            except ValueError as exc:
                raise ValueError(f"line {row_no}: non-numeric count ({exc})") from exc
            rec = {"id": row[0], "counts": raw}
            if feat_cols:
                rec["features"] = [float(row[col_index[c]]) for c in feat_cols]
            items.append(_item_from_record(rec, row_no, labels.d))
    if not items:
        raise ValueError(f"{path}: csv file has no data rows")
    return Dataset(labels, items)


def _atomic_write_text(path, text: str) -> None:
    """Write via a same-directory temp file and rename, so readers never
    observe a partial file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset in the canonical jsonl layout (header line first)."""
    lines = [json.dumps({"labels": list(dataset.label_space.labels)})]
    for it in dataset.items:
        rec = {"id": it.id, "counts": it.counts.counts.tolist()}
        if it.features is not None:
            rec["features"] = np.asarray(it.features, dtype=float).tolist()
        if it.annotator_ids is not None:
            rec["annotators"] = list(it.annotator_ids)
        lines.append(json.dumps(rec))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def _version() -> str:
    from labelpool import __version__

    return __version__
