"""Interaction ingestion, implicit conversion, five-core pruning and CV splits.

Everything downstream works on a :class:`Dataset`: a binary user x item CSR
matrix with contiguous indices assigned in first-appearance order.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from ._seeding import derive_seed

logger = logging.getLogger(__name__)

CORE = 5


class DatasetError(ValueError):
    pass


class SplitExhausted(RuntimeError):
    """Raised when the inner split cannot be shrunk below 50/50."""


@dataclass(frozen=True, slots=True)
class InteractionRecord:
    user_key: str
    item_key: str
    rating: float | None = None
    timestamp: int | None = None

    def __post_init__(self):
        if not self.user_key or not self.item_key:
            raise DatasetError("user_key and item_key must be non-empty")


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for delimited interaction logs.

    Columns are header names when ``header`` is true, otherwise 0-based
    positions (given as ints or digit strings).
    """

    user: str | int = "user"
    item: str | int = "item"
    rating: str | int | None = None
    timestamp: str | int | None = None
    delimiter: str = ","
    header: bool = True

    @classmethod
    def parse(cls, text: str) -> "CsvSchema":
        """Parse ``key=value`` pairs (comma-separated) or a preset name.

        Example: ``user=user_id,item=item_id,rating=rating,delimiter=tab``.
        """
        text = text.strip()
        if text in SCHEMA_PRESETS:
            return SCHEMA_PRESETS[text]
        kw: dict[str, object] = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            if "=" not in part:
                raise DatasetError(f"bad schema entry {part!r}; expected key=value")
            key, value = (s.strip() for s in part.split("=", 1))
            if key == "delimiter":
                kw[key] = {"tab": "\t", "comma": ",", "semicolon": ";", "space": " "}.get(value, value)
            elif key == "header":
                kw[key] = value.lower() in ("1", "true", "yes")
            elif key in ("user", "item", "rating", "timestamp"):
                kw[key] = int(value) if value.isdigit() else value
            else:
                raise DatasetError(f"unknown schema key {key!r}")
        return cls(**kw)


SCHEMA_PRESETS = {
    # GroupLens u.data / ratings.dat style: no header, tab separated
    "grouplens": CsvSchema(user=0, item=1, rating=2, timestamp=3, delimiter="\t", header=False),
    # RecBole atomic .inter files (header "user_id:token<TAB>item_id:token...")
    "recbole": CsvSchema(user=0, item=1, rating=2, timestamp=3, delimiter="\t", header=True),
    "default": CsvSchema(),
}


@dataclass
class IngestResult:
    records: list[InteractionRecord]
    n_malformed: int = 0

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def _column_index(header: list[str] | None, col: str | int | None, name: str, path) -> int | None:
    if col is None:
        return None
    if isinstance(col, int):
        return col
    if header is None:
        raise DatasetError(f"schema names column {col!r} but {path} has no header")
    # RecBole-style typed headers ("user_id:token") match on the bare name too
    bare = [h.split(":", 1)[0] for h in header]
    for names in (header, bare):
        if col in names:
            return names.index(col)
    raise DatasetError(f"{path}: mapped {name} column {col!r} not found in header {header}")


def ingest_csv(path: str | os.PathLike, schema: CsvSchema | None = None) -> IngestResult:
    """Read a delimited interaction log into records, in file order.

    Rows with a missing/empty user or item, or an unparseable rating or
    timestamp, are skipped and counted in ``n_malformed``.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    records: list[InteractionRecord] = []
    bad = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        header = next(reader, None) if schema.header else None
        if schema.header and header is None:
            raise DatasetError(f"{path} is empty")
        iu = _column_index(header, schema.user, "user", path)
        ii = _column_index(header, schema.item, "item", path)
        ir = _column_index(header, schema.rating, "rating", path)
        it = _column_index(header, schema.timestamp, "timestamp", path)
        width = max(c for c in (iu, ii, ir, it) if c is not None)
        for row in reader:
            if not row:
                continue
            if len(row) <= width:
                bad += 1
                continue
            user, item = row[iu].strip(), row[ii].strip()
            if not user or not item:
                bad += 1
                continue
            try:
                rating = float(row[ir]) if ir is not None and row[ir].strip() else None
                ts = int(float(row[it])) if it is not None and row[it].strip() else None
            except ValueError:
                bad += 1
                continue
            records.append(InteractionRecord(user, item, rating, ts))
    if bad:
        logger.warning("%s: skipped %d malformed rows", path, bad)
    if not records:
        raise DatasetError(f"{path}: no valid rows")
    return IngestResult(records, bad)


def to_implicit(records: Iterable[InteractionRecord], min_rating: float | None = None) -> list[InteractionRecord]:
    """Drop the rating from every record.

    With ``min_rating`` set, explicit records rated below it are removed
    first (records that carry no rating are always kept).
    """
    out = []
    for r in records:
        if min_rating is not None and r.rating is not None and r.rating < min_rating:
            continue
        out.append(r if r.rating is None else replace(r, rating=None))
    return out


def dedup(records: Iterable[InteractionRecord]) -> list[InteractionRecord]:
    """Keep the first occurrence of each (user, item) pair."""
    seen = set()
    out = []
    for r in records:
        key = (r.user_key, r.item_key)
        if key not in seen:
            seen.add(key)
            out.append(r)
    return out


def five_core_prune(records: Iterable[InteractionRecord], core: int = CORE) -> list[InteractionRecord]:
    """Iteratively drop users and items with fewer than ``core`` distinct partners.

    Input is deduplicated first. Alternates user and item passes until a
    pass removes nothing; the k-core of a bipartite graph is unique so the
    pass order does not matter.
    """
    recs = dedup(records)
    while True:
        n = len(recs)
        users = Counter(r.user_key for r in recs)
        recs = [r for r in recs if users[r.user_key] >= core]
        items = Counter(r.item_key for r in recs)
        recs = [r for r in recs if items[r.item_key] >= core]
        if len(recs) == n:
            break
    if not recs:
        logger.warning("five-core pruning removed every interaction; dataset too sparse")
    return recs


@dataclass(frozen=True, eq=False)
class Dataset:
    """Binary implicit-feedback interaction matrix with key maps."""

    user_keys: tuple[str, ...]
    item_keys: tuple[str, ...]
    matrix: sp.csr_matrix
    source: str = ""
    flags: tuple[str, ...] = ()

    @property
    def n_users(self) -> int:
        return len(self.user_keys)

    @property
    def n_items(self) -> int:
        return len(self.item_keys)

    @property
    def n_interactions(self) -> int:
        return int(self.matrix.nnz)

    def pairs(self) -> np.ndarray:
        """Sorted ``(user_index, item_index)`` array, shape (nnz, 2)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return np.column_stack([coo.row[order], coo.col[order]]).astype(np.int64)

    def records(self) -> list[InteractionRecord]:
        return [InteractionRecord(self.user_keys[u], self.item_keys[i]) for u, i in self.pairs()]

    def user_degrees(self) -> np.ndarray:
        return np.diff(self.matrix.indptr)

    def item_degrees(self) -> np.ndarray:
        return np.bincount(self.matrix.indices, minlength=self.n_items)


def interactions_matrix(rows, cols, shape) -> sp.csr_matrix:
    data = np.ones(len(rows), dtype=np.float64)
    m = sp.csr_matrix((data, (np.asarray(rows), np.asarray(cols))), shape=shape)
    m.sum_duplicates()
    m.data[:] = 1.0
    m.sort_indices()
    return m


def index(records: Iterable[InteractionRecord], source: str = "", flags: Sequence[str] = ()) -> Dataset:
    """Deduplicate and assign contiguous first-appearance indices."""
    users: dict[str, int] = {}
    items: dict[str, int] = {}
    rows, cols = [], []
    for r in dedup(records):
        rows.append(users.setdefault(r.user_key, len(users)))
        cols.append(items.setdefault(r.item_key, len(items)))
    mat = interactions_matrix(rows, cols, (len(users), len(items)))
    return Dataset(tuple(users), tuple(items), mat, source, tuple(flags))


@dataclass(frozen=True)
class DatasetStats:
    n_interactions: int
    n_users: int
    n_items: int
    avg_int_per_user: float
    avg_int_per_item: float
    sparsity: float
    domain_label: str = ""

    def to_json(self) -> str:
        def fmt(v):
            return v if isinstance(v, str) else f"{v:.6g}"

        return json.dumps({k: fmt(v) for k, v in self.__dict__.items()}, indent=2)

    def table_row(self, name: str = "") -> str:
        return " | ".join([
            name,
            f"{self.n_interactions:,}",
            f"{self.n_users:,}",
            f"{self.n_items:,}",
            f"{self.avg_int_per_user:.2f}",
            f"{self.avg_int_per_item:.2f}",
            f"{100 * round(self.sparsity, 4):.2f}%",
            self.domain_label,
        ])


TABLE_HEADER = "Name | #Interactions | #Users | #Items | Avg.#Int./User | Avg.#Int/Item | Sparsity | Domain"


def stats(dataset: Dataset, domain_label: str = "") -> DatasetStats:
    n, u, i = dataset.n_interactions, dataset.n_users, dataset.n_items
    if n == 0 or u == 0 or i == 0:
        raise DatasetError("statistics of an empty dataset are undefined")
    return DatasetStats(n, u, i, n / u, n / i, 1.0 - n / (u * i), domain_label)


def load_interactions(path, schema: CsvSchema | None = None, *, min_rating: float | None = None,
                      prune: bool = True, source: str | None = None) -> Dataset:
    """Ingest, convert, optionally five-core prune, and index a log file."""
    recs = to_implicit(ingest_csv(path, schema).records, min_rating=min_rating)
    flags = ["implicit"]
    if min_rating is not None:
        flags.append(f"min_rating={min_rating:g}")
    if prune:
        recs = five_core_prune(recs)
        flags.append("five_core")
    return index(recs, source=source or Path(path).name, flags=flags)


def write_dump(dataset: Dataset, out_dir, domain_label: str = "") -> None:
    """Canonical dump: sorted pair list, key maps and a stats record."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "pairs.tsv", dataset.pairs(), fmt="%d", delimiter="\t")
    (out / "users.txt").write_text("".join(k + "\n" for k in dataset.user_keys), encoding="utf-8")
    (out / "items.txt").write_text("".join(k + "\n" for k in dataset.item_keys), encoding="utf-8")
    meta = {"source": dataset.source, "flags": list(dataset.flags)}
    (out / "dataset.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    if dataset.n_interactions:
        (out / "stats.json").write_text(stats(dataset, domain_label).to_json() + "\n", encoding="utf-8")


def read_dump(out_dir) -> Dataset:
    out = Path(out_dir)
    users = tuple((out / "users.txt").read_text(encoding="utf-8").splitlines())
    items = tuple((out / "items.txt").read_text(encoding="utf-8").splitlines())
    pairs = np.loadtxt(out / "pairs.tsv", dtype=np.int64, ndmin=2, delimiter="\t")
    if pairs.size == 0:
        pairs = np.zeros((0, 2), dtype=np.int64)
    meta = json.loads((out / "dataset.json").read_text(encoding="utf-8"))
    mat = interactions_matrix(pairs[:, 0], pairs[:, 1], (len(users), len(items)))
    return Dataset(users, items, mat, meta.get("source", ""), tuple(meta.get("flags", ())))


# -- cross validation -------------------------------------------------------

RATIO_STEPS = (8, 7, 6, 5)  # inner train fraction, in tenths


@dataclass(frozen=True, eq=False)
class FoldSplit:
    """One outer fold plus its inner train/validation split.

    All four matrices share the shape of the cluster matrix they came from.
    """

    fold_id: int
    train: sp.csr_matrix
    test: sp.csr_matrix
    inner_train: sp.csr_matrix
    inner_valid: sp.csr_matrix
    split_tenths: int = 8
    seed: int = 0
    _inner_order: tuple = field(default=(), repr=False)

    @property
    def split_ratio(self) -> float:
        return self.split_tenths / 10


def _rows_to_csr(rows: list[np.ndarray], shape) -> sp.csr_matrix:
    lens = np.array([len(r) for r in rows], dtype=np.int64)
    indptr = np.concatenate([[0], np.cumsum(lens)])
    indices = np.concatenate(rows).astype(np.int32) if rows and lens.sum() else np.zeros(0, np.int32)
    m = sp.csr_matrix((np.ones(len(indices)), indices, indptr), shape=shape)
    m.sort_indices()
    return m


def _inner_split(train: sp.csr_matrix, order: Sequence[np.ndarray], tenths: int):
    """Cut each user's shuffled train items into (inner_train, inner_valid).

    The validation share is round-half-up of n * (10 - tenths) / 10, capped
    so at least one item stays in inner_train.
    """
    keep, valid = [], []
    for items in order:
        n = len(items)
        n_valid = (n * (10 - tenths) * 2 + 10) // 20
        n_valid = min(n_valid, max(n - 1, 0))
        valid.append(items[:n_valid])
        keep.append(items[n_valid:])
    return _rows_to_csr(keep, train.shape), _rows_to_csr(valid, train.shape)


def crossfold(interactions: sp.csr_matrix, n_folds: int = 5, seed: int = 0,
              split_ratio: float = 0.8) -> list[FoldSplit]:
    """Per-user stratified k-fold split of a binary interaction matrix.

    Each user's items are shuffled and dealt round-robin into ``n_folds``
    buckets; fold f tests on bucket f. Users with fewer than ``n_folds``
    items stay entirely in train.
    """
    X = sp.csr_matrix(interactions)
    tenths = int(round(split_ratio * 10))
    if tenths not in RATIO_STEPS:
        raise ValueError(f"split_ratio must be one of 0.8, 0.7, 0.6, 0.5; got {split_ratio}")
    rng = np.random.default_rng(derive_seed(seed, "crossfold"))
    buckets = np.full(X.nnz, -1, dtype=np.int64)
    for u in range(X.shape[0]):
        lo, hi = X.indptr[u], X.indptr[u + 1]
        n = hi - lo
        if n >= n_folds:
            perm = rng.permutation(n)
            buckets[lo + perm] = np.arange(n) % n_folds
    folds = []
    for f in range(n_folds):
        test_mask = buckets == f
        test_rows, train_rows = [], []
        for u in range(X.shape[0]):
            lo, hi = X.indptr[u], X.indptr[u + 1]
            cols, m = X.indices[lo:hi], test_mask[lo:hi]
            test_rows.append(cols[m])
            train_rows.append(cols[~m])
        train = _rows_to_csr(train_rows, X.shape)
        test = _rows_to_csr(test_rows, X.shape)
        fold_seed = derive_seed(seed, "inner", f)
        irng = np.random.default_rng(fold_seed)
        order = tuple(irng.permutation(r) for r in train_rows)
        inner_train, inner_valid = _inner_split(train, order, tenths)
        folds.append(FoldSplit(f, train, test, inner_train, inner_valid, tenths, fold_seed, order))
    return folds


def shrink_inner_split(split: FoldSplit) -> FoldSplit:
    """Lower the inner train share by 10 points, reusing the same shuffle."""
    if split.split_tenths <= 5:
        raise SplitExhausted("inner split already at 50/50")
    tenths = split.split_tenths - 1
    inner_train, inner_valid = _inner_split(split.train, split._inner_order, tenths)
    return replace(split, inner_train=inner_train, inner_valid=inner_valid, split_tenths=tenths)


def with_inner_ratio(split: FoldSplit, split_ratio: float) -> FoldSplit:
    tenths = int(round(split_ratio * 10))
    if tenths not in RATIO_STEPS:
        raise ValueError(f"bad split ratio {split_ratio}")
    inner_train, inner_valid = _inner_split(split.train, split._inner_order, tenths)
    return replace(split, inner_train=inner_train, inner_valid=inner_valid, split_tenths=tenths)
