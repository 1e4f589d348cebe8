"""Ratings ingestion, the sparse user x item matrix, holdout splits and
the user-centering / item-mean imputation transforms."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable

import numpy as np
import scipy.sparse as sp

from cfkit.errors import (
    DatasetMissingError,
    DomainError,
    DuplicateRatingError,
    EmptyDatasetError,
    ParseError,
    RatingDomainError,
    UnknownIdError,
)

RATING_MIN = 1.0
RATING_MAX = 5.0

FORMATS = ("ml100k", "ml1m")
_SEPARATORS = {"ml100k": "\t", "ml1m": "::"}
DOWNLOAD_HINT = (
    "MovieLens files are distributed by GroupLens at "
    "https://grouplens.org/datasets/movielens/ (ml-100k.zip contains u.data, "
    "ml-1m.zip contains ratings.dat); see scripts/fetch_ml100k.py"
)


@dataclass(frozen=True)
class Interaction:
    user_raw: Hashable
    item_raw: Hashable
    rating: float
    timestamp: int = 0


def _lines(stream):
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    for raw in stream:
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        yield raw.rstrip("\r\n")


def parse_interactions(stream, format: str = "ml100k") -> list[Interaction]:
    """Parse a MovieLens ratings file.

    ``stream`` may be a text or binary file object, raw bytes, or any
    iterable of lines. Blank lines are ignored; every other line must hold
    exactly four fields ``user item rating timestamp``.
    """
    if format not in _SEPARATORS:
        raise DomainError(f"unknown format {format!r}; expected one of {FORMATS}")
    sep = _SEPARATORS[format]
    seen: set = set()
    out = []
    for lineno, line in enumerate(_lines(stream), start=1):
        if not line.strip():
            continue
        fields = line.split(sep)
        if len(fields) != 4:
            raise ParseError(f"expected 4 fields, got {len(fields)}", line=lineno)
        try:
            user, item = int(fields[0]), int(fields[1])
            rating = float(fields[2])
            timestamp = int(fields[3])
        except ValueError as exc:
            raise ParseError(f"malformed field ({exc})", line=lineno) from None
        if not RATING_MIN <= rating <= RATING_MAX:
            raise RatingDomainError(f"rating {fields[2]} outside [1, 5]", line=lineno)
        key = (user, item)
        if key in seen:
            raise DuplicateRatingError(f"duplicate rating for user {user}, item {item}", line=lineno)
        seen.add(key)
        out.append(Interaction(user, item, rating, timestamp))
    return out


def load_interactions(path, format: str = "ml100k") -> list[Interaction]:
    path = Path(path)
    if not path.is_file():
        raise DatasetMissingError(f"dataset file not found: {path}. {DOWNLOAD_HINT}")
    with open(path, "rb") as fh:
        return parse_interactions(fh, format)


class RatingsMatrix:
    """Immutable sparse ratings matrix with row and column access.

    Dense indices run 0..m-1 / 0..n-1 in first-appearance order of the raw
    identifiers. ``csr`` serves per-user rows (I_u), ``csc`` per-item
    columns (U_i). Means of entities without ratings are NaN.
    """

    def __init__(self, users, items, values, user_ids, item_ids, timestamps=None):
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        self.user_ids = list(user_ids)
        self.item_ids = list(item_ids)
        self.m = len(self.user_ids)
        self.n = len(self.item_ids)
        if users.size and (users.max() >= self.m or items.max() >= self.n):
            raise DomainError("entry index outside the id maps")
        self.user_index = {raw: k for k, raw in enumerate(self.user_ids)}
        self.item_index = {raw: k for k, raw in enumerate(self.item_ids)}
        # entry order is kept: splits draw one random number per entry in this order
        self._users = users
        self._items = items
        self._values = values
        self._timestamps = (
            np.zeros(users.size, dtype=np.int64)
            if timestamps is None
            else np.asarray(timestamps, dtype=np.int64)
        )
        coo = sp.coo_matrix((values, (users, items)), shape=(self.m, self.n))
        self.csr = coo.tocsr()
        self.csc = coo.tocsc()
        if self.csr.nnz != users.size:
            raise DuplicateRatingError("duplicate (user, item) entries")
        self.csr.sort_indices()
        self.csc.sort_indices()

        ucount = np.diff(self.csr.indptr)
        icount = np.diff(self.csc.indptr)
        usum = np.asarray(self.csr.sum(axis=1)).ravel()
        isum = np.asarray(self.csc.sum(axis=0)).ravel()
        with np.errstate(invalid="ignore", divide="ignore"):
            self.user_means = np.where(ucount > 0, usum / np.maximum(ucount, 1), np.nan)
            self.item_means = np.where(icount > 0, isum / np.maximum(icount, 1), np.nan)
        self.user_counts = ucount
        self.item_counts = icount
        self.global_mean = float(values.mean()) if values.size else float("nan")
        for arr in (self._users, self._items, self._values, self._timestamps,
                    self.user_means, self.item_means):
            arr.setflags(write=False)

    @property
    def nnz(self) -> int:
        return int(self._values.size)

    @property
    def shape(self):
        return (self.m, self.n)

    def __repr__(self):
        return f"RatingsMatrix(m={self.m}, n={self.n}, nnz={self.nnz})"

    def _check_user(self, u):
        if not 0 <= u < self.m:
            raise DomainError(f"user index {u} out of range [0, {self.m})")

    def _check_item(self, i):
        if not 0 <= i < self.n:
            raise DomainError(f"item index {i} out of range [0, {self.n})")

    def row(self, u):
        """(item indices, ratings) of user ``u``, sorted by item index."""
        self._check_user(u)
        lo, hi = self.csr.indptr[u], self.csr.indptr[u + 1]
        return self.csr.indices[lo:hi], self.csr.data[lo:hi]

    def col(self, i):
        """(user indices, ratings) of item ``i``, sorted by user index."""
        self._check_item(i)
        lo, hi = self.csc.indptr[i], self.csc.indptr[i + 1]
        return self.csc.indices[lo:hi], self.csc.data[lo:hi]

    def get(self, u, i):
        """Stored rating or ``None``."""
        items, vals = self.row(u)
        self._check_item(i)
        k = np.searchsorted(items, i)
        if k < items.size and items[k] == i:
            return float(vals[k])
        return None

    def entries(self):
        """(users, items, values) arrays in insertion order."""
        return self._users, self._items, self._values

    def timestamps(self):
        return self._timestamps

    def triples(self):
        return list(zip(self._users.tolist(), self._items.tolist(), self._values.tolist()))

    def dense(self, fill=0.0) -> np.ndarray:
        out = np.full((self.m, self.n), fill, dtype=np.float64)
        out[self._users, self._items] = self._values
        return out

    def mask(self) -> np.ndarray:
        out = np.zeros((self.m, self.n), dtype=bool)
        out[self._users, self._items] = True
        return out

    def with_values(self, values) -> "RatingsMatrix":
        """Same entry set and id maps, new values (insertion order)."""
        return RatingsMatrix(self._users, self._items, values, self.user_ids,
                             self.item_ids, self._timestamps)

    def subset(self, keep) -> "RatingsMatrix":
        """Entries selected by boolean mask ``keep``; id maps are preserved."""
        keep = np.asarray(keep, dtype=bool)
        return RatingsMatrix(self._users[keep], self._items[keep], self._values[keep],
                             self.user_ids, self.item_ids, self._timestamps[keep])

    def user_of(self, raw) -> int:
        try:
            return self.user_index[raw]
        except KeyError:
            raise UnknownIdError(f"unknown user id {raw!r}") from None

    def item_of(self, raw) -> int:
        try:
            return self.item_index[raw]
        except KeyError:
            raise UnknownIdError(f"unknown item id {raw!r}") from None


def build_matrix(interactions: Iterable[Interaction]) -> RatingsMatrix:
    user_index: dict = {}
    item_index: dict = {}
    users, items, values, stamps = [], [], [], []
    seen = set()
    for it in interactions:
        u = user_index.setdefault(it.user_raw, len(user_index))
        i = item_index.setdefault(it.item_raw, len(item_index))
        if (u, i) in seen:
            raise DuplicateRatingError(f"duplicate rating for user {it.user_raw}, item {it.item_raw}")
        seen.add((u, i))
        users.append(u)
        items.append(i)
        values.append(float(it.rating))
        stamps.append(int(it.timestamp))
    if not values:
        raise EmptyDatasetError("cannot build a ratings matrix from zero interactions")
    return RatingsMatrix(users, items, values, list(user_index), list(item_index), stamps)


def load_matrix(path, format: str = "ml100k") -> RatingsMatrix:
    return build_matrix(load_interactions(path, format))


@dataclass
class Split:
    train: RatingsMatrix
    test: list[Interaction]
    ratio: float
    seed: int
    test_users: np.ndarray = field(repr=False, default=None)
    test_items: np.ndarray = field(repr=False, default=None)
    test_ratings: np.ndarray = field(repr=False, default=None)


def split_holdout(matrix: RatingsMatrix, ratio: float = 0.2, seed: int = 0) -> Split:
    """Seeded per-entry holdout.

    Each entry is drawn into the test set with probability ``ratio``.
    Drawn entries are then visited in a seeded random order and only moved
    if their user and their item keep at least one training rating.
    """
    if not 0.0 < ratio < 1.0:
        raise DomainError(f"split ratio must lie in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    users, items, values = matrix.entries()
    drawn = np.flatnonzero(rng.random(values.size) < ratio)
    drawn = drawn[rng.permutation(drawn.size)]

    ucount = matrix.user_counts.copy()
    icount = matrix.item_counts.copy()
    in_test = np.zeros(values.size, dtype=bool)
    for e in drawn.tolist():
        u, i = users[e], items[e]
        if ucount[u] > 1 and icount[i] > 1:
            in_test[e] = True
            ucount[u] -= 1
            icount[i] -= 1

    train = matrix.subset(~in_test)
    idx = np.flatnonzero(in_test)
    stamps = matrix.timestamps()
    test = [
        Interaction(matrix.user_ids[users[e]], matrix.item_ids[items[e]],
                    float(values[e]), int(stamps[e]))
        for e in idx.tolist()
    ]
    return Split(train, test, ratio, seed, users[idx].copy(), items[idx].copy(), values[idx].copy())


@dataclass(frozen=True)
class NormalizationState:
    kind: str = "none"
    user_means: np.ndarray | None = None

    def offsets(self, users) -> np.ndarray | float:
        if self.kind == "none":
            return np.zeros(np.shape(users)) if np.ndim(users) else 0.0
        return self.user_means[users]

    def invert(self, users, values):
        """Map normalized values back to the rating scale."""
        return values + self.offsets(users)


def center_by_user(matrix: RatingsMatrix):
    """Subtract each user's mean rating from that user's stored ratings."""
    users, _, values = matrix.entries()
    means = np.array(matrix.user_means, dtype=np.float64)
    centered = matrix.with_values(values - means[users])
    return centered, NormalizationState("user_mean_center", means)


def impute_item_means(matrix: RatingsMatrix) -> np.ndarray:
    """Dense m x n copy with each missing cell set to its item's mean.

    Items with no stored rating fall back to the global mean.
    """
    fill = np.where(np.isnan(matrix.item_means), matrix.global_mean, matrix.item_means)
    out = np.broadcast_to(fill, (matrix.m, matrix.n)).copy()
    users, items, values = matrix.entries()
    out[users, items] = values
    return out
