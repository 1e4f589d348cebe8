"""Pairwise user-user / item-item similarity and k-nearest-neighbor lists.

Every metric is evaluated over the *co-rated* coordinates of the two
vectors only: the items both users rated (user orientation) or the users
who rated both items (item orientation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from cfkit.errors import DomainError
from cfkit.ratings import RatingsMatrix

ORIENTATIONS = ("user_user", "item_item")
METRICS = ("pearson", "cosine", "adjusted_cosine", "euclidean")

# relative threshold under which a sum of squared deviations counts as zero
_ZERO_REL = 1e-12


def default_min_overlap(metric: str) -> int:
    return 2 if metric == "pearson" else 1


def _check_orientation(orientation):
    if orientation not in ORIENTATIONS:
        raise DomainError(f"orientation must be one of {ORIENTATIONS}, got {orientation!r}")


def _check_metric(metric, orientation):
    if metric not in METRICS:
        raise DomainError(f"metric must be one of {METRICS}, got {metric!r}")
    if metric == "adjusted_cosine" and orientation != "item_item":
        raise DomainError("adjusted cosine is defined for item-item similarity only")


# ---------------------------------------------------------------------------
# per-pair evaluation
# ---------------------------------------------------------------------------

def _vector(matrix: RatingsMatrix, orientation, e):
    return matrix.row(e) if orientation == "user_user" else matrix.col(e)


def _co_rated(matrix, orientation, a, b):
    _check_orientation(orientation)
    if a == b:
        raise DomainError(f"similarity of an entity with itself requested ({a})")
    ia, ra = _vector(matrix, orientation, a)
    ib, rb = _vector(matrix, orientation, b)
    common, pa, pb = np.intersect1d(ia, ib, assume_unique=True, return_indices=True)
    return common, ra[pa], rb[pb]


def pearson(matrix, orientation, a, b, min_overlap=2):
    """Pearson correlation over co-rated coordinates; ``None`` if undefined.

    Both means are taken over the co-rated coordinates only.
    """
    _, x, y = _co_rated(matrix, orientation, a, b)
    if x.size < max(min_overlap, 1):
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    sx, sy = float(dx @ dx), float(dy @ dy)
    if sx <= _ZERO_REL * float(x @ x) or sy <= _ZERO_REL * float(y @ y):
        return None
    return float(np.clip((dx @ dy) / math.sqrt(sx * sy), -1.0, 1.0))


def cosine(matrix, orientation, a, b, min_overlap=1):
    _, x, y = _co_rated(matrix, orientation, a, b)
    if x.size < max(min_overlap, 1):
        return None
    sx, sy = float(x @ x), float(y @ y)
    if sx == 0.0 or sy == 0.0:
        return None
    return float(np.clip((x @ y) / math.sqrt(sx * sy), -1.0, 1.0))


def adjusted_cosine(matrix, i, j, min_overlap=1):
    """Item-item cosine after subtracting each rater's full-row mean."""
    users, x, y = _co_rated(matrix, "item_item", i, j)
    if x.size < max(min_overlap, 1):
        return None
    means = matrix.user_means[users]
    dx, dy = x - means, y - means
    sx, sy = float(dx @ dx), float(dy @ dy)
    if sx <= _ZERO_REL * float(x @ x) or sy <= _ZERO_REL * float(y @ y):
        return None
    return float(np.clip((dx @ dy) / math.sqrt(sx * sy), -1.0, 1.0))


def euclidean_similarity(matrix, orientation, a, b, min_overlap=1):
    """``1 / (1 + d)`` with ``d`` the distance between the co-rated vectors."""
    _, x, y = _co_rated(matrix, orientation, a, b)
    if x.size < max(min_overlap, 1):
        return None
    d = x - y
    return 1.0 / (1.0 + math.sqrt(float(d @ d)))


def similarity(matrix, orientation, metric, a, b, min_overlap=None):
    _check_metric(metric, orientation)
    if min_overlap is None:
        min_overlap = default_min_overlap(metric)
    if metric == "pearson":
        return pearson(matrix, orientation, a, b, min_overlap)
    if metric == "cosine":
        return cosine(matrix, orientation, a, b, min_overlap)
    if metric == "adjusted_cosine":
        return adjusted_cosine(matrix, a, b, min_overlap)
    return euclidean_similarity(matrix, orientation, a, b, min_overlap)


# ---------------------------------------------------------------------------
# all-pairs evaluation
# ---------------------------------------------------------------------------

def _oriented(matrix: RatingsMatrix, orientation):
    """Dense values (zero where missing) and float mask, entities as rows."""
    x = matrix.dense(0.0)
    b = matrix.mask().astype(np.float64)
    if orientation == "item_item":
        return np.ascontiguousarray(x.T), np.ascontiguousarray(b.T)
    return x, b


def _exact_sq_distance(x, b, rows, cols, chunk=4096):
    out = np.empty(rows.size)
    for lo in range(0, rows.size, chunk):
        r, c = rows[lo:lo + chunk], cols[lo:lo + chunk]
        co = b[r] * b[c]
        d = (x[r] - x[c]) * co
        out[lo:lo + chunk] = np.einsum("ij,ij->i", d, d)
    return out


def pairwise_weights(matrix: RatingsMatrix, orientation: str, metric: str,
                     min_overlap: int | None = None) -> np.ndarray:
    """Dense symmetric weight matrix; NaN marks undefined pairs and the diagonal."""
    _check_orientation(orientation)
    _check_metric(metric, orientation)
    if min_overlap is None:
        min_overlap = default_min_overlap(metric)
    x, b = _oriented(matrix, orientation)
    if metric == "adjusted_cosine":
        raw_sq = (x * x) @ b.T
        means = np.nan_to_num(np.asarray(matrix.user_means), nan=0.0)
        x = (x - means[None, :]) * b
    overlap = b @ b.T
    sq = (x * x) @ b.T          # sq[a, c]: sum of a's squares over coords shared with c
    cross = x @ x.T
    with np.errstate(invalid="ignore", divide="ignore"):
        if metric == "pearson":
            s = x @ b.T          # s[a, c]: sum of a's values over coords shared with c
            cov = cross - s * s.T / overlap
            var = sq - s * s / overlap
            zero = var <= _ZERO_REL * sq
            w = cov / np.sqrt(var * var.T)
            w[zero | zero.T] = np.nan
        elif metric == "cosine":
            w = cross / np.sqrt(sq * sq.T)
            w[(sq == 0) | (sq.T == 0)] = np.nan
        elif metric == "adjusted_cosine":
            w = cross / np.sqrt(sq * sq.T)
            zero = sq <= _ZERO_REL * raw_sq
            w[zero | zero.T] = np.nan
        else:
            d2 = np.maximum(sq + sq.T - 2.0 * cross, 0.0)
            # cancellation guard: recompute small distances from the differences
            near = np.argwhere(np.triu(d2 <= 1e-6 * (sq + sq.T), 1) & (overlap > 0))
            if near.size:
                exact = _exact_sq_distance(x, b, near[:, 0], near[:, 1])
                d2[near[:, 0], near[:, 1]] = exact
                d2[near[:, 1], near[:, 0]] = exact
            w = 1.0 / (1.0 + np.sqrt(d2))
    w[overlap < max(min_overlap, 1)] = np.nan
    np.fill_diagonal(w, np.nan)
    np.clip(w, -1.0, 1.0, out=w)
    return w


# Ranking keys are rounded so that mathematically equal weights tie exactly and
# the index tie-break decides, whatever last-bit noise the arithmetic leaves.
TIE_DECIMALS = 12


def knn_lists(weights: np.ndarray, k: int):
    """Per-entity neighbors sorted by weight descending, ties by ascending index."""
    idx_lists, w_lists = [], []
    for row in weights:
        idx = np.flatnonzero(~np.isnan(row))
        order = np.lexsort((idx, -np.round(row[idx], TIE_DECIMALS)))[:k]
        idx_lists.append(idx[order])
        w_lists.append(row[idx[order]])
    return idx_lists, w_lists


@dataclass
class SimilarityModel:
    orientation: str
    metric: str
    k: int
    min_overlap: int | None
    weights: np.ndarray = field(repr=False)
    knn_index: list = field(repr=False)
    knn_weight: list = field(repr=False)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def weight(self, a, b):
        w = self.weights[a, b]
        return None if np.isnan(w) else float(w)

    def neighbors(self, e):
        return list(zip(self.knn_index[e].tolist(), self.knn_weight[e].tolist()))

    def knn_matrix(self) -> np.ndarray:
        """Dense matrix holding only the knn weights (0 elsewhere), and its support mask."""
        w = np.zeros_like(self.weights)
        s = np.zeros(self.weights.shape, dtype=bool)
        for e, (idx, ws) in enumerate(zip(self.knn_index, self.knn_weight)):
            w[e, idx] = ws
            s[e, idx] = True
        return w, s

    def with_k(self, k: int) -> "SimilarityModel":
        idx, ws = knn_lists(self.weights, k)
        return SimilarityModel(self.orientation, self.metric, k, self.min_overlap,
                               self.weights, idx, ws)


def build_similarity_model(matrix: RatingsMatrix, orientation: str, metric: str,
                           k: int = 50, min_overlap: int | None = None) -> SimilarityModel:
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if min_overlap is None:
        min_overlap = default_min_overlap(metric)
    w = pairwise_weights(matrix, orientation, metric, min_overlap)
    w.setflags(write=False)
    idx, ws = knn_lists(w, k)
    return SimilarityModel(orientation, metric, k, min_overlap, w, idx, ws)


def corated_means(matrix: RatingsMatrix, orientation: str = "user_user") -> np.ndarray:
    """``out[a, c]``: mean of c's ratings over the coordinates c shares with a."""
    x, b = _oriented(matrix, orientation)
    with np.errstate(invalid="ignore", divide="ignore"):
        return (b @ x.T) / (b @ b.T)


# ---------------------------------------------------------------------------
# text persistence
# ---------------------------------------------------------------------------

SIM_MAGIC = "simmodel"
SIM_VERSION = "v1"


def write_similarity(model: SimilarityModel, fh) -> None:
    fh.write(f"{SIM_MAGIC} {SIM_VERSION} {model.orientation} {model.metric} {model.k}\n")
    rows, cols = np.nonzero(np.triu(~np.isnan(model.weights), 1))
    for a, b in zip(rows.tolist(), cols.tolist()):
        fh.write(f"{a} {b} {model.weights[a, b]:.17g}\n")


def read_similarity(lines, size: int) -> SimilarityModel:
    """Parse the text form produced by :func:`write_similarity`.

    ``lines`` is an iterator of text lines; ``size`` the entity count.
    """
    from cfkit.errors import ModelCorruptError, ModelVersionError

    header = next(iter(lines), "").split()
    if len(header) != 5 or header[0] != SIM_MAGIC:
        raise ModelCorruptError("missing simmodel header")
    if header[1] != SIM_VERSION:
        raise ModelVersionError(f"unsupported simmodel version {header[1]}")
    orientation, metric, k = header[2], header[3], int(header[4])
    _check_orientation(orientation)
    w = np.full((size, size), np.nan)
    for line in lines:
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 3:
            raise ModelCorruptError(f"bad simmodel pair line {line!r}")
        a, b, v = int(parts[0]), int(parts[1]), float(parts[2])
        w[a, b] = w[b, a] = v
    w.setflags(write=False)
    idx, ws = knn_lists(w, k)
    return SimilarityModel(orientation, metric, k, None, w, idx, ws)
