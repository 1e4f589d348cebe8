"""Plain-text model files.

Layout (one record per line, floats as 17-significant-digit decimals)::

    cfmodel v1 <kind> <k> <m> <n> <normalization>
    meta <key>=<value> ...
    users <m>            followed by m raw user ids
    items <n>            followed by n raw item ids
    train <nnz>          followed by "u i rating timestamp" (dense indices)
    means <m>            user means (normalized models only)
    P <rows> <cols>      factor rows (factor models)
    Q <rows> <cols>
    sigma <k>            singular values (svd only)
    sim <pairs>          simmodel block (knn models only)
    end
"""

from __future__ import annotations

from dataclasses import dataclass, field
from urllib.parse import quote, unquote

import numpy as np

from cfkit.errors import DomainError, ModelCorruptError, ModelVersionError
from cfkit.factorization import FactorModel
from cfkit.models import MODEL_KINDS, FactorRecommender, KnnRecommender
from cfkit.ratings import NormalizationState, RatingsMatrix
from cfkit.similarity import read_similarity, write_similarity
from cfkit.svd import SvdModel

MAGIC = "cfmodel"
VERSION = "v1"


@dataclass
class SavedModel:
    """A trained recommender with its training matrix and provenance metadata."""
    kind: str
    recommender: KnnRecommender | FactorRecommender
    meta: dict = field(default_factory=dict)

    @property
    def train(self) -> RatingsMatrix:
        return self.recommender.train

    def predict_many(self, users, items):
        return self.recommender.predict_many(users, items)

    def recommend(self, u, n):
        return self.recommender.recommend(u, n)


def _f(x) -> str:
    return f"{x:.17g}"


def _write_block(fh, tag, arr):
    arr = np.atleast_2d(arr)
    fh.write(f"{tag} {arr.shape[0]} {arr.shape[1]}\n")
    for row in arr:
        fh.write(" ".join(_f(x) for x in row) + "\n")


def _dimensions(saved: SavedModel):
    rec = saved.recommender
    train = rec.train
    norm = "none"
    k = 0
    if isinstance(rec, KnnRecommender):
        k = rec.sims.k
    else:
        norm = rec.model.normalization.kind
        k = rec.model.k
    return k, train.m, train.n, norm


def save_model(saved: SavedModel, path) -> None:
    if saved.kind not in MODEL_KINDS:
        raise DomainError(f"unknown model kind {saved.kind!r}")
    k, m, n, norm = _dimensions(saved)
    train = saved.train
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{MAGIC} {VERSION} {saved.kind} {k} {m} {n} {norm}\n")
        fh.write("meta " + " ".join(f"{key}={quote(str(saved.meta[key]))}" for key in sorted(saved.meta)) + "\n")
        fh.write(f"users {m}\n")
        fh.writelines(f"{u}\n" for u in train.user_ids)
        fh.write(f"items {n}\n")
        fh.writelines(f"{i}\n" for i in train.item_ids)
        users, items, values = train.entries()
        stamps = train.timestamps()
        fh.write(f"train {train.nnz}\n")
        for u, i, r, t in zip(users.tolist(), items.tolist(), values.tolist(), stamps.tolist()):
            fh.write(f"{u} {i} {_f(r)} {t}\n")
        rec = saved.recommender
        if isinstance(rec, KnnRecommender):
            pairs = int(np.count_nonzero(np.triu(~np.isnan(rec.sims.weights), 1)))
            fh.write(f"sim {pairs}\n")
            write_similarity(rec.sims, fh)
        else:
            model = rec.model
            if model.normalization.kind != "none":
                _write_block(fh, "means", model.normalization.user_means[None, :])
            if isinstance(model, SvdModel):
                _write_block(fh, "P", model.user_factors)
                _write_block(fh, "Q", model.item_factors)
                _write_block(fh, "sigma", model.singular_values[None, :])
            else:
                _write_block(fh, "P", model.P)
                _write_block(fh, "Q", model.Q)
        fh.write("end\n")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def line(self) -> tuple[str, int]:
        if self.pos >= len(self.data):
            raise ModelCorruptError("unexpected end of file", offset=self.pos)
        start = self.pos
        end = self.data.find(b"\n", start)
        if end < 0:
            raise ModelCorruptError("truncated line", offset=start)
        self.pos = end + 1
        try:
            return self.data[start:end].decode("utf-8"), start
        except UnicodeDecodeError:
            raise ModelCorruptError("invalid UTF-8", offset=start) from None

    def tagged(self, tag, ncount=1):
        text, off = self.line()
        parts = text.split()
        if len(parts) != ncount + 1 or parts[0] != tag:
            raise ModelCorruptError(f"expected {tag!r} record, got {text[:40]!r}", offset=off)
        try:
            return [int(p) for p in parts[1:]]
        except ValueError:
            raise ModelCorruptError(f"bad {tag} counts", offset=off) from None

    def block(self, tag):
        rows, cols = self.tagged(tag, 2)
        out = np.empty((rows, cols))
        for r in range(rows):
            text, off = self.line()
            vals = text.split()
            if len(vals) != cols:
                raise ModelCorruptError(f"{tag} row {r} has {len(vals)} values, expected {cols}",
                                        offset=off)
            try:
                out[r] = [float(v) for v in vals]
            except ValueError:
                raise ModelCorruptError(f"bad number in {tag} row {r}", offset=off) from None
        return out


def _ids(reader, tag, count):
    (got,) = reader.tagged(tag)
    if got != count:
        raise ModelCorruptError(f"{tag} count {got} does not match header {count}", offset=reader.pos)
    out = []
    for _ in range(count):
        text, off = reader.line()
        try:
            out.append(int(text))
        except ValueError:
            raise ModelCorruptError(f"bad id {text!r}", offset=off) from None
    return out


def _meta_value(raw):
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


def load_model(path) -> SavedModel:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())
    text, off = reader.line()
    head = text.split()
    if not head or head[0] != MAGIC:
        raise ModelCorruptError("not a cfmodel file", offset=off)
    if len(head) > 1 and head[1] != VERSION:
        raise ModelVersionError(f"unsupported model format version {head[1]!r}")
    if len(head) != 7:
        raise ModelCorruptError("malformed header", offset=off)
    kind, norm = head[2], head[6]
    if kind not in MODEL_KINDS:
        raise ModelCorruptError(f"unknown model kind {kind!r}", offset=off)
    try:
        k, m, n = int(head[3]), int(head[4]), int(head[5])
    except ValueError:
        raise ModelCorruptError("bad header dimensions", offset=off) from None

    text, off = reader.line()
    if not text.startswith("meta"):
        raise ModelCorruptError("missing meta record", offset=off)
    meta = {}
    for item in text.split()[1:]:
        key, _, raw = item.partition("=")
        meta[key] = _meta_value(unquote(raw))

    user_ids = _ids(reader, "users", m)
    item_ids = _ids(reader, "items", n)
    (nnz,) = reader.tagged("train")
    users = np.empty(nnz, dtype=np.int64)
    items = np.empty(nnz, dtype=np.int64)
    values = np.empty(nnz)
    stamps = np.empty(nnz, dtype=np.int64)
    for e in range(nnz):
        text, off = reader.line()
        parts = text.split()
        try:
            users[e], items[e], values[e], stamps[e] = int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])
        except (ValueError, IndexError):
            raise ModelCorruptError(f"bad train record {text[:40]!r}", offset=off) from None
    train = RatingsMatrix(users, items, values, user_ids, item_ids, stamps)

    if kind in ("user-knn", "item-knn"):
        (pairs,) = reader.tagged("sim")
        lines = [reader.line()[0] for _ in range(pairs + 1)]
        size = m if kind == "user-knn" else n
        sims = read_similarity(iter(lines), size)
        if "min_overlap" in meta:
            sims.min_overlap = meta["min_overlap"]
        rec = KnnRecommender(kind, train, sims)
    else:
        state = NormalizationState()
        if norm != "none":
            state = NormalizationState(norm, reader.block("means")[0])
        P = reader.block("P")
        Q = reader.block("Q")
        if kind == "svd":
            sigma = reader.block("sigma")[0]
            model = SvdModel(P, Q, sigma, state)
        else:
            model = FactorModel(P, Q, state, kind)
        if model.k != k:
            raise ModelCorruptError(f"factor width {model.k} does not match header k={k}",
                                    offset=reader.pos)
        rec = FactorRecommender(train, model)
    text, off = reader.line()
    if text != "end":
        raise ModelCorruptError("missing end marker", offset=off)
    return SavedModel(kind, rec, meta)
