"""Latent factor models trained by gradient methods.

* MF / regularized SVD: SGD on the squared error with separate L2
  penalties on user and item factors (the PMF MAP objective when the
  two penalties differ).
* NMF: Lee-Seung style multiplicative updates restricted to observed
  ratings, with an L2 penalty scaled by the entity's rating count.
* EMF: MF plus a penalty pulling ``P_u`` toward ``Q_i`` in proportion to
  the neighborhood explainability weight ``W[u, i]``.

Per-example objective minimized by SGD (MF is the ``lambda_expl = 0`` case)::

    0.5 * e**2 + 0.5*lp*|P_u|**2 + 0.5*lq*|Q_i|**2 + 0.5*lx*W_ui*|P_u - Q_i|**2
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from numba import njit

from cfkit.errors import DomainError, TrainingError
from cfkit.ratings import RATING_MAX, RATING_MIN, NormalizationState, RatingsMatrix, center_by_user
from cfkit.similarity import SimilarityModel

log = logging.getLogger(__name__)

NMF_EPS = 1e-12
RATING_VALUES = (1.0, 2.0, 3.0, 4.0, 5.0)


@dataclass(frozen=True)
class TrainConfig:
    k: int = 10
    alpha: float = 0.01
    lambda_p: float = 0.02
    lambda_q: float = 0.02
    beta: float = 0.02
    lambda_expl: float = 0.1
    epochs: int = 10
    seed: int = 0
    init_scale: float = 0.1

    def __post_init__(self):
        if self.k < 1 or self.epochs < 1:
            raise DomainError("k and epochs must be >= 1")
        for name in ("alpha", "lambda_p", "lambda_q", "beta", "lambda_expl", "init_scale"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise DomainError(f"{name} must be finite and >= 0, got {v}")

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


@dataclass
class FactorModel:
    P: np.ndarray
    Q: np.ndarray
    normalization: NormalizationState = field(default_factory=NormalizationState)
    kind: str = "mf"
    history: list = field(default_factory=list, repr=False)   # train MAE per epoch

    @property
    def k(self) -> int:
        return self.P.shape[1]

    @property
    def m(self) -> int:
        return self.P.shape[0]

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def predict(self, u, i) -> float:
        return predict_factor(self, u, i)

    def predict_many(self, users, items) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        raw = np.einsum("ij,ij->i", self.P[users], self.Q[items])
        return np.clip(self.normalization.invert(users, raw), RATING_MIN, RATING_MAX)

    def user_scores(self, u) -> np.ndarray:
        raw = self.Q @ self.P[u]
        return np.clip(raw + self.normalization.offsets(u), RATING_MIN, RATING_MAX)


def predict_factor(model: FactorModel, u: int, i: int) -> float:
    if not (0 <= u < model.m and 0 <= i < model.n):
        raise DomainError(f"(user, item) index ({u}, {i}) out of range for {model.m}x{model.n}")
    raw = float(model.P[u] @ model.Q[i]) + float(model.normalization.offsets(u))
    return min(max(raw, RATING_MIN), RATING_MAX)


# ---------------------------------------------------------------------------
# SGD (MF, PMF, EMF)
# ---------------------------------------------------------------------------

def example_objective(p, q, r, lambda_p, lambda_q, lambda_expl=0.0, w=0.0) -> float:
    e = r - p @ q
    d = p - q
    return 0.5 * (e * e + lambda_p * (p @ p) + lambda_q * (q @ q) + lambda_expl * w * (d @ d))


def example_gradient(p, q, r, lambda_p, lambda_q, lambda_expl=0.0, w=0.0):
    """Gradient of :func:`example_objective` with respect to (p, q)."""
    e = r - p @ q
    pull = lambda_expl * w * (p - q)
    return -e * q + lambda_p * p + pull, -e * p + lambda_q * q - pull


@njit(cache=True)
def _sgd_epoch(P, Q, users, items, ratings, weights, order, alpha, lam_p, lam_q, lam_x):
    k = P.shape[1]
    for t in range(order.shape[0]):
        e = order[t]
        u = users[e]
        i = items[e]
        dot = 0.0
        for l in range(k):
            dot += P[u, l] * Q[i, l]
        err = ratings[e] - dot
        w = weights[e]
        # simultaneous update: both sides read the pre-step factors
        for l in range(k):
            p = P[u, l]
            q = Q[i, l]
            pull = lam_x * w * (p - q)
            P[u, l] = p + alpha * (err * q - lam_p * p - pull)
            Q[i, l] = q + alpha * (err * p - lam_q * q + pull)


def sgd_step(p, q, r, alpha, lambda_p, lambda_q, lambda_expl=0.0, w=0.0):
    """One update of a single (P_u, Q_i) pair through the training kernel."""
    P = np.array(p, dtype=np.float64, ndmin=2)
    Q = np.array(q, dtype=np.float64, ndmin=2)
    zero = np.zeros(1, dtype=np.int64)
    _sgd_epoch(P, Q, zero, zero, np.array([float(r)]), np.array([float(w)]), zero,
               float(alpha), float(lambda_p), float(lambda_q), float(lambda_expl))
    return P[0], Q[0]


def _train_mae(model: FactorModel, train: RatingsMatrix) -> float:
    users, items, values = train.entries()
    return float(np.mean(np.abs(model.predict_many(users, items) - values)))


def _init_uniform(rng, shape, low, high):
    return rng.uniform(low, high, size=shape)


def _run_sgd(train, cfg, normalize, weights, lam_p, lam_q, lam_x, kind):
    rng = np.random.default_rng(cfg.seed)
    P = _init_uniform(rng, (train.m, cfg.k), 0.0, cfg.init_scale)
    Q = _init_uniform(rng, (train.n, cfg.k), 0.0, cfg.init_scale)
    if normalize:
        fit_on, norm = center_by_user(train)
    else:
        fit_on, norm = train, NormalizationState()
    users, items, values = fit_on.entries()
    users = np.ascontiguousarray(users)
    items = np.ascontiguousarray(items)
    values = np.ascontiguousarray(values)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    model = FactorModel(P, Q, norm, kind)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(values.size)
        _sgd_epoch(P, Q, users, items, values, weights, order,
                   cfg.alpha, lam_p, lam_q, lam_x)
        if not (np.isfinite(P).all() and np.isfinite(Q).all()):
            raise TrainingError("factors diverged to non-finite values", epoch=epoch)
        model.history.append(_train_mae(model, train))
        log.debug("%s epoch %d train MAE %.4f", kind, epoch, model.history[-1])
    return model


def train_mf(train: RatingsMatrix, cfg: TrainConfig = TrainConfig(), normalize: bool = False) -> FactorModel:
    """SGD matrix factorization; ``normalize`` trains on user-centered ratings."""
    zeros = np.zeros(train.nnz)
    return _run_sgd(train, cfg, normalize, zeros, cfg.lambda_p, cfg.lambda_q, 0.0, "mf")


def train_emf(train: RatingsMatrix, cfg: TrainConfig, W: "ExplainabilityWeights",
              normalize: bool = False) -> FactorModel:
    if W.matrix.shape != train.shape:
        raise DomainError("explainability weights were built for a different matrix")
    users, items, _ = train.entries()
    weights = np.asarray(W.matrix[users, items]).ravel()
    return _run_sgd(train, cfg, normalize, weights, cfg.beta, cfg.beta, cfg.lambda_expl, "emf")


# ---------------------------------------------------------------------------
# NMF
# ---------------------------------------------------------------------------

def _fitted(R: sp.csr_matrix, P, Q) -> sp.csr_matrix:
    rows = np.repeat(np.arange(R.shape[0]), np.diff(R.indptr))
    data = np.einsum("ij,ij->i", P[rows], Q[R.indices])
    return sp.csr_matrix((data, R.indices, R.indptr), shape=R.shape)


def nmf_user_sweep(R, P, Q, lambda_p, counts):
    fitted = _fitted(R, P, Q)
    num = R @ Q
    den = fitted @ Q + lambda_p * counts[:, None] * P + NMF_EPS
    return P * (num / den)


def nmf_item_sweep(R, P, Q, lambda_q, counts):
    fitted = _fitted(R, P, Q)
    num = R.T @ P
    den = fitted.T @ P + lambda_q * counts[:, None] * Q + NMF_EPS
    return Q * (num / den)


def nmf_objective(train: RatingsMatrix, P, Q, lambda_p=0.0, lambda_q=0.0) -> float:
    users, items, values = train.entries()
    e = values - np.einsum("ij,ij->i", P[users], Q[items])
    return float(0.5 * (e @ e) + 0.5 * lambda_p * np.sum(P * P) + 0.5 * lambda_q * np.sum(Q * Q))


def train_nmf(train: RatingsMatrix, cfg: TrainConfig = TrainConfig(), normalize: bool = False,
              init=None, callback=None) -> FactorModel:
    """Multiplicative-update NMF on raw (non-negative) ratings.

    Each epoch updates every user factor, then recomputes the fitted values
    and updates every item factor. ``callback(epoch, P, Q)`` runs after each
    epoch.
    """
    if normalize:
        raise DomainError("NMF cannot be trained on normalized (signed) ratings")
    if np.any(train.entries()[2] < 0):
        raise DomainError("NMF requires non-negative ratings")
    rng = np.random.default_rng(cfg.seed)
    if init is None:
        P = NMF_EPS + (1.0 - NMF_EPS) * (1.0 - rng.random((train.m, cfg.k)))
        Q = NMF_EPS + (1.0 - NMF_EPS) * (1.0 - rng.random((train.n, cfg.k)))
    else:
        P, Q = (np.array(a, dtype=np.float64) for a in init)
    R = train.csr
    ucount = train.user_counts.astype(np.float64)
    icount = train.item_counts.astype(np.float64)
    model = FactorModel(P, Q, NormalizationState(), "nmf")
    for epoch in range(1, cfg.epochs + 1):
        model.P = nmf_user_sweep(R, model.P, model.Q, cfg.lambda_p, ucount)
        model.Q = nmf_item_sweep(R, model.P, model.Q, cfg.lambda_q, icount)
        if not (np.isfinite(model.P).all() and np.isfinite(model.Q).all()):
            raise TrainingError("factors became non-finite", epoch=epoch)
        model.history.append(_train_mae(model, train))
        if callback is not None:
            callback(epoch, model.P, model.Q)
    return model


# ---------------------------------------------------------------------------
# explainability weights
# ---------------------------------------------------------------------------

@dataclass
class ExplainabilityWeights:
    matrix: sp.csr_matrix          # W[u, i]; only entries above theta are stored
    theta: float
    neighbor_k: int
    style: str
    rating_values: tuple = RATING_VALUES

    def get(self, u, i) -> float:
        return float(self.matrix[u, i])


def _neighbor_adjacency(sims: SimilarityModel, neighbor_k: int) -> sp.csr_matrix:
    rows, cols = [], []
    for e, idx in enumerate(sims.knn_index):
        idx = idx[:neighbor_k]
        rows.append(np.full(idx.size, e))
        cols.append(idx)
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(sims.size, sims.size))


def explainability_matrix(train: RatingsMatrix, sims: SimilarityModel, style: str = "user_based",
                          neighbor_k: int = 50, rating_values=RATING_VALUES) -> np.ndarray:
    """Dense expected neighbor rating for every (user, item) cell.

    user_based: mean over u's neighbors of their rating on i, counting an
    unrated neighbor as contributing nothing. item_based: mean over the
    neighbors of i of u's rating on them.
    """
    expected = {"user_based": "user_user", "item_based": "item_item"}
    if style not in expected:
        raise DomainError(f"style must be user_based or item_based, got {style!r}")
    if sims.orientation != expected[style]:
        raise DomainError(f"{style} explanations need a {expected[style]} similarity model")
    if neighbor_k < 1:
        raise DomainError("neighbor_k must be >= 1")
    adj = _neighbor_adjacency(sims, neighbor_k)
    sizes = np.asarray(adj.sum(axis=1)).ravel()
    R = train.csr
    expl = np.zeros(train.shape)
    for x in rating_values:
        hits = (R == x).astype(np.float64)
        if style == "user_based":
            expl += x * (adj @ hits).toarray()
        else:
            expl += x * (hits @ adj.T).toarray()
    with np.errstate(invalid="ignore", divide="ignore"):
        if style == "user_based":
            expl = np.where(sizes[:, None] > 0, expl / sizes[:, None], 0.0)
        else:
            expl = np.where(sizes[None, :] > 0, expl / sizes[None, :], 0.0)
    return expl


def explainability_scores(train: RatingsMatrix, sims: SimilarityModel, style: str = "user_based",
                          theta: float = 0.01, neighbor_k: int = 50) -> ExplainabilityWeights:
    if theta < 0:
        raise DomainError("theta must be >= 0")
    expl = explainability_matrix(train, sims, style, neighbor_k)
    W = sp.csr_matrix(np.where(expl > theta, expl, 0.0))
    W.eliminate_zeros()
    return ExplainabilityWeights(W, float(theta), int(neighbor_k), style)
