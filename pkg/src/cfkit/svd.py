"""Truncated SVD recommender: center, impute, factor, truncate, predict.

The decomposition is computed with a one-sided (Hestenes) Jacobi sweep.
Matrices whose short side exceeds ``DIRECT_LIMIT`` are first reduced by
seeded block subspace iteration to a ``k + oversample`` dimensional range
basis, and the Jacobi step runs on the projected matrix.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from cfkit.errors import DomainError
from cfkit.ratings import (
    RATING_MAX,
    RATING_MIN,
    NormalizationState,
    RatingsMatrix,
    center_by_user,
    impute_item_means,
)

log = logging.getLogger(__name__)

DIRECT_LIMIT = 64


def _complete_basis(U, s):
    """Replace columns belonging to zero singular values by an orthonormal completion."""
    m, r = U.shape
    good = s > 0
    basis = [U[:, j] for j in range(r) if good[j]]
    out = U.copy()
    probe = iter(np.eye(m))
    for j in np.flatnonzero(~good):
        for e in probe:
            v = e.copy()
            for b in basis:
                v -= (b @ v) * b
            for b in basis:              # second pass for numerical orthogonality
                v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                v /= nv
                basis.append(v)
                out[:, j] = v
                break
    return out


def jacobi_svd(A, tol=1e-15, max_sweeps=100):
    """Thin SVD ``A = U diag(s) V^T`` by one-sided Jacobi rotations.

    Returns ``U`` (m x r), ``s`` (r, descending) and ``V`` (n x r) with
    ``r = min(m, n)``.
    """
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    if m < n:
        V, s, U = jacobi_svd(A.T, tol, max_sweeps)
        return U, s, V
    W = A.copy()
    V = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                wp, wq = W[:, p], W[:, q]
                a = wp @ wp
                b = wq @ wq
                g = wp @ wq
                if abs(g) <= tol * math.sqrt(a * b) or g == 0.0:
                    continue
                rotated = True
                zeta = (b - a) / (2.0 * g)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                sn = c * t
                W[:, p], W[:, q] = c * wp - sn * wq, sn * wp + c * wq
                vp, vq = V[:, p].copy(), V[:, q]
                V[:, p], V[:, q] = c * vp - sn * vq, sn * vp + c * vq
        if not rotated:
            break
    s = np.linalg.norm(W, axis=0)
    order = np.argsort(-s, kind="stable")
    s, W, V = s[order], W[:, order], V[:, order]
    scale = s[0] if s.size and s[0] > 0 else 1.0
    s = np.where(s > n * 1e-15 * scale, s, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        U = np.where(s > 0, W / s, 0.0)
    return _complete_basis(U, s), s, V


def _fix_signs(U, V):
    """Make the largest-magnitude entry of each left vector positive."""
    pick = np.argmax(np.abs(U), axis=0)
    sign = np.sign(U[pick, np.arange(U.shape[1])])
    sign[sign == 0] = 1.0
    return U * sign, V * sign


@dataclass
class SvdModel:
    user_factors: np.ndarray          # m x k, U_k * sqrt(s)
    item_factors: np.ndarray          # k x n, sqrt(s) * V_k^T
    singular_values: np.ndarray
    normalization: NormalizationState = field(default_factory=NormalizationState)
    left: np.ndarray | None = field(default=None, repr=False)    # U_k
    right: np.ndarray | None = field(default=None, repr=False)   # V_k

    @property
    def k(self) -> int:
        return self.singular_values.size

    @property
    def m(self) -> int:
        return self.user_factors.shape[0]

    @property
    def n(self) -> int:
        return self.item_factors.shape[1]

    def reconstruct(self) -> np.ndarray:
        """Rank-k approximation in the normalized space (no offsets, no clamping)."""
        return self.user_factors @ self.item_factors

    def predict_many(self, users, items) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        raw = np.einsum("ij,ji->i", self.user_factors[users], self.item_factors[:, items])
        return np.clip(self.normalization.invert(users, raw), RATING_MIN, RATING_MAX)

    def user_scores(self, u) -> np.ndarray:
        raw = self.user_factors[u] @ self.item_factors
        return np.clip(raw + self.normalization.offsets(u), RATING_MIN, RATING_MAX)


def _subspace_svd(A, k, seed, oversample, tol, max_iter):
    m, n = A.shape
    ell = min(k + oversample, min(m, n))
    rng = np.random.default_rng(seed)
    Qm, _ = np.linalg.qr(A @ rng.standard_normal((n, ell)))
    prev = None
    for it in range(max_iter):
        Qn, _ = np.linalg.qr(A.T @ Qm)
        Qm, _ = np.linalg.qr(A @ Qn)
        B = Qm.T @ A
        Ub, s, V = jacobi_svd(B)
        if prev is not None and np.all(np.abs(s[:k] - prev) <= tol * max(s[0], 1e-300)):
            break
        prev = s[:k].copy()
    else:
        log.warning("subspace iteration stopped after %d iterations before convergence", max_iter)
    return Qm @ Ub, s, V


def truncated_svd(dense, k: int, seed: int = 0, oversample: int = 10,
                  tol: float = 1e-13, max_iter: int = 500) -> SvdModel:
    """Top-k singular triplets of a dense matrix, packed as an :class:`SvdModel`."""
    A = np.asarray(dense, dtype=np.float64)
    if A.ndim != 2:
        raise DomainError("truncated_svd needs a 2-d matrix")
    if not 1 <= k <= min(A.shape):
        raise DomainError(f"k must lie in [1, {min(A.shape)}], got {k}")
    if not np.isfinite(A).all():
        raise DomainError("matrix must be fully observed (impute missing cells first)")
    if min(A.shape) <= DIRECT_LIMIT:
        U, s, V = jacobi_svd(A)
    else:
        U, s, V = _subspace_svd(A, k, seed, oversample, tol, max_iter)
    U, s, V = U[:, :k], s[:k], V[:, :k]
    U, V = _fix_signs(U, V)
    root = np.sqrt(s)
    return SvdModel(U * root, (V * root).T, s, NormalizationState(), U, V)


def svd_fit(train: RatingsMatrix, k: int, seed: int = 0) -> SvdModel:
    """Center by user, fill gaps with the centered item means, then factor."""
    centered, state = center_by_user(train)
    model = truncated_svd(impute_item_means(centered), k, seed=seed)
    model.normalization = state
    return model


def svd_predict(model: SvdModel, u: int, i: int) -> float:
    if not (0 <= u < model.m and 0 <= i < model.n):
        raise DomainError(f"(user, item) index ({u}, {i}) out of range for {model.m}x{model.n}")
    raw = float(model.user_factors[u] @ model.item_factors[:, i])
    raw += float(model.normalization.offsets(u))
    return min(max(raw, RATING_MIN), RATING_MAX)
