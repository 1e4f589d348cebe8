import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfkit.errors import DomainError
from cfkit.ratings import Interaction, build_matrix, center_by_user, impute_item_means
from cfkit.svd import DIRECT_LIMIT, jacobi_svd, svd_fit, svd_predict, truncated_svd


def lapack_rank_k(A, k):
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return (U[:, :k] * s[:k]) @ Vt[:k], s


def test_identity():
    model = truncated_svd(np.eye(3), 3)
    np.testing.assert_allclose(model.singular_values, [1, 1, 1], atol=1e-12)


def test_rank_one():
    a = np.array([1.0, 2.0, 3.0, 4.0])
    b = np.array([2.0, -1.0, 0.5])
    model = truncated_svd(np.outer(a, b), 3)
    assert model.singular_values[0] == pytest.approx(np.linalg.norm(a) * np.linalg.norm(b), rel=1e-12)
    np.testing.assert_allclose(model.singular_values[1:], 0, atol=1e-10)


def test_eckart_young_tail_6x5():
    A = np.random.default_rng(3).standard_normal((6, 5))
    model = truncated_svd(A, 3)
    _, s = lapack_rank_k(A, 3)
    err = np.linalg.norm(A - model.reconstruct()) ** 2
    assert err == pytest.approx(s[3] ** 2 + s[4] ** 2, rel=1e-10)
    np.testing.assert_allclose(model.singular_values, s[:3], rtol=1e-12)


def test_k_out_of_range():
    with pytest.raises(DomainError):
        truncated_svd(np.ones((3, 4)), 4)
    with pytest.raises(DomainError):
        truncated_svd(np.ones((3, 4)), 0)


def test_non_finite_rejected():
    A = np.ones((3, 3))
    A[0, 0] = np.nan
    with pytest.raises(DomainError):
        truncated_svd(A, 1)


def test_all_fours():
    m = build_matrix([Interaction(u, i, 4.0) for u in range(3) for i in range(4)])
    model = svd_fit(m, 2)
    np.testing.assert_allclose(model.singular_values, 0, atol=1e-12)
    assert all(svd_predict(model, u, i) == 4.0 for u in range(3) for i in range(4))


def test_full_rank_dense_reconstruction():
    rng = np.random.default_rng(5)
    vals = rng.integers(1, 6, (4, 5)).astype(float)
    m = build_matrix([Interaction(u, i, vals[u, i]) for u in range(4) for i in range(5)])
    model = svd_fit(m, 4)
    np.testing.assert_allclose(model.predict_many(*np.divmod(np.arange(20), 5)), vals.ravel(), atol=1e-8)


def test_table2_rank2_against_oracle(table2):
    centered, state = center_by_user(table2)
    filled = impute_item_means(centered)
    oracle, _ = lapack_rank_k(filled, 2)
    model = svd_fit(table2, 2)
    u1, i6 = table2.user_of(1), table2.item_of(6)
    expected = np.clip(oracle[u1, i6] + table2.user_means[u1], 1, 5)
    assert svd_predict(model, u1, i6) == pytest.approx(expected, abs=1e-10)
    np.testing.assert_allclose(model.reconstruct(), oracle, atol=1e-10)


def test_sign_convention():
    A = np.random.default_rng(1).standard_normal((7, 4))
    model = truncated_svd(A, 3)
    U = model.left
    pick = np.argmax(np.abs(U), axis=0)
    assert np.all(U[pick, np.arange(3)] > 0)


def test_invalid_predict_index(table2):
    model = svd_fit(table2, 2)
    with pytest.raises(DomainError):
        svd_predict(model, 10, 0)


def test_subspace_path_matches_lapack():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((DIRECT_LIMIT + 30, DIRECT_LIMIT + 10)) @ np.diag(
        np.linspace(3, 0.1, DIRECT_LIMIT + 10))
    model = truncated_svd(A, 5, seed=0)
    _, s = lapack_rank_k(A, 5)
    np.testing.assert_allclose(model.singular_values, s[:5], rtol=1e-9)
    np.testing.assert_allclose(model.left.T @ model.left, np.eye(5), atol=1e-8)
    np.testing.assert_allclose(model.right.T @ model.right, np.eye(5), atol=1e-8)
    again = truncated_svd(A, 5, seed=0)
    np.testing.assert_array_equal(model.user_factors, again.user_factors)


@pytest.mark.property
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 9), n=st.integers(2, 9))
def test_orthonormality_and_oracle(seed, m, n):
    A = np.random.default_rng(seed).standard_normal((m, n))
    U, s, V = jacobi_svd(A)
    r = min(m, n)
    np.testing.assert_allclose(U.T @ U, np.eye(r), atol=1e-8)
    np.testing.assert_allclose(V.T @ V, np.eye(r), atol=1e-8)
    np.testing.assert_allclose(s, np.linalg.svd(A, compute_uv=False), atol=1e-10)
    np.testing.assert_allclose((U * s) @ V.T, A, atol=1e-10)


@pytest.mark.property
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(3, 8), n=st.integers(3, 8))
def test_eckart_young_dominance(seed, m, n):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    for k in range(1, min(m, n) + 1):
        best = np.linalg.norm(A - truncated_svd(A, k).reconstruct())
        for _ in range(20):
            B = rng.standard_normal((m, k)) @ rng.standard_normal((k, n))
            assert best <= np.linalg.norm(A - B) + 1e-12


@pytest.mark.property
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(3, 9), n=st.integers(3, 9))
def test_monotone_truncation(seed, m, n):
    A = np.random.default_rng(seed).standard_normal((m, n))
    errs = [np.linalg.norm(A - truncated_svd(A, k).reconstruct()) for k in range(1, min(m, n) + 1)]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-8
