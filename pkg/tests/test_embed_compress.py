"""Truncated SVD: optimality, determinism, and the error identity."""
import numpy as np
import pytest

from distillab.embed_compress import frobenius_error, reconstruct, svd_factor, svd_reduce
from distillab.errors import ConfigurationError


def test_rank_one_matrix_exact():
    M = np.array([[2.0, 0.0], [0.0, 0.0]])
    err = frobenius_error(M, reconstruct(M, 1))
    assert err == pytest.approx(0.0, abs=1e-12)


def test_identity_error_is_one():
    M = np.eye(2)
    err = frobenius_error(M, reconstruct(M, 1))
    assert err == pytest.approx(1.0, abs=1e-9)


def test_frobenius_error_basics():
    M = np.zeros((3, 3))
    assert frobenius_error(M, M) == 0.0
    M_hat = M.copy()
    M_hat[1, 2] = 3.0
    assert frobenius_error(M, M_hat) == pytest.approx(3.0)


def test_singular_values_match_lapack():
    rng = np.random.default_rng(0)
    for _ in range(5):
        M = rng.normal(size=(20, 7))
        sigmas, V = svd_factor(M)
        expected = np.linalg.svd(M, compute_uv=False)
        np.testing.assert_allclose(sigmas, expected, atol=1e-9)
        np.testing.assert_allclose(V.T @ V, np.eye(7), atol=1e-9)


def test_reduce_beats_random_projections():
    rng = np.random.default_rng(1)
    M = rng.normal(size=(50, 16))
    E = 8
    best = frobenius_error(M, reconstruct(M, E))
    for _ in range(100):
        raw = rng.normal(size=(16, E))
        Q, _ = np.linalg.qr(raw)
        err = frobenius_error(M, (M @ Q) @ Q.T)
        assert best <= err + 1e-9


def test_error_matches_discarded_singular_values():
    rng = np.random.default_rng(2)
    M = rng.normal(size=(30, 10))
    sigmas, _ = svd_factor(M)
    for E in (1, 4, 9):
        err = frobenius_error(M, reconstruct(M, E))
        expected = np.sqrt((sigmas[E:] ** 2).sum())
        assert err == pytest.approx(expected, abs=1e-8)


def test_error_non_increasing_in_e():
    rng = np.random.default_rng(3)
    M = rng.normal(size=(25, 8))
    errors = [frobenius_error(M, reconstruct(M, E)) for E in range(1, 9)]
    assert all(a >= b - 1e-12 for a, b in zip(errors, errors[1:]))
    assert errors[-1] <= 1e-8  # E = rank keeps everything


def test_reduce_deterministic_sign_convention():
    rng = np.random.default_rng(4)
    M = rng.normal(size=(12, 5))
    a = svd_reduce(M, 3)
    b = svd_reduce(M.copy(), 3)
    np.testing.assert_array_equal(a, b)
    _, V = svd_factor(M)
    for j in range(V.shape[1]):
        k = np.argmax(np.abs(V[:, j]))
        assert V[k, j] > 0


def test_reduce_shape_and_range_checks():
    M = np.zeros((4, 3))
    assert svd_reduce(np.eye(4), 2).shape == (4, 2)
    with pytest.raises(ConfigurationError):
        svd_reduce(M, 0)
    with pytest.raises(ConfigurationError):
        svd_reduce(M, 4)
    with pytest.raises(ConfigurationError):
        frobenius_error(np.zeros((2, 2)), np.zeros((3, 2)))


def test_reduce_preserves_gram_at_full_rank():
    rng = np.random.default_rng(5)
    M = rng.normal(size=(9, 4))
    R = svd_reduce(M, 4)
    np.testing.assert_allclose(R @ R.T, M @ M.T, atol=1e-9)
