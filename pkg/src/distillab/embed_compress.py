"""Truncated-SVD reduction of embedding matrices.

Uses a one-sided Jacobi SVD (the matrices are tall and thin, with a small
column count), which keeps the decomposition deterministic across BLAS
builds. The reduced embedding is U_E * Sigma_E so inner-product scale is
preserved.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

__all__ = ["svd_reduce", "svd_factor", "frobenius_error"]

_JACOBI_TOL = 1e-10
_MAX_SWEEPS = 60


def _jacobi_svd(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (singular values desc, right singular vectors as columns)."""
    A = np.array(M, dtype=np.float64)
    n = A.shape[1]
    V = np.eye(n)
    scale = float(np.linalg.norm(A))
    if scale == 0.0:
        return np.zeros(n), V
    threshold = _JACOBI_TOL * scale * scale
    for _ in range(_MAX_SWEEPS):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[:, p] @ A[:, q]
                if abs(apq) <= threshold:
                    continue
                off = max(off, abs(apq))
                app = A[:, p] @ A[:, p]
                aqq = A[:, q] @ A[:, q]
                tau = (aqq - app) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                if tau == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                Ap = A[:, p].copy()
                A[:, p] = c * Ap - s * A[:, q]
                A[:, q] = s * Ap + c * A[:, q]
                Vp = V[:, p].copy()
                V[:, p] = c * Vp - s * V[:, q]
                V[:, q] = s * Vp + c * V[:, q]
        if off <= threshold:
            break
    sigmas = np.sqrt(np.sum(A * A, axis=0))
    order = np.argsort(-sigmas, kind="stable")
    return sigmas[order], V[:, order]


def svd_factor(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Singular values (descending) and right singular vectors of M.

    Sign convention: the largest-magnitude entry of each right singular
    vector is made positive, so the factorization is unique up to
    degenerate singular values.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ConfigurationError("expected a 2-D matrix")
    sigmas, V = _jacobi_svd(M)
    for j in range(V.shape[1]):
        k = int(np.argmax(np.abs(V[:, j])))
        if V[k, j] < 0:
            V[:, j] = -V[:, j]
    return sigmas, V


def svd_reduce(M: np.ndarray, E: int) -> np.ndarray:
    """Best rank-E row embedding of M: the V x E matrix U_E * Sigma_E.

    Reconstructing with the discarded right singular directions,
    (U_E Sigma_E) V_E^T, is the Frobenius-optimal rank-E approximation.
    """
    M = np.asarray(M, dtype=np.float64)
    if not (1 <= E <= min(M.shape)):
        raise ConfigurationError(
            f"target dimension {E} out of range for a {M.shape[0]}x{M.shape[1]} matrix"
        )
    _, V = svd_factor(M)
    return M @ V[:, :E]


def reconstruct(M: np.ndarray, E: int) -> np.ndarray:
    """Rank-E reconstruction (U_E Sigma_E) V_E^T of M."""
    M = np.asarray(M, dtype=np.float64)
    _, V = svd_factor(M)
    VE = V[:, :E]
    return (M @ VE) @ VE.T


def frobenius_error(M: np.ndarray, M_hat: np.ndarray) -> float:
    M = np.asarray(M, dtype=np.float64)
    M_hat = np.asarray(M_hat, dtype=np.float64)
    if M.shape != M_hat.shape:
        raise ConfigurationError(f"shape mismatch {M.shape} vs {M_hat.shape}")
    return float(np.sqrt(np.sum((M - M_hat) ** 2)))
