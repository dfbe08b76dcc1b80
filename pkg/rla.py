#!/usr/bin/env python3
"""
Randomized PCA of the spectrogram dataset for Eigenspec.
Mean-centering, Gaussian sketching, QR range finding, a small dense SVD and
back-projection yield the eigen-spectrograms used as the feature basis.
"""

import logging
import time
from typing import Optional

import numpy as np

from errors import InvalidArgumentError, InvalidDatasetError, InvalidRankError, ShapeError
from models import ClassLabel, DatasetMatrix, EigenBasis, FeatureMatrix, RsvdConfig

logger = logging.getLogger(__name__)


def mean_center(X: DatasetMatrix | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (B, s) with s the row-wise mean and B = X - s 1^T."""
    data = X.data if isinstance(X, DatasetMatrix) else np.asarray(X, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] < 2:
        raise InvalidDatasetError("Mean-centering needs at least two columns")
    mean = data.mean(axis=1)
    return data - mean[:, None], mean


def center_with(X: DatasetMatrix | np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Center new columns with a previously computed (training) mean."""
    data = X.data if isinstance(X, DatasetMatrix) else np.asarray(X, dtype=np.float64)
    if data.shape[0] != mean.shape[0]:
        raise ShapeError(
            f"Data has {data.shape[0]} rows but the mean has {mean.shape[0]}"
        )
    return data - mean[:, None]


def _orthonormalize(M: np.ndarray) -> np.ndarray:
    Q, _ = np.linalg.qr(M, mode="reduced")
    return Q


def _fix_signs(U: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip each u_j (and v_j) so its largest-magnitude entry is positive."""
    if U.shape[1] == 0:
        return U, V
    pivots = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivots, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def rsvd(
    B: np.ndarray, cfg: RsvdConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Randomized SVD returning the leading (U n x r, sigma r, V m x r).

    The sketch Z = B P uses a Gaussian P with r + p columns; q power
    iterations re-orthonormalize between every multiplication.
    """
    n, m = B.shape
    r, p = cfg.target_rank, cfg.oversampling
    if r > min(n, m) or r + p > min(n, m):
        raise InvalidRankError(
            f"rank {r} + oversampling {p} exceeds min(n, m) = {min(n, m)}"
        )

    rng = np.random.default_rng(cfg.rng_seed)
    P = rng.standard_normal((m, r + p))

    Q = _orthonormalize(B @ P)
    for _ in range(cfg.power_iterations):
        W = _orthonormalize(B.T @ Q)
        Q = _orthonormalize(B @ W)

    Y = Q.T @ B
    U_y, sigma, Vt = np.linalg.svd(Y, full_matrices=False)
    U = Q @ U_y

    U, V = _fix_signs(U[:, :r], Vt[:r].T)
    logger.debug(
        f"rSVD {n}x{m}: rank {r}, oversampling {p}, power iterations "
        f"{cfg.power_iterations}, sigma_1={sigma[0] if sigma.size else 0.0:.4g}"
    )
    return U, sigma[:r], V


def deterministic_svd(
    B: np.ndarray, rank: Optional[int] = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin LAPACK SVD with the same sign convention as rsvd."""
    U, sigma, Vt = np.linalg.svd(B, full_matrices=False)
    if rank is not None:
        if rank > sigma.size:
            raise InvalidRankError(f"rank {rank} exceeds min(n, m) = {sigma.size}")
        U, sigma, Vt = U[:, :rank], sigma[:rank], Vt[:rank]
    U, V = _fix_signs(U, Vt.T)
    return U, sigma, V


def eigenproblem_check(
    B: np.ndarray, U: np.ndarray, sigma: np.ndarray
) -> Optional[float]:
    """Max over modes of ||B (B^T u_j) - sigma_j^2 u_j|| / sigma_j^2.

    Modes with zero singular value are skipped; returns None when none remain.
    """
    if sigma.size == 0 or sigma[0] <= 0:
        return None

    keep = sigma > sigma[0] * 1e-12
    if not np.any(keep):
        return None

    U_k, s2 = U[:, keep], sigma[keep] ** 2
    residual = B @ (B.T @ U_k) - U_k * s2
    return float(np.max(np.linalg.norm(residual, axis=0) / s2))


def truncate_basis(
    U: np.ndarray, sigma: np.ndarray, k: int, mean_image: np.ndarray
) -> EigenBasis:
    """Keep the first k eigen-spectrograms."""
    if not 1 <= k <= U.shape[1]:
        raise InvalidArgumentError(f"k={k} must lie in [1, {U.shape[1]}]")
    return EigenBasis(
        mean_image=np.asarray(mean_image, dtype=np.float64),
        modes=np.ascontiguousarray(U[:, :k]),
        singular_values=np.asarray(sigma[:k], dtype=np.float64),
    )


def fit_basis(
    X: DatasetMatrix, cfg: RsvdConfig, solver: str = "randomized"
) -> tuple[EigenBasis, np.ndarray, dict[str, Optional[float]]]:
    """Mean-center, factorize and truncate; returns (basis, B, diagnostics)."""
    B, mean = mean_center(X)
    start = time.perf_counter()
    if solver == "randomized":
        U, sigma, _ = rsvd(B, cfg)
    elif solver == "deterministic":
        U, sigma, _ = deterministic_svd(B, cfg.target_rank)
    else:
        raise InvalidArgumentError(f"Unknown solver {solver!r}")
    elapsed_ms = (time.perf_counter() - start) * 1000.0

    basis = truncate_basis(U, sigma, cfg.retained_components, mean)
    residual = eigenproblem_check(B, basis.modes, basis.singular_values)
    diagnostics: dict[str, Optional[float]] = {
        "factorization_ms": round(elapsed_ms, 3),
        "eigen_residual": residual,
    }
    logger.info(
        f"{solver} SVD of {B.shape[0]}x{B.shape[1]} kept {basis.k} modes, "
        f"eigen residual {residual}"
    )
    return basis, B, diagnostics


def project_features(
    B: np.ndarray, basis: EigenBasis, labels: Optional[list[ClassLabel]] = None
) -> FeatureMatrix:
    """F = B^T U_k; row i holds the coordinates t_i of column b_i."""
    B = np.asarray(B, dtype=np.float64)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[0] != basis.n_pixels:
        raise ShapeError(
            f"Columns have length {B.shape[0]}, the basis expects {basis.n_pixels}"
        )
    return FeatureMatrix(features=B.T @ basis.modes, labels=list(labels or []))


def reconstruct(features: np.ndarray, basis: EigenBasis) -> np.ndarray:
    """b_hat = U_k t^T for each feature row (columns of the result)."""
    return basis.modes @ np.atleast_2d(features).T


def reconstruction_error(B: np.ndarray, U: np.ndarray, k: int) -> float:
    """Frobenius error of projecting B onto the first k columns of U."""
    U_k = U[:, :k]
    return float(np.linalg.norm(B - U_k @ (U_k.T @ B)))


def compare_solvers(B: np.ndarray, cfg: RsvdConfig) -> dict[str, float]:
    """Wall-clock milliseconds of the randomized and deterministic paths."""
    timings: dict[str, float] = {}
    start = time.perf_counter()
    rsvd(B, cfg)
    timings["randomized_ms"] = (time.perf_counter() - start) * 1000.0
    start = time.perf_counter()
    deterministic_svd(B, cfg.target_rank)
    timings["deterministic_ms"] = (time.perf_counter() - start) * 1000.0
    return timings
