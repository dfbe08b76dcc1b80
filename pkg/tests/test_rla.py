import numpy as np
import pytest
from scipy.linalg import subspace_angles

from errors import InvalidArgumentError, InvalidDatasetError, InvalidRankError, ShapeError
from models import ClassLabel, DatasetMatrix, RsvdConfig
from rla import (
    center_with,
    compare_solvers,
    deterministic_svd,
    eigenproblem_check,
    fit_basis,
    mean_center,
    project_features,
    reconstruct,
    reconstruction_error,
    rsvd,
    truncate_basis,
)


def planted_matrix(seed: int, n: int = 200, m: int = 120, decay: float = 0.7) -> np.ndarray:
    """Random matrix with singular values decay**i."""
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((n, m)))
    V, _ = np.linalg.qr(rng.standard_normal((m, m)))
    return (U * decay ** np.arange(m)) @ V.T


@pytest.fixture
def dataset() -> DatasetMatrix:
    """Six planted components of decaying strength plus small noise."""
    rng = np.random.default_rng(42)
    strengths = np.array([10.0, 8.0, 6.0, 4.0, 3.0, 2.0])[:, None]
    scores = strengths * rng.standard_normal((6, 30))
    data = 1.0 + 0.1 * rng.standard_normal((60, 6)) @ scores
    data += 0.01 * rng.standard_normal((60, 30))
    labels = [ClassLabel.parse("B1")] * 15 + [ClassLabel.parse("IR1")] * 15
    return DatasetMatrix(data=data, labels=labels)


@pytest.mark.parametrize("seed", range(20))
def test_rsvd_matches_deterministic_oracle(seed: int):
    """Top-4 singular values within 1% and subspace angles below 0.05 rad."""
    A = planted_matrix(seed)
    cfg = RsvdConfig(
        target_rank=4, oversampling=10, power_iterations=2, retained_components=4, rng_seed=seed
    )
    U, sigma, V = rsvd(A, cfg)
    U_ref, sigma_ref, _ = deterministic_svd(A, 4)

    np.testing.assert_allclose(sigma, sigma_ref, rtol=0.01)
    assert np.max(subspace_angles(U, U_ref)) < 0.05
    assert U.shape == (200, 4) and V.shape == (120, 4)


def test_rsvd_of_rank_one_matrix():
    """B = a b^T has sigma_1 = |a| |b| and nothing else."""
    rng = np.random.default_rng(8)
    a, b = rng.standard_normal(50), rng.standard_normal(30)
    _, sigma, _ = rsvd(np.outer(a, b), RsvdConfig(target_rank=4, retained_components=1))

    assert sigma[0] == pytest.approx(np.linalg.norm(a) * np.linalg.norm(b), rel=1e-12)
    assert np.all(sigma[1:] < 1e-10 * sigma[0])


def test_power_iterations_solve_the_eigenproblem():
    """With q = 2 the top modes of a fast-decay matrix satisfy B B^T u = sigma^2 u."""
    A = planted_matrix(3, n=200, m=100, decay=0.5)
    cfg = RsvdConfig(
        target_rank=4, oversampling=10, power_iterations=2, retained_components=4, rng_seed=3
    )
    U, sigma, _ = rsvd(A, cfg)
    residual = eigenproblem_check(A, U, sigma)
    assert residual is not None and residual < 1e-3


def test_rsvd_columns_are_orthonormal():
    A = planted_matrix(0)
    U, _, V = rsvd(A, RsvdConfig(target_rank=10, retained_components=4, rng_seed=1))
    np.testing.assert_allclose(U.T @ U, np.eye(10), atol=1e-10)
    np.testing.assert_allclose(V.T @ V, np.eye(10), atol=1e-10)


def test_rsvd_sign_convention():
    """The largest-magnitude entry of every mode is positive."""
    U, _, _ = rsvd(planted_matrix(3), RsvdConfig(target_rank=6, retained_components=4))
    pivots = np.argmax(np.abs(U), axis=0)
    assert np.all(U[pivots, np.arange(U.shape[1])] > 0)


def test_rsvd_is_seed_deterministic():
    A = planted_matrix(4, decay=0.95)
    cfg = RsvdConfig(target_rank=8, retained_components=4, rng_seed=99)
    first, _, _ = rsvd(A, cfg)
    second, _, _ = rsvd(A, cfg)
    np.testing.assert_array_equal(first, second)


def test_rank_beyond_matrix_is_rejected():
    """r + p may not exceed min(n, m)."""
    A = np.random.default_rng(0).random((50, 10))
    with pytest.raises(InvalidRankError):
        rsvd(A, RsvdConfig(target_rank=8, oversampling=5, retained_components=4))
    with pytest.raises(InvalidRankError):
        deterministic_svd(A, 11)


def test_retained_components_cannot_exceed_rank():
    with pytest.raises(InvalidArgumentError):
        RsvdConfig(target_rank=3, retained_components=4)


def test_mean_center_zeroes_row_means(dataset: DatasetMatrix):
    B, s = mean_center(dataset)
    np.testing.assert_allclose(B.mean(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(s, dataset.data.mean(axis=1))


def test_mean_center_needs_two_columns():
    with pytest.raises(InvalidDatasetError):
        mean_center(np.ones((5, 1)))


def test_center_with_checks_shape():
    with pytest.raises(ShapeError):
        center_with(np.ones((5, 3)), np.zeros(4))


def test_deterministic_eigen_residual_is_tiny(dataset: DatasetMatrix):
    """Left singular vectors solve B B^T u = sigma^2 u."""
    B, _ = mean_center(dataset)
    U, sigma, _ = deterministic_svd(B, 4)
    residual = eigenproblem_check(B, U, sigma)
    assert residual is not None and residual < 1e-10


def test_eigen_check_skips_null_modes():
    """A zero matrix has no modes to check."""
    assert eigenproblem_check(np.zeros((4, 3)), np.eye(4)[:, :2], np.zeros(2)) is None


def test_projection_and_reconstruction(dataset: DatasetMatrix):
    """F = B^T U_k, and reconstructing all modes of a full basis restores B."""
    B, s = mean_center(dataset)
    U, sigma, _ = deterministic_svd(B)
    basis = truncate_basis(U, sigma, U.shape[1], s)
    features = project_features(B, basis, dataset.labels)

    np.testing.assert_allclose(features.features, B.T @ U)
    np.testing.assert_allclose(reconstruct(features.features, basis), B, atol=1e-10)
    assert features.labels == dataset.labels


def test_projection_checks_pixel_count(dataset: DatasetMatrix):
    B, s = mean_center(dataset)
    U, sigma, _ = deterministic_svd(B, 4)
    basis = truncate_basis(U, sigma, 4, s)
    with pytest.raises(ShapeError):
        project_features(np.ones((59, 3)), basis)


def test_reconstruction_error_shrinks_with_k(dataset: DatasetMatrix):
    B, _ = mean_center(dataset)
    U, _, _ = deterministic_svd(B)
    errors = [reconstruction_error(B, U, k) for k in range(1, 11)]
    assert all(a >= b - 1e-12 for a, b in zip(errors, errors[1:]))


def test_truncate_rejects_bad_k():
    U = np.eye(5)[:, :3]
    with pytest.raises(InvalidArgumentError):
        truncate_basis(U, np.ones(3), 4, np.zeros(5))
    with pytest.raises(InvalidArgumentError):
        truncate_basis(U, np.ones(3), 0, np.zeros(5))


@pytest.mark.parametrize("solver", ["randomized", "deterministic"])
def test_fit_basis(dataset: DatasetMatrix, solver: str):
    """fit_basis keeps k modes and reports a small eigen residual."""
    cfg = RsvdConfig(target_rank=10, oversampling=5, power_iterations=2, retained_components=4)
    basis, B, diagnostics = fit_basis(dataset, cfg, solver)

    assert basis.k == 4 and basis.n_pixels == 60
    assert np.all(np.diff(basis.singular_values) <= 0)
    assert B.shape == dataset.data.shape
    assert diagnostics["eigen_residual"] is not None
    assert diagnostics["eigen_residual"] < 0.05
    assert diagnostics["factorization_ms"] is not None


def test_fit_basis_rejects_unknown_solver(dataset: DatasetMatrix):
    with pytest.raises(InvalidArgumentError):
        fit_basis(dataset, RsvdConfig(target_rank=4, retained_components=4), "lanczos")


def test_compare_solvers_reports_both_paths():
    timings = compare_solvers(planted_matrix(1), RsvdConfig(target_rank=10, retained_components=4))
    assert set(timings) == {"randomized_ms", "deterministic_ms"}
    assert all(value >= 0 for value in timings.values())
