import itertools
from typing import Optional

import numpy as np
import pytest

import svm
from errors import ConvergenceError, DegenerateProblemError, InvalidFoldError
from models import ClassLabel, Coding, KernelKind, KernelSpec
from svm import (
    KernelRows,
    SmoSolver,
    accuracy,
    coding_matrix,
    confusion_counts,
    cross_validate,
    decision_function,
    ecoc_decision_values,
    ecoc_losses,
    ecoc_predict,
    ecoc_predict_many,
    ecoc_train,
    kernel_eval,
    kernel_matrix,
    kkt_certificate,
    solve_dual,
    train_binary,
)

QUADRATIC = KernelSpec()
LINEAR = KernelSpec(kind=KernelKind.LINEAR)


def labels_of(codes: list[str]) -> list[ClassLabel]:
    return [ClassLabel.parse(code) for code in codes]


@pytest.fixture
def blobs() -> tuple[np.ndarray, list[ClassLabel]]:
    """Three well separated Gaussian blobs, 20 points each."""
    rng = np.random.default_rng(0)
    centers = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]])
    F = np.vstack([c + 0.3 * rng.standard_normal((20, 2)) for c in centers])
    return F, labels_of(["B1"] * 20 + ["IR1"] * 20 + ["OR1"] * 20)


def brute_force_dual(
    F: np.ndarray, y: np.ndarray, C: float, kernel: KernelSpec
) -> tuple[np.ndarray, Optional[float]]:
    """Enumerate every {0, free, C} state assignment and return the first
    KKT point: (alpha, bias or None when no multiplier is free)."""
    n = y.size
    Q = np.outer(y, y) * kernel_matrix(F, F, kernel)
    eps = 1e-9
    for states in itertools.product((0, 1, 2), repeat=n):
        states_arr = np.array(states)
        free = np.flatnonzero(states_arr == 1)
        alpha = np.where(states_arr == 2, C, 0.0)
        bias: Optional[float] = None

        if free.size:
            # Q_ff a_f + y_f b = 1 - Q_fC a_C ;  y_f^T a_f = -y_C^T a_C
            size = free.size + 1
            A = np.zeros((size, size))
            rhs = np.zeros(size)
            A[:-1, :-1] = Q[np.ix_(free, free)]
            A[:-1, -1] = y[free]
            A[-1, :-1] = y[free]
            rhs[:-1] = 1.0 - Q[free] @ alpha
            rhs[-1] = -(y @ alpha)
            solution = np.linalg.lstsq(A, rhs, rcond=None)[0]
            if not np.allclose(A @ solution, rhs, atol=1e-9):
                continue
            alpha[free] = solution[:-1]
            bias = float(solution[-1])
            if np.any(alpha[free] <= eps) or np.any(alpha[free] >= C - eps):
                continue
        elif abs(y @ alpha) > eps:
            continue

        g = kernel_matrix(F, F, kernel) @ (alpha * y)
        at_zero, at_cost = states_arr == 0, states_arr == 2
        if bias is None:
            lower = [1 - g[i] if y[i] > 0 else -1 - g[i] for i in range(n)
                     if (at_zero[i] and y[i] > 0) or (at_cost[i] and y[i] < 0)]
            upper = [1 - g[i] if y[i] > 0 else -1 - g[i] for i in range(n)
                     if (at_zero[i] and y[i] < 0) or (at_cost[i] and y[i] > 0)]
            low = max(lower, default=-np.inf)
            high = min(upper, default=np.inf)
            if low <= high + eps:
                return alpha, None
            continue

        margin = y * (g + bias)
        if np.all(margin[at_zero] >= 1 - eps) and np.all(margin[at_cost] <= 1 + eps):
            return alpha, bias
    raise AssertionError("no KKT point found")


def test_quadratic_kernel_value():
    """K(x, z) = (x.z + 1)^2."""
    assert kernel_eval(np.array([1.0, 2.0]), np.array([3.0, 4.0]), QUADRATIC) == 144.0
    assert kernel_eval(np.array([1.0, 2.0]), np.array([3.0, 4.0]), LINEAR) == 11.0


@pytest.mark.parametrize("kernel", [QUADRATIC, LINEAR])
def test_gram_matrix_is_symmetric_psd(kernel: KernelSpec):
    X = np.random.default_rng(4).standard_normal((10, 3))
    gram = kernel_matrix(X, X, kernel)

    np.testing.assert_allclose(gram, gram.T)
    assert np.linalg.eigvalsh(gram).min() >= -1e-10


def test_kernel_rows_on_demand_match_cached():
    """Rows computed above the cache limit equal the cached Gram rows."""
    rng = np.random.default_rng(1)
    X = rng.standard_normal((12, 3))
    y = np.where(rng.random(12) > 0.5, 1.0, -1.0)
    cached = KernelRows(X, y, QUADRATIC, cache_limit=100)
    on_demand = KernelRows(X, y, QUADRATIC, cache_limit=5, lru_rows=3)

    np.testing.assert_allclose(cached.diag, on_demand.diag)
    for i in [0, 5, 11, 5, 2, 0]:
        np.testing.assert_allclose(cached.row(i), on_demand.row(i))


def test_linear_four_points():
    """Points -2, -1 | 1, 2 give the boundary x = 0 with margin vectors +-1."""
    F = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([-1.0, -1.0, 1.0, 1.0])
    model = train_binary(F, y, C=100.0, kernel=LINEAR, tol=1e-8)

    values = decision_function(model, np.array([[0.0], [1.0], [-1.0], [2.0]]))
    np.testing.assert_allclose(values, [0.0, 1.0, -1.0, 2.0], atol=1e-6)
    assert model.support_vectors.shape[0] == 2
    np.testing.assert_allclose(np.abs(model.dual_coeffs), [0.5, 0.5], atol=1e-6)


def test_xor_needs_the_quadratic_kernel():
    F = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    y = np.array([1.0, 1.0, -1.0, -1.0])
    model = train_binary(F, y, C=10.0, kernel=QUADRATIC)

    assert np.all(np.sign(decision_function(model, F)) == y)


def test_duplicate_points_are_harmless():
    F = np.array([[0.0, 0.0], [0.0, 0.0], [3.0, 3.0], [3.0, 3.0], [3.0, 3.0]])
    y = np.array([-1.0, -1.0, 1.0, 1.0, 1.0])
    model = train_binary(F, y, C=1e3, kernel=QUADRATIC)

    assert np.all(np.sign(decision_function(model, F)) == y)


def test_single_class_is_degenerate():
    with pytest.raises(DegenerateProblemError):
        train_binary(np.ones((3, 2)), np.ones(3))


def test_training_validates_inputs_once(mocker):
    validate = mocker.spy(svm, "_validate_binary")
    F = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0], [3.0, 1.0]])
    train_binary(F, np.array([-1.0, -1.0, 1.0, 1.0]), kernel=LINEAR)
    assert validate.call_count == 1


def test_iteration_cap_raises_convergence_error():
    F = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    y = np.array([1.0, 1.0, -1.0, -1.0])
    with pytest.raises(ConvergenceError) as info:
        solve_dual(F, y, C=10.0, kernel=QUADRATIC, max_passes=1)
    assert info.value.kkt_gap > 1e-3


@pytest.mark.parametrize("instance", range(50))
def test_smo_matches_brute_force_dual(instance: int):
    """Decision values agree with an exhaustive dual solution within 1e-4."""
    rng = np.random.default_rng(1000 + instance)
    n = int(rng.integers(2, 9))
    dim = int(rng.integers(1, 4))
    F = rng.uniform(-1.0, 1.0, size=(n, dim))
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    rng.shuffle(y)
    C = 1.0

    result = solve_dual(F, y, C=C, kernel=QUADRATIC, tol=1e-9)
    oracle_alpha, oracle_bias = brute_force_dual(F, y, C, QUADRATIC)

    K = kernel_matrix(F, F, QUADRATIC)
    np.testing.assert_allclose(K @ (result.alpha * y), K @ (oracle_alpha * y), atol=1e-4)
    if oracle_bias is not None:
        np.testing.assert_allclose(
            K @ (result.alpha * y) + result.bias,
            K @ (oracle_alpha * y) + oracle_bias,
            atol=1e-4,
        )


@pytest.mark.parametrize("instance", range(20))
def test_kkt_certificate_and_feasibility(instance: int):
    """Converged solutions satisfy the KKT conditions at tol 1e-3."""
    rng = np.random.default_rng(instance)
    F = rng.standard_normal((30, 3))
    y = np.where(F[:, 0] + 0.5 * rng.standard_normal(30) > 0, 1.0, -1.0)
    if np.unique(y).size < 2:
        y[0] = -y[0]
    C = 1.0

    result = solve_dual(F, y, C=C, kernel=QUADRATIC)
    decision = kernel_matrix(F, F, QUADRATIC) @ (result.alpha * y) + result.bias

    assert kkt_certificate(result.alpha, y, decision, C, tol=1e-3 + 1e-9)
    assert abs(result.alpha @ y) <= 1e-9
    assert np.all(result.alpha >= 0) and np.all(result.alpha <= C)
    assert result.kkt_gap <= 1e-3


def test_solver_handles_on_demand_rows():
    """The uncached kernel path reaches the same solution."""
    rng = np.random.default_rng(3)
    F = rng.standard_normal((25, 2))
    y = np.where(F[:, 0] * F[:, 1] > 0, 1.0, -1.0)
    cached = SmoSolver(KernelRows(F, y, QUADRATIC), y, 1.0, tol=1e-8).solve()
    uncached = SmoSolver(KernelRows(F, y, QUADRATIC, cache_limit=0), y, 1.0, tol=1e-8).solve()

    K = kernel_matrix(F, F, QUADRATIC)
    np.testing.assert_allclose(K @ (cached.alpha * y), K @ (uncached.alpha * y), atol=1e-5)


def test_coding_matrix_shapes():
    """12 classes give 66 one-vs-one or 12 one-vs-all learners; 2 classes give 1."""
    ovo = coding_matrix(12, Coding.ONE_VS_ONE)
    assert ovo.shape == (12, 66)
    assert np.all((ovo == 1).sum(axis=0) == 1) and np.all((ovo == -1).sum(axis=0) == 1)
    assert coding_matrix(12, Coding.ONE_VS_ALL).shape == (12, 12)
    assert coding_matrix(2, Coding.ONE_VS_ONE).shape == (2, 1)
    assert coding_matrix(2, Coding.ONE_VS_ALL).shape == (2, 1)
    for M in (ovo, coding_matrix(5, Coding.ONE_VS_ALL)):
        assert len({tuple(row) for row in M}) == M.shape[0]


@pytest.mark.parametrize("coding", [Coding.ONE_VS_ONE, Coding.ONE_VS_ALL])
def test_ecoc_separates_blobs(blobs, coding: Coding):
    F, labels = blobs
    model = ecoc_train(F, labels, C=1.0, kernel=QUADRATIC, coding=coding)

    assert len(model.learners) == 3
    assert accuracy(labels, ecoc_predict_many(model, F)) == 1.0

    label, losses = ecoc_predict(model, np.array([5.0, 0.0]))
    assert str(label) == "IR1"
    assert losses[1] < losses[0] and losses[1] < losses[2]


def test_ecoc_losses_match_direct_formula(blobs):
    """Decoding equals a brute-force evaluation of the normalized hinge loss."""
    F, labels = blobs
    model = ecoc_train(F, labels)
    probe = np.random.default_rng(5).uniform(-1, 6, size=(10, 2))
    scores = ecoc_decision_values(model, probe)
    M = model.coding_matrix

    for s, losses in zip(scores, ecoc_losses(model, probe)):
        for c in range(M.shape[0]):
            cols = np.flatnonzero(M[c])
            expected = np.mean([max(0.0, 1.0 - M[c, col] * s[col]) for col in cols])
            assert losses[c] == pytest.approx(expected)


def test_two_class_ecoc_follows_binary_sign(blobs):
    F, labels = blobs
    F, labels = F[:40], labels[:40]
    model = ecoc_train(F, labels)
    probe = np.random.default_rng(6).uniform(-2, 7, size=(30, 2))
    scores = decision_function(model.learners[0], probe)

    expected = [model.classes[0] if s > 0 else model.classes[1] for s in scores]
    assert ecoc_predict_many(model, probe) == expected


def test_prediction_is_order_independent(blobs):
    F, labels = blobs
    model = ecoc_train(F, labels)
    probe = np.random.default_rng(7).uniform(-1, 6, size=(25, 2))
    order = np.random.default_rng(8).permutation(25)

    forward = ecoc_predict_many(model, probe)
    shuffled = ecoc_predict_many(model, probe[order])
    assert shuffled == [forward[i] for i in order]


def test_standardized_model_predicts_the_same_blobs(blobs):
    F, labels = blobs
    model = ecoc_train(F * 100.0, labels, standardize=True)

    assert model.feature_mean is not None and model.feature_scale is not None
    assert accuracy(labels, ecoc_predict_many(model, F * 100.0)) == 1.0


def test_convergence_error_names_the_learner(blobs):
    F, labels = blobs
    with pytest.raises(ConvergenceError) as info:
        ecoc_train(F, labels, max_passes=1)
    assert info.value.learner_index == 0


def test_confusion_counts_trace_is_accuracy():
    true = labels_of(["B1", "B1", "IR1", "OR1", "OR1"])
    predicted = labels_of(["B1", "IR1", "IR1", "OR1", "B1"])
    classes = labels_of(["B1", "IR1", "OR1"])
    counts = confusion_counts(true, predicted, classes)

    np.testing.assert_array_equal(counts, [[1, 1, 0], [0, 1, 0], [1, 0, 1]])
    assert np.trace(counts) / counts.sum() == accuracy(true, predicted) == 0.6
    assert counts.sum(axis=1).tolist() == [2, 1, 2]


def test_cross_validation_on_separable_data(blobs):
    F, labels = blobs
    result = cross_validate(F, labels, folds=5, seed=1)

    assert result.fold_accuracies == [1.0] * 5
    assert result.mean_accuracy == 1.0


def test_cross_validation_is_seeded(blobs):
    F, labels = blobs
    rng = np.random.default_rng(2)
    noisy = F + 2.0 * rng.standard_normal(F.shape)
    first = cross_validate(noisy, labels, folds=3, seed=4)
    second = cross_validate(noisy, labels, folds=3, seed=4)
    assert first.fold_accuracies == second.fold_accuracies


def test_cross_validation_needs_enough_samples_per_class(blobs):
    F, labels = blobs
    with pytest.raises(InvalidFoldError):
        cross_validate(F[:44], labels[:44], folds=5)
