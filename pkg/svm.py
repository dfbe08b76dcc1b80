#!/usr/bin/env python3
"""
Kernel SVM classification for Eigenspec.
Soft-margin binary SVM trained by an SMO dual solver (working set of two,
second-order pair selection), an ECOC multiclass wrapper with loss-based
decoding, and stratified k-fold cross-validation.
"""

import logging
from collections import OrderedDict
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.metrics import confusion_matrix as sk_confusion_matrix
from sklearn.model_selection import StratifiedKFold

from config import settings
from errors import (
    ConvergenceError,
    DegenerateProblemError,
    InvalidArgumentError,
    InvalidFoldError,
    ShapeError,
)
from models import (
    BinarySvmModel,
    ClassLabel,
    Coding,
    CrossValidationResult,
    EcocSvmModel,
    KernelKind,
    KernelSpec,
    sorted_labels,
)
from utils import sklearn_seed

logger = logging.getLogger(__name__)

TAU = 1e-12


def kernel_eval(x: np.ndarray, z: np.ndarray, spec: KernelSpec) -> float:
    """K(x, z) = (x.z + offset)^degree, or x.z for the linear kernel."""
    x, z = np.asarray(x, dtype=np.float64), np.asarray(z, dtype=np.float64)
    if x.shape != z.shape:
        raise ShapeError(f"Kernel arguments differ in shape: {x.shape} vs {z.shape}")
    dot = float(x @ z)
    if spec.kind is KernelKind.LINEAR:
        return dot
    return float((dot + spec.offset) ** spec.degree)


def kernel_matrix(X: np.ndarray, Z: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Pairwise kernel values between the rows of X and the rows of Z."""
    X, Z = np.atleast_2d(X), np.atleast_2d(Z)
    if X.shape[1] != Z.shape[1]:
        raise ShapeError(f"Feature dimensions differ: {X.shape[1]} vs {Z.shape[1]}")
    dots = X @ Z.T
    if spec.kind is KernelKind.LINEAR:
        return dots
    return (dots + spec.offset) ** spec.degree


class KernelRows:
    """Rows of Q_ij = y_i y_j K(x_i, x_j): cached in full below the limit,
    computed on demand (with a bounded LRU) above it."""

    def __init__(
        self,
        X: np.ndarray,
        y: np.ndarray,
        spec: KernelSpec,
        cache_limit: int = settings.SVM_GRAM_CACHE_LIMIT,
        lru_rows: int = 1024,
    ):
        self.X = X
        self.y = y
        self.spec = spec
        self.lru_rows = lru_rows
        self._lru: OrderedDict[int, np.ndarray] = OrderedDict()
        self._full: Optional[np.ndarray] = None
        if X.shape[0] <= cache_limit:
            self._full = np.outer(y, y) * kernel_matrix(X, X, spec)
            self.diag = np.diag(self._full).copy()
        else:
            norms = np.einsum("ij,ij->i", X, X)
            self.diag = norms if spec.kind is KernelKind.LINEAR else (
                (norms + spec.offset) ** spec.degree
            )

    def row(self, i: int) -> np.ndarray:
        if self._full is not None:
            return self._full[i]
        cached = self._lru.get(i)
        if cached is not None:
            self._lru.move_to_end(i)
            return cached
        values = self.y[i] * self.y * kernel_matrix(self.X[i], self.X, self.spec)[0]
        self._lru[i] = values
        if len(self._lru) > self.lru_rows:
            self._lru.popitem(last=False)
        return values


@dataclass
class SmoResult:
    """Dual solution of one binary problem."""

    alpha: np.ndarray
    bias: float
    kkt_gap: float
    n_pair_updates: int


class SmoSolver:
    """SMO for  min 1/2 a^T Q a - e^T a  s.t.  y^T a = 0, 0 <= a_i <= C."""

    def __init__(
        self,
        rows: KernelRows,
        y: np.ndarray,
        cost: float,
        tol: float = settings.SVM_TOL,
        max_pair_updates: int = settings.SVM_MAX_PAIR_UPDATES,
    ):
        self.rows = rows
        self.y = y
        self.cost = cost
        self.tol = tol
        self.max_pair_updates = max_pair_updates

    def _violating_gap(
        self, alpha: np.ndarray, grad: np.ndarray
    ) -> tuple[float, int, float, np.ndarray, np.ndarray]:
        y, C = self.y, self.cost
        values = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        up_values = np.where(up, values, -np.inf)
        i = int(np.argmax(up_values))
        g_max = float(up_values[i])
        g_min = float(np.min(np.where(low, values, np.inf)))
        return g_max - g_min, i, g_max, values, low

    def solve(self) -> SmoResult:
        y, C, rows = self.y, self.cost, self.rows
        n = y.size
        alpha = np.zeros(n)
        grad = -np.ones(n)

        updates = 0
        while True:
            gap, i, g_max, values, low = self._violating_gap(alpha, grad)
            if gap <= self.tol:
                break
            if updates >= self.max_pair_updates:
                raise ConvergenceError(
                    f"SMO stopped after {updates} pair updates with KKT gap "
                    f"{gap:.3g} > tol {self.tol:.3g}",
                    kkt_gap=gap,
                )

            Q_i = rows.row(i)
            # second-order choice of j among violators in the low set
            grad_diff = g_max - values
            candidates = low & (grad_diff > 0)
            quad = rows.diag[i] + rows.diag - 2.0 * y[i] * y * Q_i
            quad = np.where(quad > 0, quad, TAU)
            gain = np.where(candidates, -(grad_diff**2) / quad, np.inf)
            j = int(np.argmin(gain))
            Q_j = rows.row(j)

            old_i, old_j = alpha[i], alpha[j]
            if y[i] != y[j]:
                quad_coef = rows.diag[i] + rows.diag[j] + 2.0 * Q_i[j]
                delta = (-grad[i] - grad[j]) / max(quad_coef, TAU)
                diff = alpha[i] - alpha[j]
                alpha[i] += delta
                alpha[j] += delta
                if diff > 0:
                    if alpha[j] < 0:
                        alpha[j] = 0.0
                        alpha[i] = diff
                elif alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
                if diff > 0:
                    if alpha[i] > C:
                        alpha[i] = C
                        alpha[j] = C - diff
                elif alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
            else:
                quad_coef = rows.diag[i] + rows.diag[j] - 2.0 * Q_i[j]
                delta = (grad[i] - grad[j]) / max(quad_coef, TAU)
                total = alpha[i] + alpha[j]
                alpha[i] -= delta
                alpha[j] += delta
                if total > C:
                    if alpha[i] > C:
                        alpha[i] = C
                        alpha[j] = total - C
                    if alpha[j] > C:
                        alpha[j] = C
                        alpha[i] = total - C
                else:
                    if alpha[j] < 0:
                        alpha[j] = 0.0
                        alpha[i] = total
                    if alpha[i] < 0:
                        alpha[i] = 0.0
                        alpha[j] = total

            grad += Q_i * (alpha[i] - old_i) + Q_j * (alpha[j] - old_j)
            updates += 1

        return SmoResult(
            alpha=alpha,
            bias=self._bias(alpha, grad),
            kkt_gap=max(gap, 0.0),
            n_pair_updates=updates,
        )

    def _bias(self, alpha: np.ndarray, grad: np.ndarray) -> float:
        """Average of -y_i G_i over free vectors, else the midpoint of the
        feasible interval left by the bounded ones."""
        y, C = self.y, self.cost
        values = -y * grad
        free = (alpha > 0) & (alpha < C)
        if np.any(free):
            return float(np.mean(values[free]))

        at_upper = alpha >= C
        at_lower = alpha <= 0
        lower_bounds = values[(at_lower & (y > 0)) | (at_upper & (y < 0))]
        upper_bounds = values[(at_lower & (y < 0)) | (at_upper & (y > 0))]
        lb = float(np.max(lower_bounds)) if lower_bounds.size else -np.inf
        ub = float(np.min(upper_bounds)) if upper_bounds.size else np.inf
        if np.isfinite(lb) and np.isfinite(ub):
            return (lb + ub) / 2.0
        return lb if np.isfinite(lb) else ub


def _validate_binary(F: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    F = np.atleast_2d(np.asarray(F, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if F.shape[0] != y.size:
        raise ShapeError(f"{F.shape[0]} feature rows but {y.size} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise InvalidArgumentError("Binary labels must be +1 or -1")
    if np.unique(y).size < 2:
        raise DegenerateProblemError("Binary training set contains a single class")
    return F, y


def solve_dual(
    F: np.ndarray,
    y: np.ndarray,
    C: float = settings.SVM_COST,
    kernel: KernelSpec = KernelSpec(),
    tol: float = settings.SVM_TOL,
    max_passes: int = settings.SVM_MAX_PAIR_UPDATES,
    gram_cache_limit: int = settings.SVM_GRAM_CACHE_LIMIT,
) -> SmoResult:
    """Run SMO and return the full dual vector."""
    F, y = _validate_binary(F, y)
    return _run_smo(F, y, C, kernel, tol, max_passes, gram_cache_limit)


def _run_smo(
    F: np.ndarray,
    y: np.ndarray,
    C: float,
    kernel: KernelSpec,
    tol: float,
    max_passes: int,
    gram_cache_limit: int,
) -> SmoResult:
    if C <= 0 or tol <= 0:
        raise InvalidArgumentError("C and tol must be positive")
    rows = KernelRows(F, y, kernel, cache_limit=gram_cache_limit)
    return SmoSolver(rows, y, C, tol, max_passes).solve()


def train_binary(
    F: np.ndarray,
    y: np.ndarray,
    C: float = settings.SVM_COST,
    kernel: KernelSpec = KernelSpec(),
    tol: float = settings.SVM_TOL,
    max_passes: int = settings.SVM_MAX_PAIR_UPDATES,
    gram_cache_limit: int = settings.SVM_GRAM_CACHE_LIMIT,
) -> BinarySvmModel:
    """Train a soft-margin kernel SVM on +/-1 labels."""
    F, y = _validate_binary(F, y)
    result = _run_smo(F, y, C, kernel, tol, max_passes, gram_cache_limit)
    support = result.alpha > 0
    return BinarySvmModel(
        support_vectors=F[support].copy(),
        dual_coeffs=result.alpha[support] * y[support],
        bias=result.bias,
        kernel=kernel,
        cost=C,
        kkt_gap=result.kkt_gap,
        n_pair_updates=result.n_pair_updates,
    )


def decision_function(model: BinarySvmModel, X: np.ndarray) -> np.ndarray:
    """f(x) = sum_i alpha_i y_i K(x_i, x) + b for every row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if model.support_vectors.shape[0] == 0:
        return np.full(X.shape[0], model.bias)
    return kernel_matrix(X, model.support_vectors, model.kernel) @ model.dual_coeffs + model.bias


def kkt_certificate(
    alpha: np.ndarray, y: np.ndarray, decision: np.ndarray, C: float, tol: float
) -> bool:
    """Check the soft-margin KKT conditions at tolerance tol."""
    margin = y * decision
    at_zero = alpha <= 0
    at_cost = alpha >= C
    free = ~at_zero & ~at_cost
    return bool(
        np.all(margin[at_zero] >= 1 - tol)
        and np.all(np.abs(margin[free] - 1) <= tol)
        and np.all(margin[at_cost] <= 1 + tol)
    )


def coding_matrix(n_classes: int, coding: Coding) -> np.ndarray:
    """ECOC coding matrix with entries in {-1, 0, +1}, one column per learner."""
    if n_classes < 2:
        raise InvalidArgumentError("ECOC needs at least two classes")
    if coding is Coding.ONE_VS_ALL:
        if n_classes == 2:
            return np.array([[1], [-1]], dtype=np.int8)
        return (2 * np.eye(n_classes, dtype=np.int8) - 1).astype(np.int8)

    pairs = [(a, b) for a in range(n_classes) for b in range(a + 1, n_classes)]
    M = np.zeros((n_classes, len(pairs)), dtype=np.int8)
    for col, (a, b) in enumerate(pairs):
        M[a, col] = 1
        M[b, col] = -1
    return M


def _apply_scaling(model: EcocSvmModel, F: np.ndarray) -> np.ndarray:
    if model.feature_mean is None or model.feature_scale is None:
        return F
    return (F - model.feature_mean) / model.feature_scale


def ecoc_train(
    F: np.ndarray,
    labels: Sequence[ClassLabel],
    C: float = settings.SVM_COST,
    kernel: KernelSpec = KernelSpec(),
    coding: Coding = Coding.ONE_VS_ONE,
    tol: float = settings.SVM_TOL,
    max_passes: int = settings.SVM_MAX_PAIR_UPDATES,
    standardize: bool = False,
    gram_cache_limit: int = settings.SVM_GRAM_CACHE_LIMIT,
) -> EcocSvmModel:
    """Train one binary SVM per coding-matrix column; zero entries exclude a class."""
    F = np.atleast_2d(np.asarray(F, dtype=np.float64))
    if F.shape[0] != len(labels):
        raise ShapeError(f"{F.shape[0]} feature rows but {len(labels)} labels")
    classes = sorted_labels(labels)
    if len(classes) < 2:
        raise InvalidArgumentError("ECOC training needs at least two classes")

    model = EcocSvmModel(
        classes=classes, coding_matrix=coding_matrix(len(classes), coding), learners=[]
    )
    if standardize:
        scale = F.std(axis=0)
        model.feature_mean = F.mean(axis=0)
        model.feature_scale = np.where(scale > 0, scale, 1.0)
    X = _apply_scaling(model, F)

    class_index = {label: idx for idx, label in enumerate(classes)}
    rows = np.array([class_index[label] for label in labels])
    for col in range(model.coding_matrix.shape[1]):
        codes = model.coding_matrix[rows, col]
        members = codes != 0
        try:
            learner = train_binary(
                X[members], codes[members], C, kernel, tol, max_passes, gram_cache_limit
            )
        except ConvergenceError as e:
            raise ConvergenceError(
                f"Learner {col}: {e}", kkt_gap=e.kkt_gap, learner_index=col
            ) from e
        except DegenerateProblemError as e:
            raise DegenerateProblemError(f"Learner {col}: {e}") from e
        model.learners.append(learner)
        logger.debug(
            f"Learner {col + 1}/{model.coding_matrix.shape[1]}: "
            f"{members.sum()} samples, {learner.support_vectors.shape[0]} SVs, "
            f"{learner.n_pair_updates} pair updates"
        )
    return model


def ecoc_decision_values(model: EcocSvmModel, F: np.ndarray) -> np.ndarray:
    """Learner scores, shape (n_samples, n_learners)."""
    X = _apply_scaling(model, np.atleast_2d(np.asarray(F, dtype=np.float64)))
    return np.column_stack([decision_function(learner, X) for learner in model.learners])


def ecoc_losses(model: EcocSvmModel, F: np.ndarray) -> np.ndarray:
    """Row-normalized hinge loss per class, shape (n_samples, n_classes)."""
    scores = ecoc_decision_values(model, F)
    M = model.coding_matrix.astype(np.float64)
    active = M != 0
    hinge = np.maximum(0.0, 1.0 - scores[:, None, :] * M[None, :, :]) * active
    return hinge.sum(axis=2) / active.sum(axis=1)


def ecoc_predict(
    model: EcocSvmModel, x: np.ndarray
) -> tuple[ClassLabel, np.ndarray]:
    """Loss-decoded label of one sample; ties go to the lowest class index."""
    losses = ecoc_losses(model, np.atleast_2d(x))[0]
    return model.classes[int(np.argmin(losses))], losses


def ecoc_predict_many(model: EcocSvmModel, F: np.ndarray) -> list[ClassLabel]:
    """Loss-decoded labels for every row of F."""
    winners = np.argmin(ecoc_losses(model, F), axis=1)
    return [model.classes[int(i)] for i in winners]


def accuracy(true: Sequence[ClassLabel], predicted: Sequence[ClassLabel]) -> float:
    if len(true) != len(predicted) or not true:
        raise ShapeError("Accuracy needs equally long, non-empty label lists")
    return sum(t == p for t, p in zip(true, predicted, strict=True)) / len(true)


def confusion_counts(
    true: Sequence[ClassLabel],
    predicted: Sequence[ClassLabel],
    classes: Sequence[ClassLabel],
) -> np.ndarray:
    """classes x classes counts; rows are true labels, columns predictions."""
    names = [str(label) for label in classes]
    return sk_confusion_matrix(
        [str(label) for label in true], [str(label) for label in predicted], labels=names
    )


def cross_validate(
    F: np.ndarray,
    labels: Sequence[ClassLabel],
    folds: int = settings.SVM_CV_FOLDS,
    seed: int = 0,
    C: float = settings.SVM_COST,
    kernel: KernelSpec = KernelSpec(),
    coding: Coding = Coding.ONE_VS_ONE,
    tol: float = settings.SVM_TOL,
    max_passes: int = settings.SVM_MAX_PAIR_UPDATES,
    standardize: bool = False,
) -> CrossValidationResult:
    """Stratified seeded k-fold accuracy of the ECOC model."""
    if folds < 2:
        raise InvalidArgumentError("Cross-validation needs at least two folds")
    names = np.array([str(label) for label in labels])
    for label in sorted_labels(labels):
        count = int(np.sum(names == str(label)))
        if count < folds:
            raise InvalidFoldError(
                f"Class {label} has {count} samples, fewer than {folds} folds"
            )

    F = np.atleast_2d(np.asarray(F, dtype=np.float64))
    splitter = StratifiedKFold(
        n_splits=folds, shuffle=True, random_state=sklearn_seed(seed)
    )
    accuracies: list[float] = []
    for fold, (train_idx, test_idx) in enumerate(splitter.split(F, names)):
        model = ecoc_train(
            F[train_idx],
            [labels[i] for i in train_idx],
            C,
            kernel,
            coding,
            tol,
            max_passes,
            standardize,
        )
        predicted = ecoc_predict_many(model, F[test_idx])
        fold_accuracy = accuracy([labels[i] for i in test_idx], predicted)
        accuracies.append(fold_accuracy)
        logger.info(f"Fold {fold + 1}/{folds}: accuracy {fold_accuracy:.4f}")
    return CrossValidationResult(fold_accuracies=accuracies)
