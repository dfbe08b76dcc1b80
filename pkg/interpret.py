#!/usr/bin/env python3
"""
Interpretation coefficients for Eigenspec.
Gamma is the fraction of a centered spectrogram's energy captured by the
retained eigen-spectrograms; theta_j splits that explained part per mode.
"""

import logging
from collections import defaultdict
from collections.abc import Iterable, Sequence
from typing import Optional

import numpy as np

from errors import ShapeError, UndefinedInterpretationError
from models import ClassLabel, ClassMeanRow, EigenBasis, InterpretationRecord, sorted_labels

logger = logging.getLogger(__name__)


def _feature_row(b_i: np.ndarray, basis: EigenBasis, t_i: Optional[np.ndarray]) -> np.ndarray:
    if b_i.shape[0] != basis.n_pixels:
        raise ShapeError(
            f"Sample has {b_i.shape[0]} pixels, the basis expects {basis.n_pixels}"
        )
    if t_i is None:
        return basis.modes.T @ b_i
    return np.asarray(t_i, dtype=np.float64)


def gamma(
    b_i: np.ndarray, basis: EigenBasis, t_i: Optional[np.ndarray] = None
) -> float:
    """Gamma_i = sum_j F_ij^2 / ||b_i||^2, bounded to [0, 1] by Bessel."""
    b_i = np.asarray(b_i, dtype=np.float64)
    energy = float(b_i @ b_i)
    if energy == 0.0:
        raise UndefinedInterpretationError("Gamma is undefined for a zero-norm sample")
    features = _feature_row(b_i, basis, t_i)
    return min(float(features @ features) / energy, 1.0)


def thetas(
    b_i: np.ndarray, basis: EigenBasis, t_i: Optional[np.ndarray] = None
) -> np.ndarray:
    """theta_j = F_ij^2 / (Gamma_i ||b_i||^2); non-negative and summing to 1."""
    b_i = np.asarray(b_i, dtype=np.float64)
    if float(b_i @ b_i) == 0.0:
        raise UndefinedInterpretationError("Thetas are undefined for a zero-norm sample")
    squared = _feature_row(b_i, basis, t_i) ** 2
    explained = float(squared.sum())
    if explained == 0.0:
        raise UndefinedInterpretationError(
            "Sample is orthogonal to the retained eigen-spectrograms (Gamma = 0)"
        )
    return squared / explained


def interpret_samples(
    B: np.ndarray,
    basis: EigenBasis,
    features: Optional[np.ndarray] = None,
    labels: Optional[Sequence[ClassLabel]] = None,
) -> list[InterpretationRecord]:
    """Vectorized gamma/theta for every column of a centered matrix."""
    if B.shape[0] != basis.n_pixels:
        raise ShapeError(f"Columns have length {B.shape[0]}, expected {basis.n_pixels}")
    F = B.T @ basis.modes if features is None else np.asarray(features)
    energy = np.einsum("ij,ij->j", B, B)
    squared = F**2
    explained = squared.sum(axis=1)

    bad = np.flatnonzero((energy == 0.0) | (explained == 0.0))
    if bad.size:
        raise UndefinedInterpretationError(
            f"{bad.size} sample(s) have undefined interpretation, first index {bad[0]}"
        )

    gammas = np.minimum(explained / energy, 1.0)
    theta_rows = squared / explained[:, None]
    return [
        InterpretationRecord(
            sample_id=i,
            gamma=float(gammas[i]),
            thetas=theta_rows[i],
            label=labels[i] if labels is not None else None,
        )
        for i in range(F.shape[0])
    ]


def class_mean_report(
    records: Iterable[InterpretationRecord],
    n_per_class: int,
    seed: int = 0,
    classes: Optional[Sequence[ClassLabel]] = None,
) -> list[ClassMeanRow]:
    """Per-class mean theta over min(n_per_class, class size) seeded samples.

    Requested classes with no records are skipped with a warning.
    """
    grouped: dict[ClassLabel, list[InterpretationRecord]] = defaultdict(list)
    for record in records:
        if record.label is not None:
            grouped[record.label].append(record)

    wanted = list(classes) if classes is not None else sorted_labels(grouped)
    rng = np.random.default_rng(seed)
    rows: list[ClassMeanRow] = []
    for label in wanted:
        members = grouped.get(label, [])
        if not members:
            logger.warning(f"⚠️  Class {label} has no records; excluded from report")
            continue

        if n_per_class < len(members):
            chosen = rng.choice(len(members), size=n_per_class, replace=False)
            members = [members[i] for i in sorted(chosen)]
        elif n_per_class > len(members):
            logger.warning(
                f"⚠️  Class {label}: requested {n_per_class} samples, "
                f"using all {len(members)}"
            )

        theta_stack = np.stack([record.thetas for record in members])
        rows.append(
            ClassMeanRow(
                label=label,
                mean_thetas=theta_stack.mean(axis=0),
                mean_gamma=float(np.mean([record.gamma for record in members])),
                n_samples=len(members),
            )
        )
    return rows
