#!/usr/bin/env python3
"""
Exception hierarchy for Eigenspec.
Every error carries the CLI exit code it maps to.
"""

from typing import Optional


class EigenspecError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class ConfigError(EigenspecError, ValueError):
    """Invalid configuration or argument."""

    exit_code = 2


class InvalidArgumentError(ConfigError):
    """An argument violates its documented range or invariant."""


class InvalidRankError(ConfigError):
    """Requested rank does not fit the matrix dimensions."""


class DataError(EigenspecError):
    """Input data cannot support the requested operation."""

    exit_code = 3


class EmptyDatasetError(DataError):
    """Not enough samples to form a single chunk or image."""


class InvalidDatasetError(DataError):
    """Dataset layout is unusable (empty class, class below minimum)."""


class ShapeError(DataError):
    """Array dimensions do not match."""


class UndefinedSnrError(DataError):
    """SNR is undefined for a zero-power signal."""


class UndefinedInterpretationError(DataError):
    """Interpretation coefficients are undefined for this sample."""


class InvalidFoldError(DataError):
    """A class has fewer samples than the requested fold count."""


class DegenerateProblemError(DataError):
    """Binary training set contains a single class."""


class ArtifactFormatError(DataError):
    """A signal, matrix or model file is missing metadata or corrupt."""


class ConvergenceError(EigenspecError):
    """SMO did not reach the KKT tolerance within the iteration cap."""

    exit_code = 4

    def __init__(
        self, message: str, kkt_gap: float, learner_index: Optional[int] = None
    ):
        super().__init__(message)
        self.kkt_gap = kkt_gap
        self.learner_index = learner_index
