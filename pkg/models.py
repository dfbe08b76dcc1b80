#!/usr/bin/env python3
"""
Data models and configuration classes for Eigenspec.
Shared data structures used across the application.
"""

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

import numpy as np

from config import settings
from errors import InvalidArgumentError


class FaultType(Enum):
    """Localized bearing fault location."""

    INNER_RACE = "InnerRace"
    OUTER_RACE = "OuterRace"
    ROLLING_ELEMENT = "RollingElement"


class FaultCode(Enum):
    """Alphanumeric class prefix; declaration order is the class order."""

    B = "B"
    IR = "IR"
    OR = "OR"
    NORMAL = "Normal"


FAULT_CODE_FOR_TYPE = {
    FaultType.ROLLING_ELEMENT: FaultCode.B,
    FaultType.INNER_RACE: FaultCode.IR,
    FaultType.OUTER_RACE: FaultCode.OR,
}

_LABEL_PATTERN = re.compile(r"^(Normal|IR|OR|B)([A-Za-z0-9_.-]*)$")


@dataclass(frozen=True)
class ClassLabel:
    """Health-state label such as IR3 or OR014."""

    fault_code: FaultCode
    severity_code: str = ""

    def __str__(self) -> str:
        return f"{self.fault_code.value}{self.severity_code}"

    @classmethod
    def parse(cls, text: str) -> "ClassLabel":
        """Parse the alphanumeric form back into a label."""
        match = _LABEL_PATTERN.match(text.strip())
        if not match:
            raise InvalidArgumentError(f"Unparseable class label: {text!r}")
        return cls(FaultCode(match.group(1)), match.group(2))

    @property
    def sort_key(self) -> tuple[int, str]:
        order = list(FaultCode).index(self.fault_code)
        return order, self.severity_code.zfill(8)


def sorted_labels(labels: Any) -> list[ClassLabel]:
    """Unique labels in canonical class order."""
    return sorted(set(labels), key=lambda label: label.sort_key)


@dataclass(frozen=True)
class BearingSpec:
    """Characteristic fault frequencies as multiples of shaft speed."""

    designation: str
    bpfi_mult: float
    bpfo_mult: float
    bsf_mult: float

    def __post_init__(self) -> None:
        if min(self.bpfi_mult, self.bpfo_mult, self.bsf_mult) <= 0:
            raise InvalidArgumentError(
                f"{self.designation}: fault multiples must be positive"
            )
        if self.bpfi_mult <= self.bpfo_mult:
            raise InvalidArgumentError(
                f"{self.designation}: BPFI multiple must exceed BPFO multiple"
            )


BEARINGS = {
    spec.designation: spec
    for spec in (
        BearingSpec("SKF 22240 CCK/W33", 11.103, 7.897, 2.830),
        BearingSpec("SKF 6205-2RS JEM", 5.415, 3.585, 2.357),
        BearingSpec("SKF 6203-2RS JEM", 4.947, 3.053, 1.994),
    )
}


def get_bearing(designation: str) -> BearingSpec:
    """Look up a catalogue bearing by designation."""
    try:
        return BEARINGS[designation]
    except KeyError:
        known = ", ".join(BEARINGS)
        raise InvalidArgumentError(
            f"Unknown bearing {designation!r}. Known bearings: {known}"
        ) from None


@dataclass
class FaultSimParams:
    """Parameters of the impulse-train fault model."""

    fault_type: FaultType
    amplitude_mean: float = 1.0
    amplitude_jitter_frac: float = settings.SIM_AMPLITUDE_JITTER
    decay_beta: float = settings.SIM_DECAY_BETA
    resonance_fn: float = settings.SIM_RESONANCE_FN
    shaft_speed: float = settings.SIM_SHAFT_SPEED_RPM
    sample_rate: float = settings.SIM_SAMPLE_RATE
    duration: float = (
        settings.SIM_CHUNKS_PER_CLASS * settings.STFT_CHUNK_LEN / settings.SIM_SAMPLE_RATE
    )
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.decay_beta <= 0:
            raise InvalidArgumentError("decay_beta must be positive")
        if self.sample_rate <= 0:
            raise InvalidArgumentError("sample_rate must be positive")
        if self.resonance_fn >= self.sample_rate / 2:
            raise InvalidArgumentError(
                f"Resonance {self.resonance_fn} Hz is not below Nyquist "
                f"({self.sample_rate / 2} Hz)"
            )
        if self.duration <= 0:
            raise InvalidArgumentError("duration must be positive")
        if not 0 <= self.amplitude_jitter_frac < 1:
            raise InvalidArgumentError("amplitude_jitter_frac must lie in [0, 1)")
        if self.shaft_speed <= 0:
            raise InvalidArgumentError("shaft_speed must be positive")


@dataclass
class Signal:
    """Sampled vibration record."""

    samples: np.ndarray
    sample_rate: float
    label: Optional[ClassLabel] = None

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise InvalidArgumentError("Signal samples must be a non-empty 1-D array")
        if self.sample_rate <= 0:
            raise InvalidArgumentError("Signal sample_rate must be positive")


@dataclass(frozen=True)
class StftConfig:
    """STFT framing parameters."""

    window_len: int = settings.STFT_WINDOW_LEN
    overlap_frac: float = settings.STFT_OVERLAP
    chunk_len: int = settings.STFT_CHUNK_LEN
    window: str = "hamming"

    def __post_init__(self) -> None:
        if not 0 <= self.overlap_frac < 1:
            raise InvalidArgumentError("overlap_frac must lie in [0, 1)")
        if not 2 <= self.window_len <= self.chunk_len:
            raise InvalidArgumentError("window_len must lie in [2, chunk_len]")
        hop = self.window_len * (1 - self.overlap_frac)
        if hop < 1 or abs(hop - round(hop)) > 1e-9:
            raise InvalidArgumentError(
                f"Hop {hop} (window_len x (1 - overlap)) must be a positive integer"
            )

    @property
    def hop(self) -> int:
        return int(round(self.window_len * (1 - self.overlap_frac)))


@dataclass
class SpectrogramImage:
    """Grayscale spectrogram image with values in [0, 1]."""

    pixels: np.ndarray
    label: Optional[ClassLabel] = None


@dataclass
class DatasetMatrix:
    """Column-per-sample matrix of flattened images."""

    data: np.ndarray
    labels: list[ClassLabel]
    column_order_seed: int = 0

    def __post_init__(self) -> None:
        if self.data.ndim != 2 or self.data.shape[1] != len(self.labels):
            raise InvalidArgumentError(
                f"Dataset has {self.data.shape} data but {len(self.labels)} labels"
            )

    @property
    def n_pixels(self) -> int:
        return int(self.data.shape[0])

    @property
    def n_samples(self) -> int:
        return int(self.data.shape[1])

    def class_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for label in sorted_labels(self.labels):
            counts[str(label)] = sum(1 for item in self.labels if item == label)
        return counts


@dataclass(frozen=True)
class RsvdConfig:
    """Randomized SVD parameters."""

    target_rank: int = settings.RSVD_RANK
    oversampling: int = settings.RSVD_OVERSAMPLING
    power_iterations: int = settings.RSVD_POWER_ITERATIONS
    retained_components: int = settings.RSVD_COMPONENTS
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.target_rank < 1 or self.retained_components < 1:
            raise InvalidArgumentError("target_rank and retained_components must be >= 1")
        if self.oversampling < 0 or self.power_iterations < 0:
            raise InvalidArgumentError("oversampling and power_iterations must be >= 0")
        if self.retained_components > self.target_rank:
            raise InvalidArgumentError(
                f"retained_components {self.retained_components} exceeds "
                f"target_rank {self.target_rank}"
            )


@dataclass
class EigenBasis:
    """Mean spectrogram and retained eigen-spectrograms."""

    mean_image: np.ndarray
    modes: np.ndarray
    singular_values: np.ndarray

    @property
    def n_pixels(self) -> int:
        return int(self.modes.shape[0])

    @property
    def k(self) -> int:
        return int(self.modes.shape[1])


@dataclass
class FeatureMatrix:
    """Per-sample coordinates in the eigen-spectrogram space."""

    features: np.ndarray
    labels: list[ClassLabel] = field(default_factory=list)


@dataclass
class InterpretationRecord:
    """Explained fraction and interpretation coefficients of one sample."""

    sample_id: int
    gamma: float
    thetas: np.ndarray
    label: Optional[ClassLabel] = None


class KernelKind(Enum):
    LINEAR = "linear"
    POLYNOMIAL = "polynomial"


@dataclass(frozen=True)
class KernelSpec:
    """SVM kernel; the default is the quadratic (x.z + 1)^2."""

    kind: KernelKind = KernelKind.POLYNOMIAL
    degree: int = settings.SVM_KERNEL_DEGREE
    offset: float = settings.SVM_KERNEL_OFFSET

    def __post_init__(self) -> None:
        if self.kind is KernelKind.POLYNOMIAL and self.degree < 1:
            raise InvalidArgumentError("Polynomial degree must be >= 1")
        if self.offset < 0:
            raise InvalidArgumentError("Kernel offset must be >= 0")


@dataclass
class BinarySvmModel:
    """Trained soft-margin kernel SVM."""

    support_vectors: np.ndarray
    dual_coeffs: np.ndarray
    bias: float
    kernel: KernelSpec
    cost: float = settings.SVM_COST
    kkt_gap: float = 0.0
    n_pair_updates: int = 0


class Coding(Enum):
    ONE_VS_ONE = "one-vs-one"
    ONE_VS_ALL = "one-vs-all"


@dataclass
class EcocSvmModel:
    """Coding matrix plus one binary learner per column."""

    classes: list[ClassLabel]
    coding_matrix: np.ndarray
    learners: list[BinarySvmModel]
    feature_mean: Optional[np.ndarray] = None
    feature_scale: Optional[np.ndarray] = None

    @property
    def kernel(self) -> KernelSpec:
        return self.learners[0].kernel if self.learners else KernelSpec()


@dataclass
class CrossValidationResult:
    """Per-fold and mean accuracy of a k-fold run."""

    fold_accuracies: list[float]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies))


@dataclass
class ClassMeanRow:
    """One row of the class-mean interpretation report."""

    label: ClassLabel
    mean_thetas: np.ndarray
    mean_gamma: float
    n_samples: int


@dataclass
class RunReport:
    """Accuracy summary of a training or evaluation run."""

    stage: str
    classes: list[str]
    seed: int
    config: dict[str, Any]
    accuracies: dict[str, float] = field(default_factory=dict)
    cv_fold_accuracies: list[float] = field(default_factory=list)
    confusion_matrix: list[list[int]] = field(default_factory=list)
    diagnostics: dict[str, Any] = field(default_factory=dict)
    timings_ms: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        """Deterministic part of the report; timings are kept separately."""
        return {
            "stage": self.stage,
            "seed": self.seed,
            "classes": self.classes,
            "accuracies": self.accuracies,
            "cv_fold_accuracies": self.cv_fold_accuracies,
            "cv_mean_accuracy": (
                float(np.mean(self.cv_fold_accuracies))
                if self.cv_fold_accuracies
                else None
            ),
            "confusion_matrix": self.confusion_matrix,
            "diagnostics": self.diagnostics,
            "config": self.config,
        }
