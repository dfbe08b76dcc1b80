#!/usr/bin/env python3
"""
Spectrogram imaging for Eigenspec.
Chunks signals, computes Hamming-windowed STFT magnitudes, renders
fixed-size grayscale images and assembles the dataset matrices.
"""

import logging
from collections import defaultdict
from collections.abc import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage
from scipy.signal import get_window

from config import settings
from errors import EmptyDatasetError, InvalidArgumentError, InvalidDatasetError
from models import (
    ClassLabel,
    DatasetMatrix,
    Signal,
    SpectrogramImage,
    StftConfig,
    sorted_labels,
)

logger = logging.getLogger(__name__)

IMAGE_SIDE = settings.IMAGE_SIDE
LOG_EPSILON = 1e-10


def chunk_signal(sig: Signal, cfg: StftConfig) -> np.ndarray:
    """Non-overlapping chunks of chunk_len samples, one per row; remainder dropped."""
    n_chunks = sig.samples.size // cfg.chunk_len
    if n_chunks == 0:
        raise EmptyDatasetError(
            f"Signal of {sig.samples.size} samples is shorter than one "
            f"{cfg.chunk_len}-sample chunk"
        )
    return sig.samples[: n_chunks * cfg.chunk_len].reshape(n_chunks, cfg.chunk_len)


def analysis_window(cfg: StftConfig) -> np.ndarray:
    """Symmetric window: w[k] = 0.54 - 0.46 cos(2 pi k / (L - 1)) for Hamming."""
    return np.asarray(get_window(cfg.window, cfg.window_len, fftbins=False))


def stft_magnitude(chunk: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """One-sided STFT magnitude, shape (window_len // 2 + 1, n_frames).

    Also accepts a stack of chunks, returning (n_chunks, bins, frames).
    """
    chunk = np.asarray(chunk, dtype=np.float64)
    if chunk.shape[-1] != cfg.chunk_len:
        raise InvalidArgumentError(
            f"Chunk length {chunk.shape[-1]} differs from chunk_len {cfg.chunk_len}"
        )

    frames = sliding_window_view(chunk, cfg.window_len, axis=-1)[..., :: cfg.hop, :]
    spectrum = np.fft.rfft(frames * analysis_window(cfg), n=cfg.window_len, axis=-1)
    return np.swapaxes(np.abs(spectrum), -1, -2)


def render_image(mag: np.ndarray, label: ClassLabel | None = None) -> SpectrogramImage:
    """Log-compress, min-max normalize and bilinearly resize to IMAGE_SIDE^2.

    Frequency runs up the vertical axis (low frequency at the bottom row),
    time along the horizontal axis. A constant input maps to all zeros.
    """
    mag = np.asarray(mag, dtype=np.float64)
    if mag.ndim != 2 or mag.size == 0:
        raise InvalidArgumentError("Magnitude matrix must be a non-empty 2-D array")

    db = 20.0 * np.log10(mag + LOG_EPSILON)
    low, high = float(db.min()), float(db.max())
    if high > low:
        normalized = (db - low) / (high - low)
    else:
        normalized = np.zeros_like(db)

    normalized = np.flipud(normalized)
    rows = np.linspace(0.0, normalized.shape[0] - 1, IMAGE_SIDE)
    cols = np.linspace(0.0, normalized.shape[1] - 1, IMAGE_SIDE)
    grid = np.meshgrid(rows, cols, indexing="ij")
    pixels = ndimage.map_coordinates(normalized, grid, order=1, mode="nearest")
    return SpectrogramImage(pixels=np.clip(pixels, 0.0, 1.0), label=label)


def signal_to_images(sig: Signal, cfg: StftConfig) -> list[SpectrogramImage]:
    """Chunk, transform and render every chunk of a labeled signal."""
    chunks = chunk_signal(sig, cfg)
    magnitudes = stft_magnitude(chunks, cfg)
    return [render_image(mag, sig.label) for mag in magnitudes]


def flatten_image(pixels: np.ndarray) -> np.ndarray:
    """Column-major flattening, top-left pixel first."""
    return np.ravel(pixels, order="F")


def unflatten_image(column: np.ndarray, side: int = IMAGE_SIDE) -> np.ndarray:
    """Inverse of flatten_image."""
    return np.reshape(column, (side, side), order="F")


def stratified_split_indices(
    labels: Sequence[ClassLabel], split_frac: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class seeded shuffle; round(split_frac x count) go to training."""
    if not 0 < split_frac < 1:
        raise InvalidArgumentError("split_frac must lie in (0, 1)")

    by_class: dict[ClassLabel, list[int]] = defaultdict(list)
    for index, label in enumerate(labels):
        by_class[label].append(index)
    if not by_class:
        raise InvalidDatasetError("Cannot split a dataset with no images")

    rng = np.random.default_rng(seed)
    train: list[int] = []
    test: list[int] = []
    for label in sorted_labels(by_class):
        indices = np.asarray(by_class[label])
        n_train = int(round(split_frac * indices.size))
        if n_train == 0 or n_train == indices.size:
            raise InvalidDatasetError(
                f"Class {label} has {indices.size} image(s), below the minimum "
                f"needed for a {split_frac:.2f} train/test split"
            )
        shuffled = rng.permutation(indices)
        train.extend(shuffled[:n_train].tolist())
        test.extend(shuffled[n_train:].tolist())
    return np.asarray(train), np.asarray(test)


def assemble_dataset(
    images: Sequence[SpectrogramImage], split_frac: float, seed: int
) -> tuple[DatasetMatrix, DatasetMatrix]:
    """Stratified train/test DatasetMatrix pair from labeled images."""
    if not images:
        raise InvalidDatasetError("No images to assemble")
    if any(image.label is None for image in images):
        raise InvalidDatasetError("Every image needs a class label")

    labels: list[ClassLabel] = [image.label for image in images]  # type: ignore[misc]
    train_idx, test_idx = stratified_split_indices(labels, split_frac, seed)

    def build(indices: np.ndarray) -> DatasetMatrix:
        columns = np.stack([flatten_image(images[i].pixels) for i in indices])
        return DatasetMatrix(
            data=columns.T,
            labels=[labels[i] for i in indices],
            column_order_seed=seed,
        )

    train, test = build(train_idx), build(test_idx)
    logger.info(
        f"Assembled dataset: {train.n_samples} train / {test.n_samples} test "
        f"columns of {train.n_pixels} pixels"
    )
    return train, test
