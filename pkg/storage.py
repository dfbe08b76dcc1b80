#!/usr/bin/env python3
"""
Artifact persistence for Eigenspec.
Signal files (CSV and raw float32 with sidecar), dataset matrices (ESPC1),
eigen-spectrogram bases (ESPB1), ECOC-SVM models (ESPM1), PGM images and
JSON manifests/reports, all managed under one output directory.
"""

import json
import logging
import struct
from collections.abc import Sequence
from pathlib import Path
from typing import Any, BinaryIO, Optional

import numpy as np

from config import settings
from errors import ArtifactFormatError, InvalidArgumentError
from models import (
    BinarySvmModel,
    ClassLabel,
    DatasetMatrix,
    EcocSvmModel,
    EigenBasis,
    KernelKind,
    KernelSpec,
    Signal,
)

logger = logging.getLogger(__name__)

DATASET_MAGIC = b"ESPC1"
BASIS_MAGIC = b"ESPB1"
MODEL_MAGIC = b"ESPM1"

SIGNAL_SUFFIXES = (".csv", ".f32")


# ---------------------------------------------------------------------------
# Signals
# ---------------------------------------------------------------------------


def _parse_metadata(lines: Sequence[str], source: Path) -> tuple[float, ClassLabel]:
    meta: dict[str, str] = {}
    for line in lines:
        key, sep, value = line.strip().partition("=")
        if sep:
            meta[key.strip()] = value.strip()

    if "sample_rate" not in meta:
        raise ArtifactFormatError(f"{source}: missing sample_rate metadata")
    if "label" not in meta:
        raise ArtifactFormatError(f"{source}: missing label metadata")
    try:
        sample_rate = float(meta["sample_rate"])
    except ValueError:
        raise ArtifactFormatError(
            f"{source}: sample_rate {meta['sample_rate']!r} is not a number"
        ) from None
    if sample_rate <= 0:
        raise ArtifactFormatError(f"{source}: sample_rate must be positive")
    try:
        label = ClassLabel.parse(meta["label"])
    except InvalidArgumentError as e:
        raise ArtifactFormatError(f"{source}: {e}") from e
    return sample_rate, label


def _metadata_lines(sig: Signal) -> str:
    if sig.label is None:
        raise ArtifactFormatError("Only labeled signals can be written")
    return f"sample_rate={sig.sample_rate:.17g}\nlabel={sig.label}\n"


def write_signal_csv(sig: Signal, path: Path) -> Path:
    """Single-column CSV with sample_rate= and label= header lines."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write(_metadata_lines(sig))
        np.savetxt(handle, sig.samples, fmt="%.17g")
    return path


def read_signal_csv(path: Path) -> Signal:
    try:
        with path.open("r", encoding="utf-8") as handle:
            header = [handle.readline(), handle.readline()]
            samples = np.loadtxt(handle, dtype=np.float64, ndmin=1)
    except OSError as e:
        raise ArtifactFormatError(f"{path}: {e}") from e
    except ValueError as e:
        raise ArtifactFormatError(f"{path}: unreadable samples ({e})") from e

    sample_rate, label = _parse_metadata(header, path)
    if samples.size == 0:
        raise ArtifactFormatError(f"{path}: no samples")
    return Signal(samples=samples, sample_rate=sample_rate, label=label)


def sidecar_path(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".meta")


def write_signal_raw(sig: Signal, path: Path) -> Path:
    """Little-endian float32 samples plus a key=value sidecar file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(sig.samples.astype("<f4").tobytes())
    sidecar_path(path).write_text(_metadata_lines(sig), encoding="utf-8")
    return path


def read_signal_raw(path: Path) -> Signal:
    meta = sidecar_path(path)
    if not meta.exists():
        raise ArtifactFormatError(f"{path}: missing sidecar {meta.name}")
    sample_rate, label = _parse_metadata(
        meta.read_text(encoding="utf-8").splitlines(), path
    )
    raw = path.read_bytes()
    if len(raw) == 0 or len(raw) % 4:
        raise ArtifactFormatError(f"{path}: {len(raw)} bytes is not a float32 stream")
    samples = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    return Signal(samples=samples, sample_rate=sample_rate, label=label)


def read_signal(path: Path, fmt: Optional[str] = None) -> Signal:
    """Read a signal file; the format defaults to the file suffix."""
    fmt = fmt or ("raw" if path.suffix == ".f32" else "csv")
    if fmt == "csv":
        return read_signal_csv(path)
    if fmt == "raw":
        return read_signal_raw(path)
    raise InvalidArgumentError(f"Unknown signal format {fmt!r}")


# ---------------------------------------------------------------------------
# Binary helpers
# ---------------------------------------------------------------------------


def _write_string(handle: BinaryIO, text: str) -> None:
    encoded = text.encode("utf-8")
    handle.write(struct.pack("<I", len(encoded)))
    handle.write(encoded)


def _read_exact(handle: BinaryIO, size: int, source: Path) -> bytes:
    data = handle.read(size)
    if len(data) != size:
        raise ArtifactFormatError(f"{source}: truncated file")
    return data


def _read_u32(handle: BinaryIO, source: Path) -> int:
    return int(struct.unpack("<I", _read_exact(handle, 4, source))[0])


def _read_f64(handle: BinaryIO, count: int, source: Path) -> np.ndarray:
    return np.frombuffer(_read_exact(handle, 8 * count, source), dtype="<f8").copy()


def _read_string(handle: BinaryIO, source: Path) -> str:
    return _read_exact(handle, _read_u32(handle, source), source).decode("utf-8")


def _check_magic(handle: BinaryIO, magic: bytes, source: Path) -> None:
    found = handle.read(len(magic))
    if found != magic:
        raise ArtifactFormatError(f"{source}: expected {magic!r} header, found {found!r}")


# ---------------------------------------------------------------------------
# Dataset matrices, bases and models
# ---------------------------------------------------------------------------


def save_dataset(dataset: DatasetMatrix, path: Path) -> Path:
    """ESPC1: magic, u32 n, u32 m, n x m f64 column-major, labels."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        handle.write(DATASET_MAGIC)
        handle.write(struct.pack("<II", dataset.n_pixels, dataset.n_samples))
        handle.write(np.asarray(dataset.data, dtype="<f8").tobytes(order="F"))
        for label in dataset.labels:
            _write_string(handle, str(label))
    return path


def load_dataset(path: Path, column_order_seed: int = 0) -> DatasetMatrix:
    try:
        with path.open("rb") as handle:
            _check_magic(handle, DATASET_MAGIC, path)
            n, m = _read_u32(handle, path), _read_u32(handle, path)
            data = _read_f64(handle, n * m, path).reshape((n, m), order="F")
            labels = [ClassLabel.parse(_read_string(handle, path)) for _ in range(m)]
    except OSError as e:
        raise ArtifactFormatError(f"{path}: {e}") from e
    except InvalidArgumentError as e:
        raise ArtifactFormatError(f"{path}: {e}") from e
    return DatasetMatrix(data=data, labels=labels, column_order_seed=column_order_seed)


def save_basis(basis: EigenBasis, path: Path) -> Path:
    """ESPB1: magic, u32 n, u32 k, mean, then k (sigma_j, u_j) pairs."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        handle.write(BASIS_MAGIC)
        handle.write(struct.pack("<II", basis.n_pixels, basis.k))
        handle.write(np.asarray(basis.mean_image, dtype="<f8").tobytes())
        for j in range(basis.k):
            handle.write(struct.pack("<d", float(basis.singular_values[j])))
            handle.write(np.asarray(basis.modes[:, j], dtype="<f8").tobytes())
    return path


def load_basis(path: Path) -> EigenBasis:
    try:
        with path.open("rb") as handle:
            _check_magic(handle, BASIS_MAGIC, path)
            n, k = _read_u32(handle, path), _read_u32(handle, path)
            mean = _read_f64(handle, n, path)
            sigma = np.empty(k)
            modes = np.empty((n, k))
            for j in range(k):
                sigma[j] = _read_f64(handle, 1, path)[0]
                modes[:, j] = _read_f64(handle, n, path)
    except OSError as e:
        raise ArtifactFormatError(f"{path}: {e}") from e
    return EigenBasis(mean_image=mean, modes=modes, singular_values=sigma)


_KERNEL_CODES = {KernelKind.LINEAR: 0, KernelKind.POLYNOMIAL: 1}


def save_model(model: EcocSvmModel, path: Path) -> Path:
    """ESPM1: magic, kernel spec, class list, coding matrix, scaling block,
    then per learner (support count, vectors, coefficients, bias, cost)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    kernel = model.kernel
    rows, cols = model.coding_matrix.shape
    dim = model.learners[0].support_vectors.shape[1] if model.learners else 0
    with path.open("wb") as handle:
        handle.write(MODEL_MAGIC)
        handle.write(
            struct.pack("<BId", _KERNEL_CODES[kernel.kind], kernel.degree, kernel.offset)
        )
        handle.write(struct.pack("<I", len(model.classes)))
        for label in model.classes:
            _write_string(handle, str(label))
        handle.write(struct.pack("<II", rows, cols))
        handle.write(np.asarray(model.coding_matrix, dtype=np.int8).tobytes(order="C"))

        scaled = model.feature_mean is not None and model.feature_scale is not None
        handle.write(struct.pack("<BI", int(scaled), dim))
        if scaled:
            handle.write(np.asarray(model.feature_mean, dtype="<f8").tobytes())
            handle.write(np.asarray(model.feature_scale, dtype="<f8").tobytes())

        for learner in model.learners:
            handle.write(struct.pack("<I", learner.support_vectors.shape[0]))
            handle.write(np.asarray(learner.support_vectors, dtype="<f8").tobytes(order="C"))
            handle.write(np.asarray(learner.dual_coeffs, dtype="<f8").tobytes())
            handle.write(struct.pack("<dd", learner.bias, learner.cost))
    return path


def load_model(path: Path) -> EcocSvmModel:
    try:
        with path.open("rb") as handle:
            _check_magic(handle, MODEL_MAGIC, path)
            code, degree, offset = struct.unpack("<BId", _read_exact(handle, 13, path))
            kind = {v: k for k, v in _KERNEL_CODES.items()}.get(code)
            if kind is None:
                raise ArtifactFormatError(f"{path}: unknown kernel code {code}")
            kernel = KernelSpec(kind=kind, degree=degree, offset=offset)

            classes = [
                ClassLabel.parse(_read_string(handle, path))
                for _ in range(_read_u32(handle, path))
            ]
            rows, cols = _read_u32(handle, path), _read_u32(handle, path)
            coding = np.frombuffer(
                _read_exact(handle, rows * cols, path), dtype=np.int8
            ).reshape(rows, cols).copy()

            scaled, dim = struct.unpack("<BI", _read_exact(handle, 5, path))
            model = EcocSvmModel(classes=classes, coding_matrix=coding, learners=[])
            if scaled:
                model.feature_mean = _read_f64(handle, dim, path)
                model.feature_scale = _read_f64(handle, dim, path)

            for _ in range(cols):
                count = _read_u32(handle, path)
                vectors = _read_f64(handle, count * dim, path).reshape(count, dim)
                coeffs = _read_f64(handle, count, path)
                bias, cost = struct.unpack("<dd", _read_exact(handle, 16, path))
                model.learners.append(
                    BinarySvmModel(
                        support_vectors=vectors,
                        dual_coeffs=coeffs,
                        bias=bias,
                        kernel=kernel,
                        cost=cost,
                    )
                )
    except OSError as e:
        raise ArtifactFormatError(f"{path}: {e}") from e
    except InvalidArgumentError as e:
        raise ArtifactFormatError(f"{path}: {e}") from e
    return model


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------


def write_pgm(pixels: np.ndarray, path: Path) -> Path:
    """Binary PGM (P5, maxval 255) with value = round(pixel x 255)."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 2:
        raise InvalidArgumentError("PGM export needs a 2-D pixel grid")
    path.parent.mkdir(parents=True, exist_ok=True)
    levels = np.rint(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    height, width = levels.shape
    with path.open("wb") as handle:
        handle.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        handle.write(levels.tobytes(order="C"))
    return path


def read_pgm(path: Path) -> np.ndarray:
    """Read a P5 PGM written by write_pgm back into [0, 1] floats."""
    raw = path.read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ArtifactFormatError(f"{path}: truncated PGM header")
        fields.append(raw[start:pos])
    if fields[0] != b"P5" or int(fields[3]) != 255:
        raise ArtifactFormatError(f"{path}: only 8-bit P5 PGM is supported")
    width, height = int(fields[1]), int(fields[2])
    body = raw[pos + 1 : pos + 1 + width * height]
    if len(body) != width * height:
        raise ArtifactFormatError(f"{path}: truncated PGM body")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width) / 255.0


def normalize_for_display(values: np.ndarray) -> np.ndarray:
    """Min-max scaling to [0, 1]; a constant maps to zeros."""
    low, high = float(np.min(values)), float(np.max(values))
    if high > low:
        return (values - low) / (high - low)
    return np.zeros_like(values, dtype=np.float64)


# ---------------------------------------------------------------------------
# Store
# ---------------------------------------------------------------------------


class ArtifactStore:
    """Manages the file layout of one run directory."""

    def __init__(self, root: str = settings.OUTPUT_DIR):
        """Initialize the store rooted at an output directory."""
        self.root = Path(root)
        self.signals_dir = self.root / "signals"
        self.dataset_dir = self.root / "dataset"
        self.model_dir = self.root / "model"
        self.modes_dir = self.root / "modes"
        self.explain_dir = self.root / "explain"

    def ensure(self, directory: Path) -> Path:
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ArtifactFormatError(f"Cannot create {directory}: {e}") from e
        return directory

    def signal_path(self, label: ClassLabel, fmt: str = "csv", stem: str = "") -> Path:
        suffix = ".f32" if fmt == "raw" else ".csv"
        return self.signals_dir / f"{stem or label}{suffix}"

    def write_signal(self, sig: Signal, fmt: str = "csv", stem: str = "") -> Path:
        if sig.label is None:
            raise ArtifactFormatError("Only labeled signals can be stored")
        path = self.signal_path(sig.label, fmt, stem)
        self.ensure(path.parent)
        try:
            if fmt == "raw":
                return write_signal_raw(sig, path)
            return write_signal_csv(sig, path)
        except OSError as e:
            raise ArtifactFormatError(f"Cannot write {path}: {e}") from e

    def write_json(self, data: dict[str, Any], path: Path) -> Path:
        self.ensure(path.parent)
        try:
            path.write_text(
                json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
        except OSError as e:
            raise ArtifactFormatError(f"Cannot write {path}: {e}") from e
        return path

    def read_json(self, path: Path) -> dict[str, Any]:
        try:
            data: dict[str, Any] = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ArtifactFormatError(f"Cannot read {path}: {e}") from e
        return data

    def write_csv(self, header: Sequence[str], rows: Sequence[Sequence[Any]], path: Path) -> Path:
        self.ensure(path.parent)
        lines = [",".join(header)]
        for row in rows:
            lines.append(
                ",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row)
            )
        try:
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        except OSError as e:
            raise ArtifactFormatError(f"Cannot write {path}: {e}") from e
        return path

    @staticmethod
    def list_signal_files(directory: Path, any_suffix: bool = False) -> list[Path]:
        """Signal files in a directory; any_suffix also keeps unknown suffixes, never sidecars."""
        if not directory.is_dir():
            raise ArtifactFormatError(f"Signal directory {directory} does not exist")
        return sorted(
            path
            for path in directory.iterdir()
            if path.is_file()
            and path.suffix != ".meta"
            and (any_suffix or path.suffix in SIGNAL_SUFFIXES)
        )
