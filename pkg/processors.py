#!/usr/bin/env python3
"""
High-level pipeline services for Eigenspec.
Orchestrates simulation, ingest, dataset construction, rPCA feature
extraction, ECOC-SVM training/evaluation and the explanation reports.
"""

import logging
from collections import defaultdict
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Optional

import numpy as np

import interpret
import rla
import spectrogram
import svm
from config import RunConfig
from errors import DataError, EigenspecError, EmptyDatasetError, InvalidDatasetError
from models import (
    BearingSpec,
    ClassLabel,
    ClassMeanRow,
    Coding,
    DatasetMatrix,
    EcocSvmModel,
    EigenBasis,
    FaultSimParams,
    FaultType,
    KernelKind,
    KernelSpec,
    RsvdConfig,
    RunReport,
    Signal,
    SpectrogramImage,
    StftConfig,
    get_bearing,
    sorted_labels,
)
from signal_sim import add_awgn, simulate_baseline_signal, simulate_fault_signal
from storage import (
    SIGNAL_SUFFIXES,
    ArtifactStore,
    load_basis,
    load_dataset,
    load_model,
    normalize_for_display,
    read_signal,
    save_basis,
    save_dataset,
    save_model,
    write_pgm,
)
from utils import derive_seed, log_debug, stage_timer

logger = logging.getLogger(__name__)

# Class order of the simulated set: B1..B4, IR1..IR4, OR1..OR4
SIMULATED_FAULTS = (FaultType.ROLLING_ELEMENT, FaultType.INNER_RACE, FaultType.OUTER_RACE)


@contextmanager
def pipeline_stage(name: str, timings: dict[str, float]) -> Iterator[None]:
    """Time a stage and prefix errors raised inside it with the stage name."""
    with stage_timer(timings, name):
        try:
            yield
        except EigenspecError as e:
            if e.args and not str(e.args[0]).startswith(f"[{name}]"):
                e.args = (f"[{name}] {e.args[0]}",) + e.args[1:]
            raise


class DiagnosisPipeline:
    """Service that runs the fault-diagnosis workflow for one RunConfig."""

    def __init__(self, config: RunConfig, store: Optional[ArtifactStore] = None):
        """Initialize with a validated run configuration."""
        self.config = config
        self.store = store or ArtifactStore(config.out)
        self.timings: dict[str, float] = {}

    # -- configuration views -------------------------------------------------

    @property
    def stft_config(self) -> StftConfig:
        return StftConfig(
            window_len=self.config.window_len,
            overlap_frac=self.config.overlap_frac,
            chunk_len=self.config.chunk_len,
        )

    @property
    def rsvd_config(self) -> RsvdConfig:
        return RsvdConfig(
            target_rank=self.config.rank,
            oversampling=self.config.oversampling,
            power_iterations=self.config.power_iterations,
            retained_components=self.config.components,
            rng_seed=derive_seed(self.config.seed, "rsvd"),
        )

    @property
    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(
            kind=KernelKind(self.config.kernel),
            degree=self.config.degree,
            offset=self.config.offset,
        )

    @property
    def coding(self) -> Coding:
        return Coding(self.config.coding)

    def requested_classes(self) -> list[ClassLabel]:
        return [ClassLabel.parse(text) for text in self.config.classes]

    def config_echo(self) -> dict[str, Any]:
        """Run configuration without the output location, for reports."""
        return self.config.model_dump(mode="json", exclude={"out"})

    # -- signals -----------------------------------------------------------

    def simulated_signals(self) -> list[Signal]:
        """Noisy fault signals for every (fault, amplitude) class, optionally Normal."""
        cfg = self.config
        bearing: BearingSpec = get_bearing(cfg.bearing)
        duration = cfg.chunks_per_class * cfg.chunk_len / cfg.sample_rate
        wanted = set(self.requested_classes())

        signals: list[Signal] = []
        index = 0
        for fault in SIMULATED_FAULTS:
            for level in cfg.amplitude_levels:
                params = FaultSimParams(
                    fault_type=fault,
                    amplitude_mean=level,
                    amplitude_jitter_frac=cfg.amplitude_jitter,
                    decay_beta=cfg.decay_beta,
                    resonance_fn=cfg.resonance_fn,
                    shaft_speed=cfg.shaft_speed,
                    sample_rate=cfg.sample_rate,
                    duration=duration,
                    rng_seed=derive_seed(cfg.seed, "simulate", index),
                )
                clean = simulate_fault_signal(params, bearing)
                noise_seed = derive_seed(cfg.seed, "noise", index)
                index += 1
                if wanted and clean.label not in wanted:
                    continue
                signals.append(add_awgn(clean, cfg.snr_db, noise_seed))

        if cfg.with_normal:
            baseline = simulate_baseline_signal(
                cfg.chunks_per_class * cfg.chunk_len,
                cfg.sample_rate,
                derive_seed(cfg.seed, "simulate", index),
            )
            if not wanted or baseline.label in wanted:
                signals.append(baseline)
        return signals

    def simulate(self) -> list[Path]:
        """Write one labeled CSV signal file per simulated class."""
        paths: list[Path] = []
        with pipeline_stage("simulate", self.timings):
            for sig in self.simulated_signals():
                paths.append(self.store.write_signal(sig))
                log_debug(f"Wrote {sig.label} ({sig.samples.size} samples)")
        logger.info(f"Simulated {len(paths)} classes into {self.store.signals_dir}")
        return paths

    def ingest(self, paths: Sequence[Path]) -> dict[str, Any]:
        """Validate external signal files and store them in the internal format.

        Files without parseable sample_rate/label metadata are rejected and
        listed in the ingest report; mixed sample rates are accepted. With an
        explicit ingest_format, directories also yield files of any suffix.
        Stored names that would collide get a numeric suffix.
        """
        explicit_format = self.config.ingest_format
        candidates: list[Path] = []
        for path in paths:
            if path.is_dir():
                candidates.extend(
                    self.store.list_signal_files(path, any_suffix=explicit_format is not None)
                )
            else:
                candidates.append(path)

        accepted: list[dict[str, Any]] = []
        rejected: list[dict[str, str]] = []
        used_stems: set[str] = set()
        with pipeline_stage("ingest", self.timings):
            for path in candidates:
                try:
                    fmt = None if path.suffix in SIGNAL_SUFFIXES else explicit_format or "csv"
                    sig = read_signal(path, fmt)
                except (DataError, OSError) as e:
                    logger.warning(f"⚠️  Rejected {path}: {e}")
                    rejected.append({"file": str(path), "reason": str(e)})
                    continue
                stem = base = f"{sig.label}__{path.stem}"
                copy = 1
                while stem in used_stems:
                    copy += 1
                    stem = f"{base}__{copy}"
                used_stems.add(stem)
                stored = self.store.write_signal(sig, stem=stem)
                accepted.append(
                    {
                        "file": str(path),
                        "stored_as": stored.name,
                        "label": str(sig.label),
                        "sample_rate": sig.sample_rate,
                        "n_samples": int(sig.samples.size),
                    }
                )

            report = {"accepted": accepted, "rejected": rejected}
            self.store.write_json(report, self.store.root / "ingest_report.json")
            if not accepted:
                raise InvalidDatasetError(
                    f"None of {len(candidates)} candidate file(s) could be ingested"
                )
        logger.info(f"Ingested {len(accepted)} file(s), rejected {len(rejected)}")
        return report

    # -- dataset -----------------------------------------------------------

    def build_dataset(
        self, signal_dir: Optional[Path] = None
    ) -> tuple[DatasetMatrix, DatasetMatrix]:
        """Chunk, image and split every signal file; persist train/test matrices."""
        signal_dir = signal_dir or self.store.signals_dir
        cfg = self.stft_config
        by_class: dict[ClassLabel, list[SpectrogramImage]] = defaultdict(list)
        failures: list[dict[str, str]] = []

        with pipeline_stage("build-dataset", self.timings):
            for path in self.store.list_signal_files(signal_dir):
                try:
                    sig = read_signal(path)
                    images = spectrogram.signal_to_images(sig, cfg)
                except (EigenspecError, OSError) as e:
                    logger.warning(f"⚠️  Skipping {path.name}: {e}")
                    failures.append({"file": str(path), "reason": str(e)})
                    continue
                if sig.label is not None:
                    by_class[sig.label].extend(images)

            requested = self.requested_classes()
            if requested:
                missing = [str(label) for label in requested if label not in by_class]
                if missing:
                    raise InvalidDatasetError(f"Missing classes: {', '.join(missing)}")
                by_class = defaultdict(list, {label: by_class[label] for label in requested})
            if not by_class:
                raise EmptyDatasetError(f"No usable signal files in {signal_dir}")

            cap = self.config.images_per_class
            images: list[SpectrogramImage] = []
            for label in sorted_labels(by_class):
                images.extend(by_class[label][:cap] if cap else by_class[label])

            split_seed = derive_seed(self.config.seed, "split")
            train, test = spectrogram.assemble_dataset(
                images, self.config.split_frac, split_seed
            )
            save_dataset(train, self.store.dataset_dir / "train.espc")
            save_dataset(test, self.store.dataset_dir / "test.espc")

            train_counts, test_counts = train.class_counts(), test.class_counts()
            manifest = {
                "classes": list(train_counts),
                "train_counts": train_counts,
                "test_counts": test_counts,
                "n_pixels": train.n_pixels,
                "n_train": train.n_samples,
                "n_test": test.n_samples,
                "image_side": spectrogram.IMAGE_SIDE,
                "column_order_seed": split_seed,
                "seed": self.config.seed,
                "failures": failures,
            }
            self.store.write_json(manifest, self.store.dataset_dir / "manifest.json")
        logger.info(
            f"Dataset: {train.n_samples} train / {test.n_samples} test images, "
            f"{len(train_counts)} classes"
        )
        return train, test

    # -- training and evaluation ---------------------------------------------

    def _load_dataset(self, path: Path) -> DatasetMatrix:
        """Load a matrix with the split seed recorded in its manifest, if any."""
        manifest_path = path.with_name("manifest.json")
        seed = 0
        if manifest_path.exists():
            seed = int(self.store.read_json(manifest_path).get("column_order_seed", 0))
        return load_dataset(path, column_order_seed=seed)

    def _predict(
        self, dataset: DatasetMatrix, basis: EigenBasis, model: EcocSvmModel
    ) -> list[ClassLabel]:
        B = rla.center_with(dataset, basis.mean_image)
        features = rla.project_features(B, basis).features
        return svm.ecoc_predict_many(model, features)

    def train(self, dataset_path: Optional[Path] = None) -> RunReport:
        """Fit the basis, train the ECOC-SVM, cross-validate and report.

        A test.espc next to the training matrix is evaluated as well.
        """
        dataset_path = dataset_path or self.store.dataset_dir / "train.espc"
        cfg = self.config
        with pipeline_stage("load", self.timings):
            train = self._load_dataset(dataset_path)

        with pipeline_stage("rsvd", self.timings):
            basis, B, factorization = rla.fit_basis(train, self.rsvd_config, cfg.solver)
            features = rla.project_features(B, basis, train.labels)

        svm_options: dict[str, Any] = {
            "C": cfg.cost,
            "kernel": self.kernel_spec,
            "coding": self.coding,
            "tol": cfg.tol,
            "max_passes": cfg.max_pair_updates,
            "standardize": cfg.standardize,
        }
        with pipeline_stage("svm", self.timings):
            model = svm.ecoc_train(features.features, train.labels, **svm_options)
            train_predicted = svm.ecoc_predict_many(model, features.features)

        with pipeline_stage("cross-validate", self.timings):
            cv = svm.cross_validate(
                features.features,
                train.labels,
                folds=cfg.folds,
                seed=derive_seed(cfg.seed, "cv"),
                **svm_options,
            )

        report = RunReport(
            stage="train",
            classes=[str(label) for label in model.classes],
            seed=cfg.seed,
            config=self.config_echo(),
            accuracies={"train": svm.accuracy(train.labels, train_predicted)},
            cv_fold_accuracies=cv.fold_accuracies,
            diagnostics={
                "eigen_residual": factorization["eigen_residual"],
                "singular_values": basis.singular_values.tolist(),
                "n_learners": len(model.learners),
                "n_support_vectors": sum(
                    learner.support_vectors.shape[0] for learner in model.learners
                ),
                "max_kkt_gap": max(learner.kkt_gap for learner in model.learners),
                "column_order_seed": train.column_order_seed,
            },
        )
        confusion_true, confusion_pred = train.labels, train_predicted

        test_path = dataset_path.with_name("test.espc")
        if test_path.exists():
            with pipeline_stage("evaluate", self.timings):
                test = self._load_dataset(test_path)
                test_predicted = self._predict(test, basis, model)
                report.accuracies["test"] = svm.accuracy(test.labels, test_predicted)
            confusion_true, confusion_pred = test.labels, test_predicted
        report.diagnostics["confusion_split"] = "test" if test_path.exists() else "train"
        report.confusion_matrix = svm.confusion_counts(
            confusion_true, confusion_pred, model.classes
        ).tolist()

        with pipeline_stage("save", self.timings):
            save_basis(basis, self.store.model_dir / "basis.espb")
            save_model(model, self.store.model_dir / "model.espm")
            self.store.write_json(report.to_dict(), self.store.model_dir / "report.json")
            timings = dict(self.timings)
            timings["factorization"] = factorization["factorization_ms"] or 0.0
            report.timings_ms = timings
            self.store.write_json(timings, self.store.model_dir / "timings.json")

        logger.info(
            f"Training accuracy {report.accuracies['train']:.4f}, "
            f"CV mean {cv.mean_accuracy:.4f}"
            + (f", test {report.accuracies['test']:.4f}" if "test" in report.accuracies else "")
        )
        return report

    def evaluate(
        self, dataset_path: Optional[Path] = None, model_dir: Optional[Path] = None
    ) -> RunReport:
        """Center with the training mean, project, predict and score a dataset."""
        model_dir = model_dir or self.store.model_dir
        dataset_path = dataset_path or self.store.dataset_dir / "test.espc"
        with pipeline_stage("evaluate", self.timings):
            basis = load_basis(model_dir / "basis.espb")
            model = load_model(model_dir / "model.espm")
            dataset = self._load_dataset(dataset_path)
            predicted = self._predict(dataset, basis, model)
            confusion = svm.confusion_counts(dataset.labels, predicted, model.classes)

        report = RunReport(
            stage="evaluate",
            classes=[str(label) for label in model.classes],
            seed=self.config.seed,
            config=self.config_echo(),
            accuracies={dataset_path.stem: svm.accuracy(dataset.labels, predicted)},
            confusion_matrix=confusion.tolist(),
            diagnostics={"dataset": dataset_path.name, "n_samples": dataset.n_samples},
            timings_ms=dict(self.timings),
        )
        self.store.write_json(
            report.to_dict(), self.store.root / f"evaluation_{dataset_path.stem}.json"
        )
        logger.info(f"Accuracy on {dataset_path.name}: {report.accuracies[dataset_path.stem]:.4f}")
        return report

    # -- exports -----------------------------------------------------------

    def export_modes(self, basis_path: Optional[Path] = None) -> list[Path]:
        """Write mode_j.pgm for every retained mode, mean.pgm and singular_values.csv."""
        basis_path = basis_path or self.store.model_dir / "basis.espb"
        written: list[Path] = []
        with pipeline_stage("export-modes", self.timings):
            basis = load_basis(basis_path)
            side = int(round(np.sqrt(basis.n_pixels)))
            if side * side != basis.n_pixels:
                raise InvalidDatasetError(
                    f"Basis of {basis.n_pixels} pixels is not a square image"
                )
            for j in range(basis.k):
                image = spectrogram.unflatten_image(basis.modes[:, j], side)
                written.append(
                    write_pgm(
                        normalize_for_display(image),
                        self.store.modes_dir / f"mode_{j + 1}.pgm",
                    )
                )
            mean = spectrogram.unflatten_image(basis.mean_image, side)
            written.append(write_pgm(mean, self.store.modes_dir / "mean.pgm"))
            written.append(
                self.store.write_csv(
                    ["mode", "singular_value"],
                    [(j + 1, float(s)) for j, s in enumerate(basis.singular_values)],
                    self.store.modes_dir / "singular_values.csv",
                )
            )
        logger.info(f"Exported {basis.k} eigen-spectrograms to {self.store.modes_dir}")
        return written

    def explain(
        self, dataset_path: Optional[Path] = None, basis_path: Optional[Path] = None
    ) -> list[ClassMeanRow]:
        """Class-mean interpretation coefficients plus per-sample feature export."""
        basis_path = basis_path or self.store.model_dir / "basis.espb"
        dataset_path = dataset_path or self.store.dataset_dir / "train.espc"
        with pipeline_stage("explain", self.timings):
            basis = load_basis(basis_path)
            dataset = self._load_dataset(dataset_path)
            B = rla.center_with(dataset, basis.mean_image)
            features = rla.project_features(B, basis, dataset.labels).features
            records = interpret.interpret_samples(B, basis, features, dataset.labels)
            rows = interpret.class_mean_report(
                records,
                self.config.explain_samples,
                seed=derive_seed(self.config.seed, "explain"),
                classes=self.requested_classes() or None,
            )

            theta_header = [f"theta_{j + 1}" for j in range(basis.k)]
            self.store.write_csv(
                ["class", *theta_header, "mean_gamma", "n_samples"],
                [
                    [str(row.label), *map(float, row.mean_thetas), row.mean_gamma, row.n_samples]
                    for row in rows
                ],
                self.store.explain_dir / "interpretation.csv",
            )
            self.store.write_csv(
                [
                    "sample_id",
                    "class",
                    *[f"t_{j + 1}" for j in range(basis.k)],
                    "gamma",
                    *theta_header,
                ],
                [
                    [
                        record.sample_id,
                        str(record.label),
                        *map(float, features[record.sample_id]),
                        record.gamma,
                        *map(float, record.thetas),
                    ]
                    for record in records
                ],
                self.store.explain_dir / "features.csv",
            )
        logger.info(f"Explained {len(records)} samples across {len(rows)} classes")
        return rows
