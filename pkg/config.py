from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", extra="ignore")

    # Run settings
    OUTPUT_DIR: str = "runs/default"
    MASTER_SEED: int = 20210417
    DEBUG_MODE: bool = False

    # Simulation settings
    SIM_BEARING: str = "SKF 22240 CCK/W33"
    SIM_SHAFT_SPEED_RPM: float = 1000.0
    SIM_SAMPLE_RATE: float = 12_000.0
    SIM_DECAY_BETA: float = 1200.0
    SIM_RESONANCE_FN: float = 2000.0
    SIM_AMPLITUDE_LEVELS: list[float] = [1.0, 2.0, 3.0, 4.0]
    SIM_AMPLITUDE_JITTER: float = 0.10
    SIM_CHUNKS_PER_CLASS: int = 151
    SIM_SNR_DB: float = 10.0

    # STFT / image settings
    STFT_WINDOW_LEN: int = 32
    STFT_OVERLAP: float = 0.5
    STFT_CHUNK_LEN: int = 2048
    IMAGE_SIDE: int = 227

    # Dataset settings
    SPLIT_TRAIN_FRACTION: float = 0.8
    DATASET_IMAGES_PER_CLASS: int = 150

    # rSVD settings
    RSVD_RANK: int = 110
    RSVD_OVERSAMPLING: int = 0
    RSVD_POWER_ITERATIONS: int = 0
    RSVD_COMPONENTS: int = 4

    # SVM settings
    SVM_COST: float = 1.0
    SVM_KERNEL_DEGREE: int = 2
    SVM_KERNEL_OFFSET: float = 1.0
    SVM_TOL: float = 1e-3
    SVM_MAX_PAIR_UPDATES: int = 1_000_000
    SVM_GRAM_CACHE_LIMIT: int = 5000
    SVM_CV_FOLDS: int = 5

    # Interpretation settings
    EXPLAIN_SAMPLES_PER_CLASS: int = 300


settings = Settings()


class RunConfig(BaseModel):
    """Validated run configuration; the JSON config file mirrors these fields."""

    model_config = ConfigDict(extra="forbid")

    # Dataset source
    source: Literal["simulate", "ingest"] = "simulate"
    ingest_paths: list[str] = Field(default_factory=list)
    ingest_format: Optional[Literal["csv", "raw"]] = None
    classes: list[str] = Field(default_factory=list)

    # Simulation
    bearing: str = settings.SIM_BEARING
    shaft_speed: float = Field(settings.SIM_SHAFT_SPEED_RPM, gt=0)
    sample_rate: float = Field(settings.SIM_SAMPLE_RATE, gt=0)
    decay_beta: float = Field(settings.SIM_DECAY_BETA, gt=0)
    resonance_fn: float = Field(settings.SIM_RESONANCE_FN, gt=0)
    amplitude_levels: list[float] = Field(
        default_factory=lambda: list(settings.SIM_AMPLITUDE_LEVELS)
    )
    amplitude_jitter: float = Field(settings.SIM_AMPLITUDE_JITTER, ge=0, lt=1)
    chunks_per_class: int = Field(settings.SIM_CHUNKS_PER_CLASS, ge=1)
    with_normal: bool = False
    snr_db: float = settings.SIM_SNR_DB

    # STFT
    window_len: int = Field(settings.STFT_WINDOW_LEN, ge=2)
    overlap_frac: float = Field(settings.STFT_OVERLAP, ge=0, lt=1)
    chunk_len: int = Field(settings.STFT_CHUNK_LEN, ge=2)

    # Dataset split
    split_frac: float = Field(settings.SPLIT_TRAIN_FRACTION, gt=0, lt=1)
    images_per_class: Optional[int] = Field(settings.DATASET_IMAGES_PER_CLASS, ge=1)

    # rSVD
    solver: Literal["randomized", "deterministic"] = "randomized"
    rank: int = Field(settings.RSVD_RANK, ge=1)
    oversampling: int = Field(settings.RSVD_OVERSAMPLING, ge=0)
    power_iterations: int = Field(settings.RSVD_POWER_ITERATIONS, ge=0)
    components: int = Field(settings.RSVD_COMPONENTS, ge=1)

    # SVM
    cost: float = Field(settings.SVM_COST, gt=0)
    kernel: Literal["linear", "polynomial"] = "polynomial"
    degree: int = Field(settings.SVM_KERNEL_DEGREE, ge=1)
    offset: float = Field(settings.SVM_KERNEL_OFFSET, ge=0)
    tol: float = Field(settings.SVM_TOL, gt=0)
    max_pair_updates: int = Field(settings.SVM_MAX_PAIR_UPDATES, ge=1)
    coding: Literal["one-vs-one", "one-vs-all"] = "one-vs-one"
    standardize: bool = False
    folds: int = Field(settings.SVM_CV_FOLDS, ge=2)

    # Interpretation
    explain_samples: int = Field(settings.EXPLAIN_SAMPLES_PER_CLASS, ge=1)

    # Run
    seed: int = Field(settings.MASTER_SEED, ge=0, lt=2**64)
    out: str = settings.OUTPUT_DIR
