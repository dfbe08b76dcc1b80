from collections.abc import Callable
from pathlib import Path
from typing import Any

import pytest

from config import RunConfig

# Two amplitude levels of ten 256-sample chunks: 6 classes, 8 train / 2 test each
TINY_RUN: dict[str, Any] = {
    "chunk_len": 256,
    "chunks_per_class": 10,
    "amplitude_levels": [1.0, 2.0],
    "rank": 20,
    "components": 4,
    "seed": 1234,
}


@pytest.fixture
def tiny_config() -> Callable[..., RunConfig]:
    """Factory for small, fast run configurations."""

    def make(out: Path, **overrides: Any) -> RunConfig:
        return RunConfig(**{**TINY_RUN, "out": str(out), **overrides})

    return make
