#!/usr/bin/env python3
"""
Shared utility functions for Eigenspec.
Common helpers used across the application.
"""

import hashlib
import logging
import time
from collections.abc import Iterator
from contextlib import contextmanager
from typing import Optional

from config import settings

logger = logging.getLogger(__name__)


def setup_logging(debug_mode: Optional[bool] = None) -> None:
    """Configure the root logger once for CLI runs."""
    if debug_mode is None:
        debug_mode = settings.DEBUG_MODE

    logging.basicConfig(
        level=logging.DEBUG if debug_mode else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def log_debug(message: str, debug_mode: Optional[bool] = None) -> None:
    """Log debug messages if debug mode is enabled."""
    if debug_mode is None:
        debug_mode = settings.DEBUG_MODE

    if debug_mode:
        logger.debug(f"🔧 {message}")


def format_error_message(error: str, suggestions: Optional[list[str]] = None) -> str:
    """Format error message with optional suggestions."""
    message = f"❌ {error}"

    if suggestions:
        message += "\n💡 Suggestions:"
        for suggestion in suggestions:
            message += f"\n   • {suggestion}"

    return message


def derive_seed(master_seed: int, stage: str, index: int = 0) -> int:
    """Derive a 64-bit sub-seed from (master seed, stage name, index)."""
    digest = hashlib.blake2b(
        f"{master_seed}:{stage}:{index}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def sklearn_seed(seed: int) -> int:
    """Fold a 64-bit seed into the 32-bit range scikit-learn accepts."""
    return (seed ^ (seed >> 32)) & 0xFFFFFFFF


@contextmanager
def stage_timer(timings: dict[str, float], stage: str) -> Iterator[None]:
    """Record wall-clock milliseconds spent in a pipeline stage."""
    start = time.perf_counter()
    try:
        yield
    finally:
        timings[stage] = round((time.perf_counter() - start) * 1000.0, 3)
        logger.debug(f"Stage {stage} took {timings[stage]:.1f} ms")
