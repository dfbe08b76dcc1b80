#!/usr/bin/env python3
"""
Synthetic bearing fault signals for Eigenspec.
Impulse-train fault model with exponentially decaying resonance bursts,
plus additive white Gaussian noise at a target SNR.
"""

import logging
import math

import numpy as np

from errors import InvalidArgumentError, UndefinedSnrError
from models import (
    FAULT_CODE_FOR_TYPE,
    BearingSpec,
    ClassLabel,
    FaultCode,
    FaultSimParams,
    FaultType,
    Signal,
)

logger = logging.getLogger(__name__)

# exp(-x) is exactly 0.0 in float64 beyond this exponent
_EXP_UNDERFLOW = 746.0


def fault_frequency(spec: BearingSpec, fault: FaultType, shaft_speed: float) -> float:
    """Characteristic fault frequency in Hz for a shaft speed in rev/min.

    Rolling-element faults repeat at twice the ball spin frequency.
    """
    if shaft_speed <= 0:
        raise InvalidArgumentError("shaft_speed must be positive")

    shaft_hz = shaft_speed / 60.0
    if fault is FaultType.INNER_RACE:
        return spec.bpfi_mult * shaft_hz
    if fault is FaultType.OUTER_RACE:
        return spec.bpfo_mult * shaft_hz
    if fault is FaultType.ROLLING_ELEMENT:
        return 2.0 * spec.bsf_mult * shaft_hz
    raise InvalidArgumentError(f"Unknown fault type: {fault!r}")


def simulate_fault_signal(params: FaultSimParams, spec: BearingSpec) -> Signal:
    """Superpose A_j * h(t - jT) for onsets jT, j = 0..J-1, J = floor(duration / T)."""
    if params.resonance_fn >= params.sample_rate / 2:
        raise InvalidArgumentError("Resonance frequency must be below Nyquist")

    fs = params.sample_rate
    # duration x fs may land just below a whole sample count
    n_samples = int(math.floor(params.duration * fs + 1e-6))
    if n_samples < 1:
        raise InvalidArgumentError("duration x sample_rate yields no samples")

    period = 1.0 / fault_frequency(spec, params.fault_type, params.shaft_speed)
    n_impulses = int(math.floor(params.duration / period))

    rng = np.random.default_rng(params.rng_seed)
    low = params.amplitude_mean * (1.0 - params.amplitude_jitter_frac)
    high = params.amplitude_mean * (1.0 + params.amplitude_jitter_frac)
    amplitudes = rng.uniform(low, high, size=n_impulses)

    samples = np.zeros(n_samples)
    tail_len = int(math.ceil(_EXP_UNDERFLOW / params.decay_beta * fs)) + 1
    omega = 2.0 * np.pi * params.resonance_fn

    for j, amplitude in enumerate(amplitudes):
        onset = j * period
        # first sample strictly after the onset; h(0) = 0 anyway
        start = int(math.floor(onset * fs)) + 1
        if start >= n_samples:
            break
        stop = min(n_samples, start + tail_len)
        tau = np.maximum(np.arange(start, stop) / fs - onset, 0.0)
        samples[start:stop] += (
            amplitude * np.exp(-params.decay_beta * tau) * np.sin(omega * tau)
        )

    label = ClassLabel(
        FAULT_CODE_FOR_TYPE[params.fault_type], _severity(params.amplitude_mean)
    )
    logger.debug(
        f"Simulated {label}: {n_impulses} impulses, T={period * 1e3:.3f} ms, "
        f"{n_samples} samples"
    )
    return Signal(samples=samples, sample_rate=fs, label=label)


def simulate_baseline_signal(
    n_samples: int, sample_rate: float, rng_seed: int, level: float = 1.0
) -> Signal:
    """Fault-free record: unit-variance white noise scaled by level."""
    if n_samples < 1 or level <= 0:
        raise InvalidArgumentError("Baseline needs n_samples >= 1 and level > 0")
    rng = np.random.default_rng(rng_seed)
    samples = level * rng.standard_normal(n_samples)
    return Signal(
        samples=samples, sample_rate=sample_rate, label=ClassLabel(FaultCode.NORMAL)
    )


def add_awgn(sig: Signal, snr_db: float, rng_seed: int) -> Signal:
    """Add white Gaussian noise with variance = mean(s^2) / 10^(snr_db / 10)."""
    power = float(np.mean(np.square(sig.samples)))
    if power == 0.0:
        raise UndefinedSnrError("SNR is undefined for an all-zero signal")

    noise_power = power / 10.0 ** (snr_db / 10.0)
    rng = np.random.default_rng(rng_seed)
    noise = rng.standard_normal(sig.samples.size) * math.sqrt(noise_power)
    return Signal(
        samples=sig.samples + noise, sample_rate=sig.sample_rate, label=sig.label
    )


def measured_snr_db(clean: np.ndarray, noisy: np.ndarray) -> float:
    """Empirical SNR of noisy against its clean reference."""
    noise = noisy - clean
    return float(10.0 * np.log10(np.mean(clean**2) / np.mean(noise**2)))


def _severity(amplitude_mean: float) -> str:
    if float(amplitude_mean).is_integer():
        return str(int(amplitude_mean))
    return f"{amplitude_mean:g}"
