"""Deterministic wail/yelp siren synthesis and noise mixing for tests.

Both siren kinds share one phase-continuous FM law,

    f(t) = f_low + (f_high - f_low) * (1 + sin(2*pi*t/period)) / 2,

differing only in modulation period (wail ~5 s, yelp ~0.5 s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_SAMPLE_RATE_HZ, AudioClip
from .errors import ConfigError, DegenerateInput

WAIL_PERIOD_S = 5.0
YELP_PERIOD_S = 0.5


@dataclass
class SirenSpec:
    kind: str  # "wail" | "yelp"
    f_low_hz: float = 700.0
    f_high_hz: float = 1500.0
    period_s: float | None = None  # defaults by kind
    duration_s: float = 10.0
    amplitude: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("wail", "yelp"):
            raise ConfigError(f"unknown siren kind {self.kind!r}")
        if self.period_s is None:
            self.period_s = WAIL_PERIOD_S if self.kind == "wail" else YELP_PERIOD_S
        if self.period_s <= 0:
            raise ConfigError("period_s must be positive")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if not 0.0 < self.amplitude <= 1.0:
            raise ConfigError("amplitude must lie in (0, 1]")
        if not 0 < self.f_low_hz < self.f_high_hz:
            raise ConfigError("need 0 < f_low_hz < f_high_hz")


def synth_siren(spec: SirenSpec, sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ) -> AudioClip:
    """Phase-continuous FM tone following the spec's modulation law."""
    if spec.f_high_hz >= sample_rate_hz / 2:
        raise ConfigError("f_high_hz must stay below Nyquist")
    n = int(round(spec.duration_s * sample_rate_hz))
    t = np.arange(n, dtype=np.float64) / sample_rate_hz
    delta = spec.f_high_hz - spec.f_low_hz
    period = spec.period_s
    # phase = 2*pi * integral of f(t); the sine integrates to a raised cosine
    phase = 2.0 * math.pi * (
        spec.f_low_hz * t
        + delta * (t / 2.0 + (period / (4.0 * math.pi))
                   * (1.0 - np.cos(2.0 * math.pi * t / period)))
    )
    samples = spec.amplitude * np.sin(phase)
    return AudioClip(samples.astype(np.float32), sample_rate_hz)


def instantaneous_freq(spec: SirenSpec, t) -> np.ndarray:
    """Analytic frequency track; test oracle for the synthesized tone."""
    t = np.asarray(t, dtype=np.float64)
    delta = spec.f_high_hz - spec.f_low_hz
    return spec.f_low_hz + delta * (1.0 + np.sin(2.0 * math.pi * t / spec.period_s)) / 2.0


def white_noise(duration_s: float, sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ,
                seed: int = 0) -> AudioClip:
    """Seeded uniform noise in [-1, 1]; identical seeds give identical clips."""
    if duration_s <= 0:
        raise ConfigError("duration_s must be positive")
    n = int(round(duration_s * sample_rate_hz))
    rng = np.random.default_rng(seed)
    samples = rng.uniform(-1.0, 1.0, n).astype(np.float32)
    return AudioClip(samples, sample_rate_hz)


def mix_at_snr(signal: AudioClip, noise: AudioClip, snr_db: float) -> AudioClip:
    """Add noise rescaled to the requested SNR; the sum is clipped to [-1, 1].

    snr_db = +inf is the no-noise convention and returns the signal as-is.
    """
    if len(signal.samples) != len(noise.samples):
        raise DegenerateInput("signal and noise lengths differ")
    if signal.sample_rate_hz != noise.sample_rate_hz:
        raise DegenerateInput("signal and noise sample rates differ")
    if math.isinf(snr_db) and snr_db > 0:
        return AudioClip(signal.samples.copy(), signal.sample_rate_hz)
    s = signal.samples.astype(np.float64)
    n = noise.samples.astype(np.float64)
    p_signal = float(np.mean(s ** 2))
    p_noise = float(np.mean(n ** 2))
    if p_noise <= 0.0:
        raise DegenerateInput("noise has zero power but snr is finite")
    gain = math.sqrt(p_signal / (p_noise * 10.0 ** (snr_db / 10.0)))
    mixed = np.clip(s + gain * n, -1.0, 1.0)
    return AudioClip(mixed.astype(np.float32), signal.sample_rate_hz)


def siren_in_noise(spec: SirenSpec, onset_s: float, total_duration_s: float,
                   snr_db: float, sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ,
                   noise_seed: int = 0) -> AudioClip:
    """Siren segment embedded in continuous noise at a given segment SNR.

    The SNR is measured against the siren's power over its active span, not
    diluted by the silent remainder of the clip.
    """
    if onset_s < 0 or onset_s + spec.duration_s > total_duration_s:
        raise ConfigError("siren segment must fit inside the clip")
    rate = sample_rate_hz
    siren = synth_siren(spec, rate)
    noise = white_noise(total_duration_s, rate, seed=noise_seed)

    p_siren = float(np.mean(siren.samples.astype(np.float64) ** 2))
    p_noise = float(np.mean(noise.samples.astype(np.float64) ** 2))
    if math.isinf(snr_db) and snr_db > 0:
        gain = 0.0
    else:
        if p_noise <= 0.0:
            raise DegenerateInput("noise has zero power but snr is finite")
        gain = math.sqrt(p_siren / (p_noise * 10.0 ** (snr_db / 10.0)))

    out = noise.samples.astype(np.float64) * gain
    start = int(round(onset_s * rate))
    out[start:start + len(siren.samples)] += siren.samples.astype(np.float64)
    return AudioClip(np.clip(out, -1.0, 1.0).astype(np.float32), rate)
