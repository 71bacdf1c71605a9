"""Adaptive frame-length policy, minimum-input binary search, resampling."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .core import AudioClip, FramePolicy
from .errors import EmptyInput, NoValidSize


@dataclass
class FrameState:
    """Current analysis-window length under a FramePolicy."""

    current_len_samples: int
    policy: FramePolicy
    sample_rate_hz: int

    def __post_init__(self):
        lo = self.policy.min_frame_samples
        hi = self.policy.max_frame_samples(self.sample_rate_hz)
        if not lo <= self.current_len_samples <= hi:
            raise ValueError(
                f"current_len_samples {self.current_len_samples} outside [{lo}, {hi}]"
            )

    @classmethod
    def initial(cls, policy: FramePolicy, sample_rate_hz: int) -> "FrameState":
        return cls(policy.min_frame_samples, policy, sample_rate_hz)


def min_valid_input(oracle: Callable[[int], bool], lo: int, hi: int) -> int:
    """Smallest n in [lo, hi] accepted by a monotone validity oracle.

    Uses at most ceil(log2(hi - lo + 1)) probes when any probe succeeds;
    one extra verification probe is spent only to diagnose an oracle that
    is false everywhere, which raises NoValidSize.
    """
    if lo > hi:
        raise ValueError("lo must not exceed hi")
    if lo < 1:
        raise ValueError("lo must be positive")
    saw_valid = False
    low, high = lo, hi
    while low < high:
        mid = (low + high) // 2
        if oracle(mid):
            saw_valid = True
            high = mid
        else:
            low = mid + 1
    if not saw_valid and not oracle(low):
        raise NoValidSize(f"no valid input size in [{lo}, {hi}]")
    return low


def next_frame_len(state: FrameState, last_raw_p: float) -> FrameState:
    """Grow the window after a confident frame, else reset to the minimum.

    Growth triggers on strict inequality against the raw (unsmoothed)
    probability; the length is capped at the policy maximum.
    """
    policy = state.policy
    if last_raw_p > policy.growth_threshold:
        step = int(round(policy.growth_step_s * state.sample_rate_hz))
        new_len = min(
            state.current_len_samples + step,
            policy.max_frame_samples(state.sample_rate_hz),
        )
    else:
        new_len = policy.min_frame_samples
    return replace(state, current_len_samples=new_len)


def resample_linear(clip: AudioClip, target_hz: int) -> AudioClip:
    """Linear-interpolation resample; identity when rates already match."""
    if len(clip.samples) == 0:
        raise EmptyInput("cannot resample an empty clip")
    if target_hz <= 0:
        raise ValueError("target_hz must be positive")
    if target_hz == clip.sample_rate_hz:
        return AudioClip(clip.samples.copy(), clip.sample_rate_hz)
    src = np.asarray(clip.samples, dtype=np.float64)
    n_out = int(round(len(src) * target_hz / clip.sample_rate_hz))
    if n_out < 1:
        n_out = 1
    t_src = np.arange(len(src)) / clip.sample_rate_hz
    t_dst = np.arange(n_out) / target_hz
    out = np.interp(t_dst, t_src, src)
    return AudioClip(out.astype(np.float32), target_hz)
