"""Event-decision state machine: smoothing plus consecutive-frame hysteresis.

Per-frame probabilities are passed through a fixed-size moving average and
then through a two-phase validator: an onset is issued once
``consecutive_required`` smoothed values in a row reach the event threshold,
an offset once ``release_required`` values in a row fall below it. Onset and
offset timestamps are the start of the first frame of the validating run.
"""

from __future__ import annotations

from collections import deque
from typing import NamedTuple

from .core import DecisionConfig, DetectionEvent, InferenceRecord
from .errors import OrderViolation

IDLE = "IDLE"
ACTIVE = "ACTIVE"


class Transition(NamedTuple):
    kind: str  # "onset" | "offset"
    t: float


class DecisionState:
    def __init__(self, config: DecisionConfig):
        self.config = config
        self.recent_p: deque[float] = deque(maxlen=config.smoothing_window)
        self.consec_above = 0
        self.consec_below = 0
        self.phase = IDLE
        self.pending_onset_t: float | None = None
        self._last_t: float | None = None
        self._frame_index = -1
        self._run_start_index: int | None = None
        self._run_peak = 0.0
        self._open_onset_t: float | None = None
        self._open_start_index: int | None = None
        self._open_peak = 0.0
        self._pending_offset_t: float | None = None
        self._pending_offset_index: int | None = None
        self._events: list[DetectionEvent] = []

    def smooth(self, raw_p: float) -> float:
        """Push raw_p and return the moving average (short mean in warm-up)."""
        self.recent_p.append(raw_p)
        return sum(self.recent_p) / len(self.recent_p)

    def step(self, record: InferenceRecord) -> Transition | None:
        """Advance the machine by one record; returns an emitted transition.

        The smoothed probability is written back into the record. Records
        must arrive strictly ordered in t_start_s.
        """
        if self._last_t is not None and record.t_start_s <= self._last_t:
            raise OrderViolation(
                f"record at t={record.t_start_s} not after t={self._last_t}"
            )
        self._last_t = record.t_start_s
        self._frame_index += 1

        smoothed = self.smooth(record.raw_p)
        record.smoothed_p = smoothed
        threshold = self.config.event_threshold

        if self.phase == IDLE:
            if smoothed >= threshold:
                if self.consec_above == 0:
                    self.pending_onset_t = record.t_start_s
                    self._run_start_index = self._frame_index
                    self._run_peak = smoothed
                else:
                    self._run_peak = max(self._run_peak, smoothed)
                self.consec_above += 1
                if self.consec_above >= self.config.consecutive_required:
                    self.phase = ACTIVE
                    self.consec_above = 0
                    self._open_onset_t = self.pending_onset_t
                    self._open_start_index = self._run_start_index
                    self._open_peak = self._run_peak
                    self.pending_onset_t = None
                    return Transition("onset", self._open_onset_t)
            else:
                self.consec_above = 0
                self.pending_onset_t = None
        else:
            self._open_peak = max(self._open_peak, smoothed)
            if smoothed < threshold:
                if self.consec_below == 0:
                    self._pending_offset_t = record.t_start_s
                    self._pending_offset_index = self._frame_index
                self.consec_below += 1
                if self.consec_below >= self.config.release_required:
                    self.phase = IDLE
                    self.consec_below = 0
                    offset_t = self._pending_offset_t
                    self._close_event(offset_t, self._pending_offset_index)
                    self._pending_offset_t = None
                    return Transition("offset", offset_t)
            else:
                self.consec_below = 0
                self._pending_offset_t = None

        return None

    def finalize(self, end_t: float) -> list[DetectionEvent]:
        """Close any open event at end_t and return all completed events."""
        if self.phase == ACTIVE:
            self._close_event(end_t, self._frame_index + 1)
            self.phase = IDLE
            self.consec_below = 0
        return list(self._events)

    def _close_event(self, offset_t: float, offset_index: int) -> None:
        self._events.append(DetectionEvent(
            onset_s=self._open_onset_t,
            offset_s=offset_t,
            peak_p=self._open_peak,
            n_frames=max(1, offset_index - self._open_start_index),
        ))
        self._open_onset_t = None
        self._open_start_index = None
        self._open_peak = 0.0


def events_offline(raw_ps, t_starts, end_t: float, config: DecisionConfig):
    """Brute-force recomputation over a full probability sequence.

    Smooths the whole sequence, then extracts validated runs in a single
    offline pass. Kept structurally independent of DecisionState so it can
    serve as its test oracle; also the cheapest way to rescore a logged
    session at a different threshold.

    Returns (events, smoothed_sequence).
    """
    smoothed: list[float] = []
    window: deque[float] = deque(maxlen=config.smoothing_window)
    for p in raw_ps:
        window.append(p)
        smoothed.append(sum(window) / len(window))

    above = [s >= config.event_threshold for s in smoothed]
    n = len(above)
    events: list[DetectionEvent] = []
    i = 0
    while i < n:
        run = 0
        start = None
        while i < n:
            if above[i]:
                if run == 0:
                    start = i
                run += 1
                if run >= config.consecutive_required:
                    break
            else:
                run = 0
            i += 1
        if run < config.consecutive_required:
            break
        onset_idx = start

        i += 1
        run = 0
        off_start = None
        while i < n:
            if not above[i]:
                if run == 0:
                    off_start = i
                run += 1
                if run >= config.release_required:
                    break
            else:
                run = 0
            i += 1
        if run >= config.release_required:
            offset_t = t_starts[off_start]
            end_idx = off_start
            i += 1
        else:
            offset_t = end_t
            end_idx = n
        peak = max(smoothed[onset_idx:max(end_idx, onset_idx + 1)])
        events.append(DetectionEvent(
            onset_s=t_starts[onset_idx],
            offset_s=offset_t,
            peak_p=peak,
            n_frames=max(1, end_idx - onset_idx),
        ))
    return events, smoothed
