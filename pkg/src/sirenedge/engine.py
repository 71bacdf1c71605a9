"""Producer/consumer inference pipeline over the ring buffer.

The producer writes fixed-duration chunks from the audio source into the
ring buffer (wall-clock paced in realtime mode). The consumer fires one
inference per hop tick: tick k becomes due once (k+1)*hop samples exist,
reads the most recent current-frame-length window, scores it, advances the
decision machine, then adapts the frame length. Records are stamped on the
hop grid: t_start_s = k*hop/rate is the start of the tick's newest audio,
so timestamps increase by exactly one hop while frame_len_samples tracks
the (possibly grown) analysis window.

Simulation mode runs both roles in lockstep on the calling thread, which
makes results bit-for-bit reproducible; wall-clock fields are zeroed there
for the same reason. Realtime mode uses one producer thread plus the
calling thread as consumer.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from queue import Empty, SimpleQueue

import numpy as np

from .core import AudioClip, DecisionConfig, FramePolicy, InferenceRecord
from .decision import ACTIVE, DecisionState
from .errors import BackendError, InputTooShort
from .framing import FrameState, next_frame_len
from .ringbuf import RingBuffer

DIAG_EVERY_TICKS = 16
_PRODUCER_IDLE_S = 0.01
_CONSUMER_POLL_S = 0.25


@dataclass
class SessionConfig:
    frame_policy: FramePolicy = field(default_factory=FramePolicy)
    decision: DecisionConfig = field(default_factory=DecisionConfig)
    sample_rate_hz: int = 32000
    buffer_capacity_s: float = 10.0
    realtime: bool = False
    chunk_s: float = 0.1

    def __post_init__(self):
        if self.buffer_capacity_s < self.frame_policy.max_frame_s:
            raise ValueError("buffer capacity must cover the maximum frame")
        if self.chunk_s <= 0:
            raise ValueError("chunk_s must be positive")


@dataclass
class SessionResult:
    records: list[InferenceRecord]
    events: list
    frames_attempted: int
    frames_succeeded: int
    realtime_factor: float
    error: str | None = None


class _SourceQueue:
    """Sequential chunk reader over queued clips; thread-compatible."""

    def __init__(self, chunk_samples: int):
        self.chunk_samples = chunk_samples
        self._clips: list[np.ndarray] = []
        self._pos = 0
        self._lock = threading.Lock()

    def append(self, clip: AudioClip) -> None:
        with self._lock:
            self._clips.append(np.asarray(clip.samples, dtype=np.float32))

    def next_chunk(self) -> np.ndarray | None:
        with self._lock:
            while self._clips:
                clip = self._clips[0]
                if self._pos < len(clip):
                    chunk = clip[self._pos:self._pos + self.chunk_samples]
                    self._pos += len(chunk)
                    return chunk
                self._clips.pop(0)
                self._pos = 0
            return None


class EngineSession:
    """One detection session; construct, optionally attach telemetry, run().

    ``telemetry`` is any object with a ``publish(dict)`` method that never
    blocks; control mutations arrive through the command queue and are
    applied between frames only.
    """

    def __init__(self, cfg: SessionConfig, source, backend, telemetry=None,
                 serve_forever: bool = False):
        self.cfg = cfg
        self.backend = backend
        self.telemetry = telemetry
        self.serve_forever = serve_forever
        self.buf = RingBuffer(int(round(cfg.buffer_capacity_s * cfg.sample_rate_hz)))
        self._chunk_samples = max(1, int(round(cfg.chunk_s * cfg.sample_rate_hz)))
        self._source = _SourceQueue(self._chunk_samples)
        if source is not None:
            if isinstance(source, AudioClip):
                if source.sample_rate_hz != cfg.sample_rate_hz:
                    raise ValueError("source sample rate must match the session; resample first")
                self._source.append(source)
            else:
                for clip in source:
                    self._source.append(clip)
        self._commands: SimpleQueue = SimpleQueue()
        self._shutdown = threading.Event()
        self._paused = threading.Event()
        self._producer_done = threading.Event()
        # consumer state
        self._frame_state = FrameState.initial(cfg.frame_policy, cfg.sample_rate_hz)
        self._decision = DecisionState(cfg.decision)
        self._records: list[InferenceRecord] = []
        self._tick = 0
        self._succeeded = 0
        self._busy_s = 0.0
        self._error: str | None = None

    # -- control surface (thread-safe; effects land between frames) -----

    def post_command(self, name: str, value=None) -> None:
        self._commands.put((name, value))

    def shutdown(self) -> None:
        """Request termination; idempotent, unblocks both roles."""
        self._shutdown.set()
        self.buf.shutdown()

    # -- internals -------------------------------------------------------

    def _publish(self, msg: dict) -> None:
        if self.telemetry is not None:
            self.telemetry.publish(msg)

    def _apply_commands(self) -> None:
        while True:
            try:
                name, value = self._commands.get_nowait()
            except Empty:
                return
            if name == "decision_threshold":
                self._decision.config.event_threshold = value
            elif name == "growth_threshold":
                self.cfg.frame_policy.growth_threshold = value
            elif name == "growth_step":
                self.cfg.frame_policy.growth_step_s = value
            elif name == "load_clip":
                self._source.append(value)
            elif name == "start":
                self._paused.clear()
            elif name == "stop":
                self._paused.set()

    def _produce(self) -> None:
        rate = self.cfg.sample_rate_hz
        next_wall = time.monotonic()
        try:
            while not self._shutdown.is_set():
                if self._paused.is_set():
                    time.sleep(_PRODUCER_IDLE_S)
                    next_wall = time.monotonic()
                    continue
                chunk = self._source.next_chunk()
                if chunk is None:
                    if self.serve_forever:
                        time.sleep(_PRODUCER_IDLE_S)
                        next_wall = time.monotonic()
                        continue
                    break
                self.buf.write(chunk)
                next_wall += len(chunk) / rate
                delay = next_wall - time.monotonic()
                if delay > 0:
                    self._shutdown.wait(delay)
        finally:
            self._producer_done.set()
            self.buf.shutdown()  # wake the consumer; no more data signals

    def _process_tick(self) -> bool:
        """Score the due tick; returns False when the session must abort."""
        cfg = self.cfg
        hop = cfg.frame_policy.hop_samples
        rate = cfg.sample_rate_hz
        k = self._tick
        frame = self.buf.read_latest(self._frame_state.current_len_samples)
        t0 = time.perf_counter()
        try:
            raw_p = self.backend.score(frame)
        except (BackendError, InputTooShort) as exc:
            self._error = f"{type(exc).__name__}: {exc}"
            self._publish({"type": "error", "msg": self._error})
            return False
        latency = time.perf_counter() - t0

        record = InferenceRecord(
            t_start_s=k * hop / rate,
            frame_len_samples=self._frame_state.current_len_samples,
            raw_p=raw_p,
            wall_latency_s=latency if cfg.realtime else 0.0,
        )
        transition = self._decision.step(record)
        self._records.append(record)
        self._busy_s += latency
        self._tick += 1
        if cfg.realtime:
            on_time = self.buf.total_written < (k + 2) * hop
            self._succeeded += 1 if on_time else 0
        else:
            self._succeeded += 1

        self._publish({
            "type": "score",
            "t": record.t_start_s,
            "p": record.raw_p,
            "smoothed": record.smoothed_p,
            "frame_ms": int(round(record.frame_len_samples / rate * 1000)),
        })
        if transition is not None:
            self._publish({"type": "event", "state": transition.kind, "t": transition.t})
        if self._tick % DIAG_EVERY_TICKS == 0:
            self._publish(self._diag_msg())

        self._frame_state = next_frame_len(self._frame_state, raw_p)
        return True

    def _diag_msg(self) -> dict:
        return {
            "type": "diag",
            "rtf": self._realtime_factor(),
            "frames_ok": self._succeeded,
            "frames_total": self._tick,
        }

    def _realtime_factor(self) -> float:
        if not self.cfg.realtime or self._busy_s <= 0.0:
            return 0.0
        hop_s = self.cfg.frame_policy.hop_samples / self.cfg.sample_rate_hz
        return self._tick * hop_s / self._busy_s

    def _due(self) -> bool:
        hop = self.cfg.frame_policy.hop_samples
        return (self._tick + 1) * hop <= self.buf.total_written

    def _consume(self) -> None:
        while True:
            self._apply_commands()
            if self._due():
                if self._shutdown.is_set():
                    return  # external kill: leave backlog unprocessed
                if not self._process_tick():
                    return
                continue
            if self._producer_done.is_set() or self._shutdown.is_set():
                return
            self.buf.await_new_data(timeout=_CONSUMER_POLL_S)

    def _run_lockstep(self) -> None:
        while not self._shutdown.is_set():
            self._apply_commands()
            chunk = self._source.next_chunk()
            if chunk is None:
                break
            self.buf.write(chunk)
            while self._due() and not self._shutdown.is_set():
                if not self._process_tick():
                    return
        self._apply_commands()

    def run(self) -> SessionResult:
        """Run to completion (or shutdown) and assemble the result."""
        if not self._shutdown.is_set():
            if self.cfg.realtime:
                producer = threading.Thread(target=self._produce, name="sirenedge-producer")
                producer.start()
                try:
                    self._consume()
                finally:
                    self._shutdown.set()
                    self.buf.shutdown()
                    producer.join(timeout=2.0)
            else:
                self._run_lockstep()
        return self.collect_result()

    def collect_result(self) -> SessionResult:
        """Assemble the result from completed frames; safe after shutdown."""
        hop = self.cfg.frame_policy.hop_samples
        total = self.buf.total_written
        end_t = total / self.cfg.sample_rate_hz
        was_active = self._decision.phase == ACTIVE
        events = self._decision.finalize(end_t)
        if was_active:
            self._publish({"type": "event", "state": "offset", "t": end_t})
        result = SessionResult(
            records=self._records,
            events=events,
            frames_attempted=int(total // hop),
            frames_succeeded=self._succeeded,
            realtime_factor=self._realtime_factor(),
            error=self._error,
        )
        self._publish(self._diag_msg())
        return result


def run_session(cfg: SessionConfig, source, backend, telemetry=None) -> SessionResult:
    """Convenience wrapper: build a session, run it, return the result."""
    return EngineSession(cfg, source, backend, telemetry=telemetry).run()
