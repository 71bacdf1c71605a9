"""Domain types, WAV i/o, session logs, and ground-truth annotations.

Session logs are JSONL, one object per line:

    {"type": "meta",   "clip_id": str, "duration_s": float, "sample_rate_hz": int}
    {"type": "record", "t_start_s": float, "frame_len_samples": int,
                       "raw_p": float, "smoothed_p": float, "wall_latency_s": float}
    {"type": "event",  "onset_s": float, "offset_s": float,
                       "peak_p": float, "n_frames": int}

The meta line is optional and written only when a meta mapping is supplied.
Ground-truth annotations are CSV with header ``clip_id,onset_s,offset_s,ftp``.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IoError, ParseError, UnsupportedFormat

DEFAULT_SAMPLE_RATE_HZ = 32000


@dataclass
class AudioClip:
    """Mono PCM audio held as float32 amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass
class FramePolicy:
    """Adaptive analysis-window growth rules."""

    min_frame_samples: int = 9919
    growth_step_s: float = 0.4
    max_frame_s: float = 10.0
    growth_threshold: float = 0.6
    hop_samples: int | None = None  # defaults to min_frame_samples

    def __post_init__(self):
        if self.hop_samples is None:
            self.hop_samples = self.min_frame_samples
        if self.min_frame_samples < 1:
            raise ValueError("min_frame_samples must be positive")
        if self.growth_step_s < 0:
            raise ValueError("growth_step_s must be non-negative")
        if not 0.0 < self.growth_threshold < 1.0:
            raise ValueError("growth_threshold must lie in (0, 1)")
        if self.hop_samples < 1:
            raise ValueError("hop_samples must be >= 1")

    def max_frame_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.max_frame_s * sample_rate_hz))


@dataclass
class DecisionConfig:
    """Event-decision smoothing and hysteresis thresholds."""

    smoothing_window: int = 3
    consecutive_required: int = 3
    event_threshold: float = 0.5
    release_required: int | None = None  # defaults to consecutive_required

    def __post_init__(self):
        if self.release_required is None:
            self.release_required = self.consecutive_required
        if self.smoothing_window < 1:
            raise ValueError("smoothing_window must be >= 1")
        if self.consecutive_required < 1:
            raise ValueError("consecutive_required must be >= 1")
        if self.release_required < 1:
            raise ValueError("release_required must be >= 1")
        if not 0.0 < self.event_threshold < 1.0:
            raise ValueError("event_threshold must lie in (0, 1)")


@dataclass
class InferenceRecord:
    """One scored frame; t_start_s marks the hop-grid start of its newest audio."""

    t_start_s: float
    frame_len_samples: int
    raw_p: float
    smoothed_p: float = 0.0
    wall_latency_s: float = 0.0


@dataclass
class DetectionEvent:
    """Validated onset/offset pair produced by the decision state machine."""

    onset_s: float
    offset_s: float
    peak_p: float
    n_frames: int


@dataclass
class GroundTruthEvent:
    """Annotated reference event; ftp flags a suspected mis-annotation."""

    clip_id: str
    onset_s: float
    offset_s: float
    ftp: bool = False


def load_wav(path) -> AudioClip:
    """Read a RIFF/WAVE file (16-bit PCM or 32-bit float, any channel count).

    Multi-channel audio is averaged to mono. Integer PCM is scaled by
    2^(bits-1) so full negative scale maps exactly to -1.0. No resampling.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise ParseError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if size < 16:
                raise ParseError(f"{path}: fmt chunk truncated")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise ParseError(f"{path}: missing fmt or data chunk")

    codec, n_channels, rate, _byte_rate, _block_align, bits = fmt
    if n_channels < 1 or rate <= 0:
        raise ParseError(f"{path}: nonsensical fmt chunk")

    if codec == 1 and bits == 16:
        usable = len(data) - len(data) % 2  # tolerate a truncated final frame
        frames = np.frombuffer(data[:usable], dtype="<i2")
        scale = float(2 ** 15)
        samples = frames.astype(np.float32) / scale
    elif codec == 3 and bits == 32:
        usable = len(data) - len(data) % 4
        samples = np.frombuffer(data[:usable], dtype="<f4").astype(np.float32)
    else:
        raise UnsupportedFormat(
            f"{path}: unsupported codec {codec} / {bits}-bit (need PCM16 or float32)"
        )

    if n_channels > 1:
        usable = (len(samples) // n_channels) * n_channels
        samples = samples[:usable].reshape(-1, n_channels).mean(axis=1)
    return AudioClip(samples=samples.astype(np.float32), sample_rate_hz=rate)


def write_wav(clip: AudioClip, path, *, float32: bool = True) -> None:
    """Write a clip as mono WAV; float32 keeps samples bit-exact."""
    x = np.asarray(clip.samples, dtype=np.float32)
    if float32:
        payload = x.astype("<f4").tobytes()
        codec, bits = 3, 32
    else:
        payload = (np.clip(x, -1.0, 1.0) * 32767.0).astype("<i2").tobytes()
        codec, bits = 1, 16
    block = bits // 8
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, codec, 1, clip.sample_rate_hz,
        clip.sample_rate_hz * block, block, bits,
    )
    header += b"data" + struct.pack("<I", len(payload))
    try:
        Path(path).write_bytes(header + payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_session_log(records, events, path, *, meta: dict | None = None) -> None:
    """Append-style JSONL dump of a session; empty inputs give an empty file."""
    lines = []
    if meta is not None:
        lines.append(json.dumps({"type": "meta", **meta}))
    last_t = None
    for rec in records:
        if last_t is not None and rec.t_start_s <= last_t:
            raise ValueError("records must be sorted by t_start_s")
        last_t = rec.t_start_s
        lines.append(json.dumps({
            "type": "record",
            "t_start_s": rec.t_start_s,
            "frame_len_samples": rec.frame_len_samples,
            "raw_p": rec.raw_p,
            "smoothed_p": rec.smoothed_p,
            "wall_latency_s": rec.wall_latency_s,
        }))
    for ev in events:
        lines.append(json.dumps({
            "type": "event",
            "onset_s": ev.onset_s,
            "offset_s": ev.offset_s,
            "peak_p": ev.peak_p,
            "n_frames": ev.n_frames,
        }))
    try:
        Path(path).write_text("".join(line + "\n" for line in lines))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_session_log(path):
    """Inverse of write_session_log; returns (records, events, meta-or-None)."""
    records: list[InferenceRecord] = []
    events: list[DetectionEvent] = []
    meta = None
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{ln}: bad JSON: {exc}") from exc
        kind = obj.get("type")
        if kind == "meta":
            meta = {k: v for k, v in obj.items() if k != "type"}
        elif kind == "record":
            records.append(InferenceRecord(
                t_start_s=obj["t_start_s"],
                frame_len_samples=obj["frame_len_samples"],
                raw_p=obj["raw_p"],
                smoothed_p=obj["smoothed_p"],
                wall_latency_s=obj["wall_latency_s"],
            ))
        elif kind == "event":
            events.append(DetectionEvent(
                onset_s=obj["onset_s"],
                offset_s=obj["offset_s"],
                peak_p=obj["peak_p"],
                n_frames=obj["n_frames"],
            ))
        else:
            raise ParseError(f"{path}:{ln}: unknown line type {kind!r}")
    return records, events, meta


def read_annotations(path) -> list[GroundTruthEvent]:
    """Read ground-truth CSV (clip_id,onset_s,offset_s,ftp with ftp in {0,1})."""
    out: list[GroundTruthEvent] = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        required = {"clip_id", "onset_s", "offset_s", "ftp"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ParseError(f"{path}: header must contain {sorted(required)}")
        for ln, row in enumerate(reader, start=2):
            try:
                ev = GroundTruthEvent(
                    clip_id=row["clip_id"],
                    onset_s=float(row["onset_s"]),
                    offset_s=float(row["offset_s"]),
                    ftp=bool(int(row["ftp"])),
                )
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{ln}: bad row: {exc}") from exc
            if ev.offset_s <= ev.onset_s:
                raise ParseError(f"{path}:{ln}: offset must exceed onset")
            out.append(ev)
    return out


def write_annotations(events, path) -> None:
    """Write ground-truth events back out as CSV (test fixtures, round trips)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "onset_s", "offset_s", "ftp"])
        for ev in events:
            writer.writerow([ev.clip_id, ev.onset_s, ev.offset_s, int(ev.ftp)])
