"""Pluggable classifier backends and the external-process wire protocol.

Wire format (stdio pipes or TCP, little-endian throughout):

    request:  u32 sample count N, then N float32 samples
    response: one float32 probability in [0, 1]

A backend signals "input too short to process" during size probing by
responding NaN; any response outside [0, 1] (NaN included) raised through
the scoring path is a ProtocolError. ``python -m sirenedge.stub_backend``
is the reference stub implementation for integration tests.
"""

from __future__ import annotations

import math
import os
import select
import shlex
import socket
import struct
import subprocess
import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    BackendError,
    BackendTimeout,
    InputTooShort,
    NoValidSize,
    ProtocolError,
)
from .framing import min_valid_input

DEFAULT_TIMEOUT_S = 2.0
PROBE_HI_DEFAULT = 320000  # 10 s at 32 kHz


def serialize_request(frame) -> bytes:
    x = np.asarray(frame, dtype="<f4")
    return struct.pack("<I", len(x)) + x.tobytes()


def parse_request(buf: bytes) -> np.ndarray:
    if len(buf) < 4:
        raise ProtocolError("request shorter than its length prefix")
    (n,) = struct.unpack_from("<I", buf, 0)
    if len(buf) != 4 + 4 * n:
        raise ProtocolError(f"request length {len(buf)} != 4 + 4*{n}")
    return np.frombuffer(buf, dtype="<f4", count=n, offset=4).copy()


def serialize_response(p: float) -> bytes:
    return struct.pack("<f", p)


def parse_response(buf: bytes) -> float:
    if len(buf) != 4:
        raise ProtocolError(f"response must be 4 bytes, got {len(buf)}")
    (p,) = struct.unpack("<f", buf)
    return p


@dataclass
class DspDetectorConfig:
    """Reference FM-siren detector parameters."""

    fft_size: int = 1024
    hop: int = 512
    band_hz: tuple[float, float] = (500.0, 2000.0)
    mod_depth_min_hz: float = 50.0
    sample_rate_hz: int = 32000

    def __post_init__(self):
        if self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two")
        lo, hi = self.band_hz
        if not 0 < lo < hi <= self.sample_rate_hz / 2:
            raise ValueError("band_hz must lie within (0, Nyquist]")


def dsp_reference_score(cfg: DspDetectorConfig, frame) -> float:
    """Deterministic siren likelihood from band energy and peak-frequency swing.

    score = clamp(r * m, 0, 1) with r the in-band fraction of total spectral
    energy and m = min(1, std(per-frame peak frequency) / mod_depth_min_hz).
    The m term rejects steady tones, the r term rejects broadband noise.
    """
    x = np.asarray(frame, dtype=np.float64)
    if len(x) < 2 * cfg.fft_size:
        raise InputTooShort(
            f"frame of {len(x)} samples < 2*fft_size = {2 * cfg.fft_size}"
        )
    window = np.hanning(cfg.fft_size)
    n_frames = 1 + (len(x) - cfg.fft_size) // cfg.hop
    freqs = np.fft.rfftfreq(cfg.fft_size, d=1.0 / cfg.sample_rate_hz)
    lo, hi = cfg.band_hz
    band = (freqs >= lo) & (freqs <= hi)

    total_energy = 0.0
    band_energy = 0.0
    peaks = np.empty(n_frames)
    for i in range(n_frames):
        seg = x[i * cfg.hop:i * cfg.hop + cfg.fft_size] * window
        power = np.abs(np.fft.rfft(seg)) ** 2
        total_energy += power.sum()
        band_power = power[band]
        band_energy += band_power.sum()
        peaks[i] = freqs[band][int(np.argmax(band_power))]

    if total_energy <= 1e-12:
        return 0.0
    r = band_energy / total_energy
    m = min(1.0, float(np.std(peaks)) / cfg.mod_depth_min_hz)
    return float(min(max(r * m, 0.0), 1.0))


class DspDetector:
    """Self-contained scoring backend; lets the engine run with no model."""

    def __init__(self, cfg: DspDetectorConfig | None = None):
        self.cfg = cfg or DspDetectorConfig()

    def min_input_samples(self) -> int:
        return 2 * self.cfg.fft_size

    def score(self, frame) -> float:
        if len(frame) < self.min_input_samples():
            raise InputTooShort(
                f"frame of {len(frame)} samples < minimum {self.min_input_samples()}"
            )
        return dsp_reference_score(self.cfg, frame)

    def close(self) -> None:
        pass


def _deadline(timeout_s: float) -> float:
    return time.monotonic() + timeout_s


class _PipeTransport:
    """Length-framed exchange over a child process's stdio."""

    def __init__(self, argv: list[str]):
        try:
            self.proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        except OSError as exc:
            raise BackendError(f"cannot spawn backend {argv!r}: {exc}") from exc
        os.set_blocking(self.proc.stdin.fileno(), False)
        os.set_blocking(self.proc.stdout.fileno(), False)

    def roundtrip(self, payload: bytes, deadline: float) -> bytes:
        self._write_all(payload, deadline)
        return self._read_exact(4, deadline)

    def _write_all(self, data: bytes, deadline: float) -> None:
        fd = self.proc.stdin.fileno()
        view = memoryview(data)
        while view:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BackendTimeout("timed out writing request")
            _, writable, _ = select.select([], [fd], [], remaining)
            if not writable:
                continue
            try:
                sent = os.write(fd, view)
            except BrokenPipeError as exc:
                raise BackendError("backend process closed its stdin") from exc
            view = view[sent:]

    def _read_exact(self, n: int, deadline: float) -> bytes:
        fd = self.proc.stdout.fileno()
        buf = b""
        while len(buf) < n:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BackendTimeout("timed out waiting for response")
            readable, _, _ = select.select([fd], [], [], remaining)
            if not readable:
                continue
            chunk = os.read(fd, n - len(buf))
            if not chunk:
                raise BackendError("backend process closed its stdout")
            buf += chunk
        return buf

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=1.0)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass


class _TcpTransport:
    """Length-framed exchange over a TCP connection."""

    def __init__(self, address: str):
        host, _, port = address.rpartition(":")
        try:
            self.sock = socket.create_connection((host or "127.0.0.1", int(port)), timeout=DEFAULT_TIMEOUT_S)
        except (OSError, ValueError) as exc:
            raise BackendError(f"cannot connect to {address}: {exc}") from exc

    def roundtrip(self, payload: bytes, deadline: float) -> bytes:
        self.sock.settimeout(max(deadline - time.monotonic(), 0.001))
        try:
            self.sock.sendall(payload)
            buf = b""
            while len(buf) < 4:
                self.sock.settimeout(max(deadline - time.monotonic(), 0.001))
                chunk = self.sock.recv(4 - len(buf))
                if not chunk:
                    raise BackendError("backend closed the connection")
                buf += chunk
            return buf
        except socket.timeout as exc:
            raise BackendTimeout("timed out talking to TCP backend") from exc
        except OSError as exc:
            raise BackendError(f"TCP backend failed: {exc}") from exc

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class ExternalBackend:
    """Bit-exact adapter to a model process speaking the wire protocol.

    Takes either a shell ``command`` (spawned, stdio framing) or a
    ``tcp_address`` ("host:port"). The minimum input size is probed once
    with zero-filled frames via binary search and cached.
    """

    def __init__(self, command: str | None = None, tcp_address: str | None = None,
                 timeout_s: float = DEFAULT_TIMEOUT_S, probe_lo: int = 1,
                 probe_hi: int = PROBE_HI_DEFAULT):
        if (command is None) == (tcp_address is None):
            raise ValueError("exactly one of command / tcp_address required")
        self.timeout_s = timeout_s
        self.probe_lo = probe_lo
        self.probe_hi = probe_hi
        self._min_input: int | None = None
        if command is not None:
            self._transport = _PipeTransport(shlex.split(command))
        else:
            self._transport = _TcpTransport(tcp_address)

    def _exchange(self, frame) -> float:
        payload = serialize_request(frame)
        raw = self._transport.roundtrip(payload, _deadline(self.timeout_s))
        return parse_response(raw)

    def score(self, frame) -> float:
        if len(frame) < self.min_input_samples():
            raise InputTooShort(
                f"frame of {len(frame)} samples < probed minimum {self._min_input}"
            )
        p = self._exchange(frame)
        if not (0.0 <= p <= 1.0):  # NaN fails this check too
            raise ProtocolError(f"backend probability {p!r} outside [0, 1]")
        return float(p)

    def min_input_samples(self) -> int:
        if self._min_input is None:
            def oracle(n: int) -> bool:
                # NaN is the protocol's "cannot process this size" signal;
                # any other value means the size was accepted.
                p = self._exchange(np.zeros(n, dtype=np.float32))
                return not math.isnan(p)

            try:
                self._min_input = min_valid_input(oracle, self.probe_lo, self.probe_hi)
            except NoValidSize:
                raise NoValidSize(
                    f"backend rejected every input size up to {self.probe_hi}"
                ) from None
        return self._min_input

    def close(self) -> None:
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_backend(descriptor: str, *, dsp_config: DspDetectorConfig | None = None,
                 timeout_s: float = DEFAULT_TIMEOUT_S, probe_lo: int = 1,
                 probe_hi: int = PROBE_HI_DEFAULT):
    """Build a backend from a CLI descriptor: dsp | external:CMD | tcp:ADDR."""
    if descriptor == "dsp":
        return DspDetector(dsp_config)
    if descriptor.startswith("external:"):
        return ExternalBackend(command=descriptor[len("external:"):],
                               timeout_s=timeout_s, probe_lo=probe_lo, probe_hi=probe_hi)
    if descriptor.startswith("tcp:"):
        return ExternalBackend(tcp_address=descriptor[len("tcp:"):],
                               timeout_s=timeout_s, probe_lo=probe_lo, probe_hi=probe_hi)
    raise ValueError(f"unknown backend descriptor {descriptor!r}")
