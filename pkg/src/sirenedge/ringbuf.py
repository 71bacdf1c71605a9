"""Fixed-capacity circular audio buffer for one producer and one consumer.

The storage array is allocated once and never resized. Writes wrap around;
reads return the most recent N samples in chronological order without
consuming them. Data-available signalling is coalesced: any number of
unacknowledged writes collapse into a single pending flag, because the
consumer reads windows, not chunks.
"""

from __future__ import annotations

import threading
import time

import numpy as np

from .errors import ChunkTooLarge, WindowTooLarge


class RingBuffer:
    def __init__(self, capacity_samples: int):
        if capacity_samples < 1:
            raise ValueError("capacity_samples must be positive")
        self.capacity_samples = capacity_samples
        self._storage = np.zeros(capacity_samples, dtype=np.float32)
        self._write_pos = 0
        self._total_written = 0
        self._pending_writes = 0
        self._shutdown = False
        self._lock = threading.Lock()
        self._data_ready = threading.Condition(self._lock)

    @property
    def total_written(self) -> int:
        with self._lock:
            return self._total_written

    @property
    def write_pos(self) -> int:
        with self._lock:
            return self._write_pos

    def write(self, chunk) -> None:
        """Append samples with wrap-around and signal the consumer.

        Empty chunks leave the buffer untouched and emit no signal.
        """
        chunk = np.asarray(chunk, dtype=np.float32)
        n = len(chunk)
        if n > self.capacity_samples:
            raise ChunkTooLarge(
                f"chunk of {n} samples exceeds capacity {self.capacity_samples}"
            )
        if n == 0:
            return
        with self._lock:
            first = min(n, self.capacity_samples - self._write_pos)
            self._storage[self._write_pos:self._write_pos + first] = chunk[:first]
            if first < n:
                self._storage[:n - first] = chunk[first:]
            self._total_written += n
            self._write_pos = self._total_written % self.capacity_samples
            self._pending_writes += 1
            self._data_ready.notify_all()

    def read_latest(self, n: int) -> np.ndarray:
        """Return the last n samples written, oldest first.

        When fewer than n samples have ever been written the result is
        left-padded with zeros, so inference can start at stream onset.
        """
        if n > self.capacity_samples:
            raise WindowTooLarge(
                f"window of {n} samples exceeds capacity {self.capacity_samples}"
            )
        out = np.zeros(n, dtype=np.float32)
        if n == 0:
            return out
        with self._lock:
            avail = min(n, self._total_written)
            if avail == 0:
                return out
            start = (self._write_pos - avail) % self.capacity_samples
            first = min(avail, self.capacity_samples - start)
            out[n - avail:n - avail + first] = self._storage[start:start + first]
            if first < avail:
                out[n - avail + first:] = self._storage[:avail - first]
        return out

    def await_new_data(self, timeout: float | None = None) -> bool:
        """Block the consumer until unacknowledged writes exist.

        Returns True when new data is pending (and acknowledges all of it),
        False on shutdown or timeout. Pending data wins over shutdown so the
        consumer can drain before exiting.
        """
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._data_ready:
            while self._pending_writes == 0 and not self._shutdown:
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    break
                self._data_ready.wait(remaining)
            if self._pending_writes > 0:
                self._pending_writes = 0
                return True
            return False

    def shutdown(self) -> None:
        """Broadcast shutdown; wakes any waiter. Idempotent."""
        with self._data_ready:
            self._shutdown = True
            self._data_ready.notify_all()
