"""Reference stub backend speaking the scoring wire protocol.

Serves as the integration-test model process and documents the protocol
for real model hosts. Frames shorter than --min get a NaN response (the
"cannot process this size" probe signal).

    python -m sirenedge.stub_backend [--min 1] [--score 0.5]
                                     [--mode const|first|mean]
                                     [--sleep 0.0] [--tcp PORT]

Modes: const replies --score, first echoes the first sample, mean replies
the frame mean. stdio framing by default; --tcp serves one connection.
"""

from __future__ import annotations

import argparse
import math
import socket
import struct
import sys
import time


def _respond(frame_bytes: bytes, n: int, args) -> bytes:
    if args.sleep > 0:
        time.sleep(args.sleep)
    if n < args.min:
        return struct.pack("<f", math.nan)
    if args.mode == "const":
        value = args.score
    elif args.mode == "first":
        (value,) = struct.unpack_from("<f", frame_bytes, 0)
    else:  # mean
        total = 0.0
        for i in range(n):
            (s,) = struct.unpack_from("<f", frame_bytes, 4 * i)
            total += s
        value = total / n if n else 0.0
    return struct.pack("<f", value)


def _read_exact(read, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = read(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def _serve(read, write, args) -> None:
    while True:
        header = _read_exact(read, 4)
        if header is None:
            return
        (n,) = struct.unpack("<I", header)
        body = _read_exact(read, 4 * n)
        if body is None:
            return
        write(_respond(body, n, args))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--min", type=int, default=1)
    parser.add_argument("--score", type=float, default=0.5)
    parser.add_argument("--mode", choices=["const", "first", "mean"], default="const")
    parser.add_argument("--sleep", type=float, default=0.0)
    parser.add_argument("--tcp", type=int, default=None)
    args = parser.parse_args(argv)

    if args.tcp is not None:
        server = socket.create_server(("127.0.0.1", args.tcp))
        print(f"listening on 127.0.0.1:{server.getsockname()[1]}", flush=True)
        conn, _ = server.accept()
        with conn:
            def write(buf: bytes) -> None:
                conn.sendall(buf)
            _serve(conn.recv, write, args)
        server.close()
        return 0

    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer

    def write(buf: bytes) -> None:
        stdout.write(buf)
        stdout.flush()

    _serve(stdin.read1 if hasattr(stdin, "read1") else stdin.read, write, args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
