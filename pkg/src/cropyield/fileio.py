"""Shared on-disk conventions: FNV-1a checksums, seeded RNG streams, checkpoints.

Dataset and checkpoint files use the same skeleton: a text header line, text
metadata lines interleaved with raw little-endian float64 payloads, and a
trailing 8-byte little-endian FNV-1a checksum over every payload byte after
the header.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ChecksumMismatchError, MalformedHeaderError, TruncatedPayloadError

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

CHECKPOINT_MAGIC = "MTMSCK"


def fnv1a64(data: bytes, h: int = _FNV_OFFSET) -> int:
    """64-bit FNV-1a over ``data``; pass a previous digest to continue a stream."""
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def rng_for(seed: int, label: str) -> np.random.Generator:
    """Independent deterministic RNG stream named by ``label``."""
    return np.random.default_rng(np.random.SeedSequence([seed & _MASK64, fnv1a64(label.encode())]))


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedPayloadError(f"file ended inside {what}: wanted {n} bytes, got {len(buf)}")
    return buf


def _read_text_line(fh, what: str) -> bytes:
    """Read up to and including a newline; raw bytes returned for checksumming."""
    chunks = []
    while True:
        c = fh.read(1)
        if not c:
            raise TruncatedPayloadError(f"file ended inside {what}")
        chunks.append(c)
        if c == b"\n":
            return b"".join(chunks)


def save_checkpoint(path, tensors: dict) -> None:
    """Write named float64 arrays; names are sorted so output is byte-stable."""
    names = sorted(tensors)
    with open(path, "wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} v1 {len(names)}\n".encode())
        h = _FNV_OFFSET
        for name in names:
            arr = np.asarray(tensors[name], dtype=np.float64)
            meta = (name + " " + " ".join(str(d) for d in arr.shape) + "\n").encode()
            payload = arr.astype("<f8").tobytes()  # astype copies C-contiguous
            fh.write(meta)
            fh.write(payload)
            h = fnv1a64(meta, h)
            h = fnv1a64(payload, h)
        fh.write(struct.pack("<Q", h))


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        header = _read_text_line(fh, "checkpoint header")
        fields = header.decode(errors="replace").split()
        if len(fields) != 3 or fields[0] != CHECKPOINT_MAGIC or fields[1] != "v1":
            raise MalformedHeaderError(f"bad checkpoint header: {header!r}")
        try:
            count = int(fields[2])
        except ValueError:
            raise MalformedHeaderError(f"bad tensor count in header: {header!r}") from None
        tensors = {}
        h = _FNV_OFFSET
        for _ in range(count):
            meta = _read_text_line(fh, "tensor metadata")
            h = fnv1a64(meta, h)
            parts = meta.decode().split()
            name, shape = parts[0], tuple(int(d) for d in parts[1:])
            n = int(np.prod(shape)) if shape else 1
            payload = _read_exact(fh, n * 8, f"tensor {name!r}")
            h = fnv1a64(payload, h)
            tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
        stored = struct.unpack("<Q", _read_exact(fh, 8, "checksum"))[0]
        if stored != h:
            raise ChecksumMismatchError(
                f"checkpoint checksum mismatch: stored {stored:016x}, computed {h:016x}"
            )
    return tensors
