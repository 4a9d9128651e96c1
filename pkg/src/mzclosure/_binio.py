"""Low-level helpers for the binary artifact formats (little-endian)."""

import json
import struct
import zlib

from .errors import FileFormatError

DATASET_MAGIC = b"MZC1"
CHECKPOINT_MAGIC = b"MZNN"
FOOTER_MAGIC = b"MZFP"

DATASET_VERSION = 1
CHECKPOINT_VERSION = 1


def read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise FileFormatError(
            f"truncated file while reading {what}: wanted {n} bytes, got {len(buf)}")
    return buf


def check_magic(fh, expected):
    got = fh.read(len(expected))
    if got != expected:
        raise FileFormatError(
            f"bad magic {got!r}, expected {expected!r}")


def write_footer(fh, payload: dict):
    """Append the optional provenance footer (config echo + fingerprint)."""
    blob = json.dumps(payload, sort_keys=True).encode()
    fh.write(FOOTER_MAGIC)
    fh.write(struct.pack("<I", len(blob)))
    fh.write(blob)


def read_footer(fh):
    """Read the optional footer at the current position; None if absent."""
    head = fh.read(8)
    if len(head) == 0:
        return None
    if len(head) != 8 or head[:4] != FOOTER_MAGIC:
        raise FileFormatError("corrupt trailing footer block")
    (size,) = struct.unpack("<I", head[4:])
    blob = read_exact(fh, size, "footer payload")
    try:
        return json.loads(blob.decode())
    except ValueError as exc:
        raise FileFormatError(f"footer payload is not valid JSON: {exc}") from exc


class CrcWriter:
    """Wraps a file handle, accumulating a CRC32 of everything written."""

    def __init__(self, fh):
        self.fh = fh
        self.crc = 0

    def write(self, data):
        self.fh.write(data)
        self.crc = zlib.crc32(data, self.crc)


class CrcReader:
    """Wraps a file handle, accumulating a CRC32 of everything read."""

    def __init__(self, fh):
        self.fh = fh
        self.crc = 0

    def read_exact(self, n, what):
        buf = read_exact(self.fh, n, what)
        self.crc = zlib.crc32(buf, self.crc)
        return buf
