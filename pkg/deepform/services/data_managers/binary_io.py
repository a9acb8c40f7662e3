"""
Little-endian binary helpers shared by the cache, checkpoint and embedding
formats, plus atomic file replacement.
"""

import os
from pathlib import Path
import struct
import tempfile

import numpy as np

from deepform.errors import DataError


def atomic_write_bytes(path: str | Path, payload: bytes) -> Path:
    """Write to a temporary file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(handle, "wb") as temp_file:
            temp_file.write(payload)
            temp_file.flush()
            os.fsync(temp_file.fileno())
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise
    return path


def atomic_write_text(path: str | Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


class BinaryWriter:
    """Accumulates little-endian fields in memory."""

    def __init__(self):
        self._parts: list[bytes] = []

    def raw(self, data: bytes) -> 'BinaryWriter':
        self._parts.append(data)
        return self

    def scalar(self, fmt: str, value: int) -> 'BinaryWriter':
        self._parts.append(struct.pack("<" + fmt, value))
        return self

    def array(self, values: np.ndarray, dtype: str) -> 'BinaryWriter':
        self._parts.append(np.ascontiguousarray(values, dtype=np.dtype(dtype).newbyteorder("<")).tobytes())
        return self

    def text(self, value: str, length_fmt: str = "I") -> 'BinaryWriter':
        encoded = value.encode("utf-8")
        self.scalar(length_fmt, len(encoded))
        self._parts.append(encoded)
        return self

    def to_bytes(self) -> bytes:
        return b"".join(self._parts)


class BinaryReader:
    """
    Sequential reader over a byte buffer.

    Raises:
        DataError: On truncated input
    """

    def __init__(self, payload: bytes, source: str = "<bytes>"):
        self._payload = payload
        self._offset = 0
        self.source = source

    def _take(self, size: int) -> bytes:
        if self._offset + size > len(self._payload):
            raise DataError(f"{self.source} is truncated at byte {self._offset}")
        chunk = self._payload[self._offset:self._offset + size]
        self._offset += size
        return chunk

    def magic(self, expected: bytes) -> None:
        found = self._take(len(expected))
        if found != expected:
            raise DataError(f"{self.source} has bad magic {found!r}, expected {expected!r}")

    def scalar(self, fmt: str) -> int:
        size = struct.calcsize("<" + fmt)
        return struct.unpack("<" + fmt, self._take(size))[0]

    def array(self, dtype: str, count: int) -> np.ndarray:
        le = np.dtype(dtype).newbyteorder("<")
        data = np.frombuffer(self._take(le.itemsize * int(count)), dtype=le)
        return data.astype(np.dtype(dtype), copy=True)

    def text(self, length_fmt: str = "I") -> str:
        length = self.scalar(length_fmt)
        try:
            return self._take(length).decode("utf-8")
        except UnicodeDecodeError as e:
            raise DataError(f"{self.source} holds invalid UTF-8 text: {e}") from e

    @property
    def remaining(self) -> int:
        return len(self._payload) - self._offset


def read_payload(path: str | Path) -> bytes:
    """Read a whole binary file, mapping I/O failures to DataError."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"File not found: {path}")
    try:
        return path.read_bytes()
    except OSError as e:
        raise DataError(f"Cannot read {path}: {e}") from e
