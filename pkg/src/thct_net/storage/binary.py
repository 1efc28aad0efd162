"""
Little-endian binary record helpers shared by the dataset cache and the
checkpoint format.
"""

import struct
from typing import Type

import numpy as np


class BinaryWriter:
    """Accumulates little-endian fields in memory."""

    def __init__(self):
        self._chunks = []

    def raw(self, data: bytes) -> None:
        self._chunks.append(bytes(data))

    def u8(self, value: int) -> None:
        self._chunks.append(struct.pack("<B", value))

    def u32(self, value: int) -> None:
        self._chunks.append(struct.pack("<I", value))

    def f64(self, value: float) -> None:
        self._chunks.append(struct.pack("<d", value))

    def text(self, value: str) -> None:
        encoded = value.encode("utf-8")
        self.u32(len(encoded))
        self._chunks.append(encoded)

    def array(self, values: np.ndarray, dtype: str) -> None:
        self._chunks.append(np.ascontiguousarray(values, dtype=dtype).tobytes())

    def getvalue(self) -> bytes:
        return b"".join(self._chunks)


class BinaryReader:
    """
    Sequential reader over a byte buffer.

    Running past the end raises `truncated_error`.
    """

    def __init__(self, data: bytes, truncated_error: Type[Exception], label: str = "file"):
        self._data = memoryview(data)
        self._pos = 0
        self._error = truncated_error
        self._label = label

    @property
    def position(self) -> int:
        return self._pos

    def remaining(self) -> int:
        return len(self._data) - self._pos

    def raw(self, count: int) -> bytes:
        if count < 0 or self._pos + count > len(self._data):
            raise self._error(
                f"{self._label} truncated: needed {count} bytes at offset {self._pos}, "
                f"{self.remaining()} left"
            )
        chunk = bytes(self._data[self._pos:self._pos + count])
        self._pos += count
        return chunk

    def u8(self) -> int:
        return struct.unpack("<B", self.raw(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.raw(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.raw(8))[0]

    def text(self) -> str:
        length = self.u32()
        try:
            return self.raw(length).decode("utf-8")
        except UnicodeDecodeError as e:
            raise self._error(f"{self._label}: invalid UTF-8 at offset {self._pos}") from e

    def array(self, shape, dtype: str) -> np.ndarray:
        dt = np.dtype(dtype)
        count = int(np.prod(shape)) if len(shape) else 1
        buf = self.raw(count * dt.itemsize)
        return np.frombuffer(buf, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
