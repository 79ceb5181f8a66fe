"""Reading and writing binary images as PBM (P1 plain, P4 raw).

PBM bit 1 (black) maps to pixel value 1.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

MAX_DIM = 1 << 16


class PbmError(ValueError):
    """Malformed PBM data; the message carries line and byte offset."""


def _position(data: bytes, offset: int) -> str:
    line = data.count(b"\n", 0, offset) + 1
    return f"line {line}, offset {offset}"


def _tokens(data: bytes, start: int):
    """Yield (token, offset) pairs of a header, skipping whitespace and comments."""
    i = start
    n = len(data)
    while i < n:
        c = data[i:i + 1]
        if c.isspace():
            i += 1
        elif c == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        else:
            j = i
            while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            yield data[i:j], i, j
            i = j


def parse_pbm(data: bytes) -> np.ndarray:
    if len(data) < 2 or data[:2] not in (b"P1", b"P4"):
        raise PbmError(f"bad magic number at {_position(data, 0)}")
    raw = data[:2] == b"P4"
    toks = _tokens(data, 2)
    dims = []
    end = 2
    for _ in range(2):
        try:
            tok, off, end = next(toks)
        except StopIteration:
            raise PbmError(f"truncated header at {_position(data, len(data))}") from None
        if not tok.isdigit():
            raise PbmError(f"bad dimension {tok!r} at {_position(data, off)}")
        value = int(tok)
        if not 0 < value <= MAX_DIM:
            raise PbmError(f"dimension {value} out of range at {_position(data, off)}")
        dims.append(value)
    width, height = dims
    if raw:
        if end >= len(data) or not data[end:end + 1].isspace():
            raise PbmError(f"missing separator before raster at {_position(data, end)}")
        start = end + 1
        row_bytes = (width + 7) // 8
        need = row_bytes * height
        payload = data[start:start + need]
        if len(payload) < need:
            raise PbmError(f"truncated raster: {len(payload)} of {need} bytes at "
                           f"{_position(data, start + len(payload))}")
        packed = np.frombuffer(payload, dtype=np.uint8).reshape(height, row_bytes)
        return np.unpackbits(packed, axis=1)[:, :width].astype(np.int8)
    bits = []
    i = end
    n = len(data)
    while i < n and len(bits) < width * height:
        c = data[i:i + 1]
        if c in (b"0", b"1"):
            bits.append(1 if c == b"1" else 0)
        elif c == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        elif not c.isspace():
            raise PbmError(f"bad raster character {c!r} at {_position(data, i)}")
        i += 1
    if len(bits) < width * height:
        raise PbmError(f"truncated raster: {len(bits)} of {width * height} pixels at "
                       f"{_position(data, n)}")
    return np.array(bits, dtype=np.int8).reshape(height, width)


def load_pbm(path: str | Path) -> np.ndarray:
    return parse_pbm(Path(path).read_bytes())


def format_pbm(image: np.ndarray, raw: bool = True) -> bytes:
    img = np.asarray(image)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("image must be a nonempty 2D array")
    if not np.isin(img, (0, 1)).all():
        raise ValueError("image must be binary")
    height, width = img.shape
    bits = img.astype(np.uint8)
    if raw:
        return f"P4\n{width} {height}\n".encode() + np.packbits(bits, axis=1).tobytes()
    lines = [" ".join(str(int(b)) for b in row) for row in bits]
    return (f"P1\n{width} {height}\n" + "\n".join(lines) + "\n").encode()


def save_pbm(image: np.ndarray, path: str | Path, raw: bool = True) -> None:
    Path(path).write_bytes(format_pbm(image, raw))
