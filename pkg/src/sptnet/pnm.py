"""Binary netpbm images and the association-matrix container.

P6 (color) and P5 (gray) with maxval 255 only: two formats, byte-exact,
no compression, no dependencies. Association matrices persist as
``SPAS | u32 N | u32 M | N*M float32``, all little-endian, row-major.
Every writer lands atomically: a temp file in the target directory is
renamed over the destination only after a complete write.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

__all__ = ["PnmError", "read_ppm", "read_pgm", "write_ppm", "write_pgm",
           "read_association", "write_association", "bilinear_resize"]


class PnmError(Exception):
    """Malformed or unsupported image/association file."""


# ---------------------------------------------------------------------------
# reading

def _read_header_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Parse ``count`` whitespace-separated integers after the magic,
    honouring ``#`` comments; returns the values and the data offset."""
    values: list[int] = []
    pos = 2                          # past the two magic bytes
    while len(values) < count:
        if pos >= len(data):
            raise PnmError("truncated header")
        ch = data[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise PnmError("unterminated comment")
            pos = nl + 1
        elif ch.isdigit():
            end = pos
            while end < len(data) and data[end:end + 1].isdigit():
                end += 1
            values.append(int(data[pos:end]))
            pos = end
        else:
            raise PnmError(f"unexpected byte {ch!r} in header")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise PnmError("missing whitespace after header")
    return values, pos + 1


def _read_pnm(path: str, magic: bytes, channels: int) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise PnmError(f"cannot read {path}: {exc}") from exc
    if data[:2] != magic:
        raise PnmError(f"{path}: expected magic {magic.decode()}")
    (width, height, maxval), offset = _read_header_tokens(data, 3)
    if width <= 0 or height <= 0:
        raise PnmError(f"{path}: non-positive dimensions")
    if maxval != 255:
        raise PnmError(f"{path}: only maxval 255 is supported, got {maxval}")
    need = width * height * channels
    raster = data[offset:offset + need]
    if len(raster) != need:
        raise PnmError(f"{path}: raster holds {len(raster)} of {need} bytes")
    arr = np.frombuffer(raster, dtype=np.uint8).astype(np.float64) / 255.0
    return arr.reshape(height, width, channels)


def read_ppm(path: str) -> np.ndarray:
    """Binary P6 -> [H, W, 3] float64 in [0, 1]."""
    return _read_pnm(path, b"P6", 3)


def read_pgm(path: str) -> np.ndarray:
    """Binary P5 -> [H, W] float64 in [0, 1]."""
    return _read_pnm(path, b"P5", 1)[:, :, 0]


# ---------------------------------------------------------------------------
# writing

def _atomic_write(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".pnm-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _quantize(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.min() < 0.0 or v.max() > 1.0:
        raise PnmError("pixel values must lie in [0, 1]")
    return np.round(v * 255.0).astype(np.uint8)


def write_pgm(path: str, gray: np.ndarray) -> None:
    """[H, W] floats in [0, 1] -> binary P5, value = round(255*s)."""
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise PnmError("write_pgm expects an [H, W] map")
    h, w = gray.shape
    header = f"P5\n{w} {h}\n255\n".encode()
    _atomic_write(path, header + _quantize(gray).tobytes())


def write_ppm(path: str, rgb: np.ndarray) -> None:
    """[H, W, 3] floats in [0, 1] -> binary P6."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise PnmError("write_ppm expects an [H, W, 3] image")
    h, w, _ = rgb.shape
    header = f"P6\n{w} {h}\n255\n".encode()
    _atomic_write(path, header + _quantize(rgb).tobytes())


# ---------------------------------------------------------------------------
# association matrices

_SPAS_MAGIC = b"SPAS"


def write_association(path: str, a: np.ndarray) -> None:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise PnmError("association matrix must be 2-D")
    n, m = a.shape
    payload = (_SPAS_MAGIC + struct.pack("<II", n, m)
               + a.astype("<f4").tobytes())
    _atomic_write(path, payload)


def read_association(path: str) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise PnmError(f"cannot read {path}: {exc}") from exc
    if data[:4] != _SPAS_MAGIC:
        raise PnmError(f"{path}: bad association magic")
    if len(data) < 12:
        raise PnmError(f"{path}: truncated association header")
    n, m = struct.unpack("<II", data[4:12])
    need = n * m * 4
    if len(data) != 12 + need:
        raise PnmError(f"{path}: association payload size mismatch")
    vals = np.frombuffer(data[12:], dtype="<f4").astype(np.float64)
    return vals.reshape(n, m)


# ---------------------------------------------------------------------------
# resampling

def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize [H, W, C] with half-pixel-centre bilinear sampling."""
    img = np.asarray(img, dtype=np.float64)
    h, w, _ = img.shape
    if out_h <= 0 or out_w <= 0:
        raise PnmError("resize target must be positive")

    def axis(n_src, n_dst):
        coords = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
        coords = np.clip(coords, 0.0, n_src - 1.0)
        lo = np.floor(coords).astype(np.int64)
        hi = np.minimum(lo + 1, n_src - 1)
        return lo, hi, coords - lo

    r0, r1, rw = axis(h, out_h)
    c0, c1, cw = axis(w, out_w)
    rw = rw[:, None, None]
    cw = cw[None, :, None]
    rows = img[r0] * (1.0 - rw) + img[r1] * rw
    return rows[:, c0] * (1.0 - cw) + rows[:, c1] * cw
