"""Regular-grid images: metrics, anti-alias filtering and 8-bit file codecs.

Images are 2D float64 arrays indexed ``[row, col]`` (``[i, j]``) holding
luminance in nominal range [0, 255]. Values stay real-valued through the
pipeline; quantization happens only when writing files.
"""

from __future__ import annotations

import math
import os
import struct
import zlib
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from ._io import atomic_write_bytes

PEAK = 255.0
PSNR_CAP = 100.0


def as_image(a) -> np.ndarray:
    img = np.asarray(a, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"image must be a non-empty 2D array, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def mse(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _same_shape(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(reference, test) -> float:
    """PSNR in dB against a peak of 255, capped at 100 dB for identical inputs.

    Computed on real-valued images (no 8-bit rounding).
    """
    err = mse(reference, test)
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(PEAK * PEAK / err))


def lowpass_kernel(cutoff: float) -> np.ndarray:
    """Hamming-windowed sinc, half-width 4*ceil(1/cutoff), unit DC gain.

    ``cutoff`` is normalized so that 1 is the Nyquist frequency.
    """
    if not (0.0 < cutoff <= 1.0):
        raise ValueError(f"cutoff must lie in (0, 1], got {cutoff}")
    half = 4 * math.ceil(1.0 / cutoff)
    n = np.arange(-half, half + 1, dtype=np.float64)
    h = cutoff * np.sinc(cutoff * n)
    if cutoff == 1.0:
        h = (n == 0).astype(np.float64)
    h *= 0.54 + 0.46 * np.cos(np.pi * n / half)
    return h / h.sum()


def separable_lowpass(img, cutoff: float) -> np.ndarray:
    """Filter rows then columns with :func:`lowpass_kernel`; mirror boundaries."""
    img = as_image(img)
    h = lowpass_kernel(cutoff)
    out = correlate1d(img, h, axis=1, mode="reflect")
    return correlate1d(out, h, axis=0, mode="reflect")


def frequency_response(kernel: np.ndarray, freq: float) -> float:
    """|H| of a symmetric kernel at normalized frequency ``freq`` (1 = Nyquist)."""
    half = (len(kernel) - 1) // 2
    n = np.arange(-half, half + 1)
    return float(abs(np.sum(kernel * np.exp(-1j * np.pi * freq * n))))


# -- 8-bit codecs ------------------------------------------------------------


def quantize(img) -> np.ndarray:
    """Clamp to [0, 255] and round half away from zero."""
    a = np.clip(np.asarray(img, dtype=np.float64), 0.0, 255.0)
    return np.floor(a + 0.5).astype(np.uint8)


def _pgm_tokens(data: bytes, count: int):
    tokens = []
    pos = 2
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(int(data[start:pos]))
    return tokens, pos


def decode_pgm(data: bytes) -> np.ndarray:
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise ValueError(f"not a PGM file (magic {magic!r})")
    (width, height, maxval), pos = _pgm_tokens(data, 3)
    if maxval != 255:
        raise ValueError(f"only 8-bit PGM supported (maxval {maxval})")
    if magic == b"P5":
        raster = data[pos + 1 : pos + 1 + width * height]
        if len(raster) != width * height:
            raise ValueError("truncated PGM raster")
        pix = np.frombuffer(raster, dtype=np.uint8)
    else:
        pix = np.array(data[pos:].split()[: width * height], dtype=np.int64)
        if pix.size != width * height or pix.min(initial=0) < 0 or pix.max(initial=0) > 255:
            raise ValueError("bad plain PGM raster")
    return pix.reshape(height, width).astype(np.float64)


def encode_pgm(img, plain: bool = False) -> bytes:
    q = quantize(img)
    h, w = q.shape
    if plain:
        rows = "\n".join(" ".join(str(v) for v in row) for row in q)
        return f"P2\n{w} {h}\n255\n{rows}\n".encode("ascii")
    return f"P5\n{w} {h}\n255\n".encode("ascii") + q.tobytes()


def _png_chunk(kind: bytes, body: bytes) -> bytes:
    return struct.pack(">I", len(body)) + kind + body + struct.pack(">I", zlib.crc32(kind + body))


def encode_png(img) -> bytes:
    q = quantize(img)
    h, w = q.shape
    raw = b"".join(b"\x00" + row.tobytes() for row in q)
    header = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + _png_chunk(b"IHDR", header)
        + _png_chunk(b"IDAT", zlib.compress(raw, 9))
        + _png_chunk(b"IEND", b"")
    )


def _paeth(a, b, c):
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def decode_png(data: bytes) -> np.ndarray:
    """8-bit grayscale, non-interlaced PNG only."""
    if data[:8] != b"\x89PNG\r\n\x1a\n":
        raise ValueError("not a PNG file")
    pos = 8
    idat = b""
    width = height = None
    while pos < len(data):
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        kind = data[pos + 4 : pos + 8]
        body = data[pos + 8 : pos + 8 + length]
        pos += 12 + length
        if kind == b"IHDR":
            width, height, depth, ctype, _, _, interlace = struct.unpack(">IIBBBBB", body)
            if depth != 8 or ctype != 0 or interlace != 0:
                raise ValueError("only 8-bit grayscale non-interlaced PNG supported")
        elif kind == b"IDAT":
            idat += body
        elif kind == b"IEND":
            break
    if width is None:
        raise ValueError("PNG missing IHDR")
    raw = zlib.decompress(idat)
    stride = width + 1
    out = np.zeros((height, width), dtype=np.uint8)
    prev = bytearray(width)
    for r in range(height):
        ftype = raw[r * stride]
        line = bytearray(raw[r * stride + 1 : (r + 1) * stride])
        for c in range(width):
            a = line[c - 1] if c else 0
            b = prev[c]
            cc = prev[c - 1] if c else 0
            if ftype == 1:
                line[c] = (line[c] + a) & 255
            elif ftype == 2:
                line[c] = (line[c] + b) & 255
            elif ftype == 3:
                line[c] = (line[c] + ((a + b) >> 1)) & 255
            elif ftype == 4:
                line[c] = (line[c] + _paeth(a, b, cc)) & 255
            elif ftype != 0:
                raise ValueError(f"bad PNG filter type {ftype}")
        out[r] = np.frombuffer(bytes(line), dtype=np.uint8)
        prev = line
    return out.astype(np.float64)


def read_image(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return decode_png(data)
    return decode_pgm(data)


def write_image(img, path, plain: bool = False) -> None:
    ext = os.path.splitext(str(path))[1].lower()
    blob = encode_png(img) if ext == ".png" else encode_pgm(img, plain=plain)
    atomic_write_bytes(path, blob)


IMAGE_SUFFIXES = (".pgm", ".png")
