"""Binary PPM (P6, maxval 255) reading and writing."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DatasetFormatError


def _tokens(buf: bytes, count: int, path) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    toks: list[bytes] = []
    i = 0
    n = len(buf)
    while len(toks) < count:
        while i < n and buf[i : i + 1].isspace():
            i += 1
        if i < n and buf[i : i + 1] == b"#":
            while i < n and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not buf[i : i + 1].isspace() and buf[i : i + 1] != b"#":
            i += 1
        if start == i:
            raise DatasetFormatError(path, "truncated PPM header")
        toks.append(buf[start:i])
    # exactly one whitespace byte separates the header from the raster
    if i >= n or not buf[i : i + 1].isspace():
        raise DatasetFormatError(path, "missing whitespace after PPM header")
    return toks, i + 1


def decode_ppm(buf: bytes, path="<bytes>") -> np.ndarray:
    """Decode P6 bytes into a uint8 array of shape (H, W, 3)."""
    if buf[:2] != b"P6":
        raise DatasetFormatError(path, "not a binary PPM (expected magic P6)")
    toks, offset = _tokens(buf, 4, path)
    try:
        width, height, maxval = (int(t) for t in toks[1:])
    except ValueError as exc:
        raise DatasetFormatError(path, "non-numeric PPM header field") from exc
    if width < 1 or height < 1:
        raise DatasetFormatError(path, f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise DatasetFormatError(path, f"unsupported maxval {maxval} (only 255)")
    need = width * height * 3
    raster = buf[offset : offset + need]
    if len(raster) != need:
        raise DatasetFormatError(path, f"raster has {len(raster)} bytes, expected {need}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def encode_ppm(rgb: np.ndarray) -> bytes:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError(f"expected uint8 (H, W, 3) array, got {rgb.dtype} {rgb.shape}")
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(rgb).tobytes()


def read_ppm(path) -> np.ndarray:
    """Load a P6 file as float32 (3, H, W) in [0, 1]."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise DatasetFormatError(path, f"unreadable: {exc.strerror or exc}") from exc
    rgb = decode_ppm(buf, path)
    return (rgb.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0)).astype(np.float32)


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    """(3, H, W) floats in [0, 1] to (H, W, 3) bytes, round-half-to-even."""
    return np.clip(np.rint(np.asarray(pixels, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)


def write_ppm(path, pixels: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(to_uint8(pixels)))
