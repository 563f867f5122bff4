"""Grayscale image I/O and resizing.

Images are 2-D float64 numpy arrays with values in [0, 1], row-major,
shape (height, width). Supported on disk: binary PGM (P5, maxval 255) and
8-bit PNG. Color PNGs are reduced to luma with Rec.601 weights. Loading
maps byte value v to v/255; saving quantizes with round(v * 255) clamped
to [0, 255], so load/save round trips of 8-bit data are byte identical.
"""

from __future__ import annotations

import io
import os

import numpy as np

from .fileutil import atomic_write_bytes

_WHITESPACE = b" \t\r\n\x0b\x0c"
_REC601 = (0.299, 0.587, 0.114)


class ImageFormatError(Exception):
    """Image file cannot be decoded; offset marks the failing byte."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


def validate_image(img) -> np.ndarray:
    """Coerce to float64 and check the [0, 1] 2-D contract."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"image must be a nonempty 2-D array, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("image contains non-finite values")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return a


def to_uint8(img) -> np.ndarray:
    """Quantize [0, 1] intensities to bytes: round(v * 255), clamped."""
    a = np.asarray(img, dtype=np.float64)
    return np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)


def decode_pgm(data: bytes) -> np.ndarray:
    """Parse a binary PGM (P5) byte string."""
    pos = 0

    def token(what):
        nonlocal pos
        while pos < len(data):
            c = data[pos:pos + 1]
            if c == b"#":
                nl = data.find(b"\n", pos)
                pos = len(data) if nl < 0 else nl + 1
            elif c in _WHITESPACE:
                pos += 1
            else:
                break
        if pos >= len(data):
            raise ImageFormatError(
                f"corrupt header: ran out of bytes before {what}", offset=pos)
        start = pos
        while pos < len(data) and data[pos:pos + 1] not in _WHITESPACE + b"#":
            pos += 1
        return data[start:pos], start

    magic, off = token("magic")
    if magic != b"P5":
        raise ImageFormatError(
            f"unsupported format {magic!r}: expected binary PGM (P5)", offset=off)
    fields = {}
    for what in ("width", "height", "maxval"):
        tok, off = token(what)
        try:
            value = int(tok)
        except ValueError:
            raise ImageFormatError(
                f"corrupt header: {what} token {tok!r} is not an integer",
                offset=off)
        if value <= 0:
            raise ImageFormatError(
                f"corrupt header: {what} must be positive, got {value}",
                offset=off)
        fields[what] = value
    if fields["maxval"] != 255:
        raise ImageFormatError(
            f"unsupported maxval {fields['maxval']}: only 8-bit (255) PGM "
            "is accepted")
    if pos >= len(data) or data[pos:pos + 1] not in _WHITESPACE:
        raise ImageFormatError(
            "corrupt header: missing whitespace before raster", offset=pos)
    pos += 1
    need = fields["width"] * fields["height"]
    raster = data[pos:pos + need]
    if len(raster) < need:
        raise ImageFormatError(
            f"truncated payload: expected {need} raster bytes, found "
            f"{len(raster)}", offset=pos + len(raster))
    grid = np.frombuffer(raster, dtype=np.uint8).reshape(
        fields["height"], fields["width"])
    return grid.astype(np.float64) / 255.0


def encode_pgm(img) -> bytes:
    a = to_uint8(validate_image(img))
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode("ascii")
    return header + a.tobytes()


def _load_png(path) -> np.ndarray:
    from PIL import Image as PILImage

    with PILImage.open(path) as im:
        im.load()
        if im.mode == "L":
            return np.asarray(im, dtype=np.uint8).astype(np.float64) / 255.0
        if im.mode in ("P", "RGB", "RGBA", "LA"):
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
            luma = (_REC601[0] * rgb[:, :, 0] + _REC601[1] * rgb[:, :, 1]
                    + _REC601[2] * rgb[:, :, 2]) / 255.0
            return np.clip(luma, 0.0, 1.0)
        raise ImageFormatError(
            f"unsupported PNG mode {im.mode!r}: need 8-bit grayscale or color")


def load_image(path) -> np.ndarray:
    """Load a PGM or PNG file, sniffing the format from its magic bytes."""
    with open(path, "rb") as f:
        head = f.read(8)
    if head.startswith(b"P5"):
        with open(path, "rb") as f:
            return decode_pgm(f.read())
    if head.startswith(b"\x89PNG"):
        try:
            return _load_png(path)
        except ImageFormatError:
            raise
        except Exception as exc:
            raise ImageFormatError(f"cannot decode PNG {path}: {exc}")
    raise ImageFormatError(
        f"unsupported format in {path}: expected PGM (P5) or PNG", offset=0)


def save_image(img, path):
    """Write a [0, 1] image as PGM or PNG, chosen by file extension."""
    ext = os.path.splitext(os.fspath(path))[1].lower()
    if ext in (".pgm", ".pnm"):
        atomic_write_bytes(path, encode_pgm(img))
    elif ext == ".png":
        from PIL import Image as PILImage

        buf = io.BytesIO()
        PILImage.fromarray(to_uint8(validate_image(img)), mode="L").save(
            buf, format="PNG")
        atomic_write_bytes(path, buf.getvalue())
    else:
        raise ValueError(f"unsupported output extension {ext!r}: use .pgm or .png")


def resize_bilinear(img, out_height: int, out_width: int) -> np.ndarray:
    """Bilinear resample with half-pixel centers."""
    a = validate_image(img)
    h, w = a.shape
    if out_height < 1 or out_width < 1:
        raise ValueError("output dimensions must be positive")
    ys = np.clip((np.arange(out_height) + 0.5) * h / out_height - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_width) + 0.5) * w / out_width - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    out = (a[np.ix_(y0, x0)] * (1 - wy) * (1 - wx)
           + a[np.ix_(y1, x0)] * wy * (1 - wx)
           + a[np.ix_(y0, x1)] * (1 - wy) * wx
           + a[np.ix_(y1, x1)] * wy * wx)
    return np.clip(out, 0.0, 1.0)
