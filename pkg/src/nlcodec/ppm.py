"""PPM (P6, 8-bit) image I/O, with optional PNG support through Pillow."""

from __future__ import annotations

import numpy as np


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    # Skip whitespace and '#' comments between header fields.
    while pos < len(buf):
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < len(buf) and buf[pos:pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < len(buf) and not buf[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ValueError("truncated PPM header")
    return buf[start:pos], pos


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM into a (3, H, W) uint8 array."""
    with open(path, "rb") as f:
        buf = f.read()
    magic, pos = _read_token(buf, 0)
    if magic != b"P6":
        raise ValueError(f"{path}: expected P6 PPM, got {magic!r}")
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    if width < 1 or height < 1:
        raise ValueError(f"{path}: invalid dimensions {width}x{height}")
    pos += 1  # single whitespace byte after maxval
    data = buf[pos:pos + width * height * 3]
    if len(data) != width * height * 3:
        raise ValueError(f"{path}: truncated pixel data")
    img = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
    return np.ascontiguousarray(img.transpose(2, 0, 1))


def write_ppm(path, img) -> None:
    """Write a (3, H, W) uint8 array as binary PPM."""
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) uint8 image, got "
                         f"{img.dtype} {img.shape}")
    _, h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(img.transpose(1, 2, 0)).tobytes())


def read_image(path) -> np.ndarray:
    """Read PPM natively, anything else through Pillow if installed."""
    p = str(path)
    if p.lower().endswith(".ppm"):
        return read_ppm(path)
    try:
        from PIL import Image
    except ImportError as exc:
        raise ValueError(
            f"{path}: only .ppm is supported without Pillow installed"
        ) from exc
    with Image.open(p) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return np.ascontiguousarray(rgb.transpose(2, 0, 1))


def write_image(path, img) -> None:
    """Write PPM natively, anything else through Pillow if installed."""
    p = str(path)
    if p.lower().endswith(".ppm"):
        write_ppm(path, img)
        return
    try:
        from PIL import Image
    except ImportError as exc:
        raise ValueError(
            f"{path}: only .ppm is supported without Pillow installed"
        ) from exc
    img = np.asarray(img)
    Image.fromarray(np.ascontiguousarray(img.transpose(1, 2, 0))).save(p)
