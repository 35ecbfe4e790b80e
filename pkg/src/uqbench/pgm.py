"""Binary PGM (P5, maxval 255) reader/writer for float images in [0, 1]."""

from __future__ import annotations

import numpy as np

from .errors import BadImageFileError, IoFailureError

__all__ = ["read_pgm", "write_pgm", "quantize"]


def quantize(image: np.ndarray) -> np.ndarray:
    """Snap a float image to the 8-bit grid exactly as a PGM round trip would."""
    levels = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    return levels.astype(np.float32) / np.float32(255.0)


def write_pgm(image: np.ndarray, path) -> None:
    if image.ndim != 2:
        raise BadImageFileError(f"expected a 2-d image, got shape {image.shape}")
    h, w = image.shape
    levels = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    try:
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n255\n" % (w, h))
            fh.write(levels.tobytes())
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def _tokens(blob: bytes):
    """Yield whitespace-separated header tokens, skipping # comments."""
    i = 0
    while i < len(blob):
        ch = blob[i : i + 1]
        if ch.isspace():
            i += 1
        elif ch == b"#":
            while i < len(blob) and blob[i : i + 1] != b"\n":
                i += 1
        else:
            start = i
            while i < len(blob) and not blob[i : i + 1].isspace():
                i += 1
            yield blob[start:i], i
    return


def read_pgm(path) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise BadImageFileError(f"cannot read {path}: {exc}") from exc
    fields = []
    end = 0
    for token, end in _tokens(blob):
        fields.append(token)
        if len(fields) == 4:
            break
    if len(fields) != 4:
        raise BadImageFileError(f"{path}: incomplete PGM header")
    if fields[0] != b"P5":
        raise BadImageFileError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    try:
        w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    except ValueError as exc:
        raise BadImageFileError(f"{path}: non-numeric header field") from exc
    if maxval != 255:
        raise BadImageFileError(f"{path}: unsupported maxval {maxval}")
    if w <= 0 or h <= 0:
        raise BadImageFileError(f"{path}: bad dimensions {w}x{h}")
    data = blob[end + 1 : end + 1 + w * h]
    if len(data) != w * h:
        raise BadImageFileError(f"{path}: truncated pixel data")
    levels = np.frombuffer(data, dtype=np.uint8).reshape(h, w)
    return levels.astype(np.float32) / np.float32(255.0)
