"""Binary PGM (P5) and PPM (P6) reading and writing.

Grey images round-trip through P5.  Label images are written as P5 with the
highest label as maxval plus a sidecar ``.legend`` text file listing label
populations, so a pseudo-color image stays self-describing.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import IoError
from .raster import GreyImage, LabelImage


def _read_token(f) -> bytes:
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            raise IoError("truncated PNM header")
        if c in b" \t\r\n":
            if tok:
                return tok
            continue
        if c == b"#":
            while c not in b"\r\n":
                c = f.read(1)
                if not c:
                    raise IoError("truncated PNM comment")
            continue
        tok += c


def _read_header(f, magic: bytes) -> tuple[int, int, int]:
    if f.read(2) != magic:
        raise IoError(f"not a {magic.decode()} file")
    try:
        width = int(_read_token(f))
        height = int(_read_token(f))
        maxval = int(_read_token(f))
    except ValueError as exc:
        raise IoError("malformed PNM header") from exc
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise IoError("invalid PNM dimensions")
    return width, height, maxval


def read_pgm(path) -> GreyImage:
    """Read a binary PGM file."""
    try:
        with open(path, "rb") as f:
            width, height, maxval = _read_header(f, b"P5")
            dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
            raw = f.read(width * height * dtype.itemsize)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if len(raw) != width * height * dtype.itemsize:
        raise IoError("truncated PGM pixel data")
    data = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    return GreyImage(data.astype(np.int32), maxval)


def write_pgm(img: GreyImage, path) -> None:
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n%d\n" % (img.width, img.height, img.max_grey))
        if img.max_grey > 255:
            f.write(img.data.astype(">u2").tobytes())
        else:
            f.write(img.data.astype(np.uint8).tobytes())


def read_ppm(path) -> tuple[GreyImage, GreyImage, GreyImage]:
    """Read a binary PPM file as three grey planes."""
    try:
        with open(path, "rb") as f:
            width, height, maxval = _read_header(f, b"P6")
            dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
            raw = f.read(width * height * 3 * dtype.itemsize)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if len(raw) != width * height * 3 * dtype.itemsize:
        raise IoError("truncated PPM pixel data")
    data = np.frombuffer(raw, dtype=dtype).reshape(height, width, 3)
    return tuple(GreyImage(data[:, :, i].astype(np.int32), maxval) for i in range(3))


def write_label_image(img: LabelImage, path) -> None:
    """Write a label image as PGM plus a ``.legend`` sidecar."""
    top = int(img.data.max()) if img.data.size else 0
    grey = GreyImage(img.data.astype(np.int32), max(top, 1))
    write_pgm(grey, path)
    labels, counts = np.unique(img.data, return_counts=True)
    with open(str(path) + ".legend", "w") as f:
        f.write("label population\n")
        for lab, cnt in zip(labels, counts):
            f.write(f"{int(lab)} {int(cnt)}\n")


def read_label_image(path) -> LabelImage:
    grey = read_pgm(path)
    return LabelImage(grey.data)


def remove_if_exists(path) -> None:
    try:
        os.remove(path)
    except FileNotFoundError:
        pass
