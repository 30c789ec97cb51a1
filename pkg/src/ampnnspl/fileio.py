"""File formats: dense arrays (CSV text or ``AMPV1`` binary), 8-bit PGM
images, adjacency lists, and flat ``key = value`` config files."""

from __future__ import annotations

import math
import re
import struct
from typing import Optional

import numpy as np

BINARY_MAGIC = b"AMPV1"
_HEADER = struct.Struct("<5sQQ")


class FormatError(ValueError):
    """A file could not be parsed; the message names the file and line."""


def format_float(v) -> str:
    """Shortest decimal string that round-trips to the same double."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


# -- dense arrays ---------------------------------------------------------


def _is_binary(path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(len(BINARY_MAGIC)) == BINARY_MAGIC


def read_array(path) -> np.ndarray:
    """Read a 2-D array from CSV text or the ``AMPV1`` binary format."""
    if _is_binary(path):
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) < _HEADER.size:
            raise FormatError(f"{path}: truncated binary header")
        _, rows, cols = _HEADER.unpack_from(raw)
        body = raw[_HEADER.size :]
        if len(body) != 8 * rows * cols:
            raise FormatError(
                f"{path}: expected {rows}x{cols} doubles ({8 * rows * cols} bytes), found {len(body)} bytes"
            )
        return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)

    rows = []
    width = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f.strip() for f in line.split(",")]
            try:
                values = [float(f) for f in fields]
            except ValueError:
                raise FormatError(f"{path}:{lineno}: cannot parse {line!r} as numbers") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise FormatError(f"{path}:{lineno}: expected {width} columns, found {len(values)}")
            rows.append(values)
    if not rows:
        raise FormatError(f"{path}: no data")
    return np.array(rows, dtype=np.float64)


def read_vector(path) -> np.ndarray:
    """Read a vector stored as one column (or one row)."""
    a = read_array(path)
    if a.shape[1] == 1:
        return a[:, 0].copy()
    if a.shape[0] == 1:
        return a[0].copy()
    raise FormatError(f"{path}: expected a vector, found a {a.shape[0]}x{a.shape[1]} array")


def write_array(path, a, binary: Optional[bool] = None) -> None:
    """Write a matrix (or a vector, as one column).

    ``binary`` defaults to True when the file name ends in ``.bin``.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if binary is None:
        binary = str(path).endswith(".bin")
    if binary:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(BINARY_MAGIC, a.shape[0], a.shape[1]))
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for row in a:
            fh.write(",".join(format_float(v) for v in row))
            fh.write("\n")


# -- PGM ------------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)")


def _tokens(data, pos, count, path):
    out = []
    for _ in range(count):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise FormatError(f"{path}: truncated PGM header")
        out.append(m.group(2))
        pos = m.end()
    return out, pos


def read_pgm(path):
    """Read an 8-bit grayscale PGM (P2 or P5).

    Returns ``(pixels, maxval)`` with ``pixels`` a ``rows x cols`` uint8 array.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic in (b"P1", b"P3", b"P4", b"P6"):
        raise FormatError(f"{path}: unsupported PNM variant {magic.decode()}; only P2/P5 grayscale")
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"{path}: not a PGM file")
    (w, h, maxval), pos = _tokens(data, 2, 3, path)
    try:
        cols, rows, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise FormatError(f"{path}: malformed PGM header") from None
    if maxval > 255:
        raise FormatError(f"{path}: 16-bit PGM (maxval {maxval}) is not supported")
    if maxval < 1 or rows < 1 or cols < 1:
        raise FormatError(f"{path}: malformed PGM header")
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        body = data[pos : pos + rows * cols]
        if len(body) != rows * cols:
            raise FormatError(f"{path}: expected {rows * cols} pixels, found {len(body)}")
        pixels = np.frombuffer(body, dtype=np.uint8).reshape(rows, cols).copy()
    else:
        text = re.sub(rb"#[^\n]*", b"", data[pos:]).split()
        if len(text) < rows * cols:
            raise FormatError(f"{path}: expected {rows * cols} pixels, found {len(text)}")
        pixels = np.array([int(t) for t in text[: rows * cols]], dtype=np.int64).reshape(rows, cols)
        if pixels.min() < 0 or pixels.max() > maxval:
            raise FormatError(f"{path}: pixel value outside [0, {maxval}]")
        pixels = pixels.astype(np.uint8)
    if np.any(pixels > maxval):
        raise FormatError(f"{path}: pixel value outside [0, {maxval}]")
    return pixels, maxval


def write_pgm(path, pixels, binary: bool = True) -> None:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise ValueError("PGM pixels must be a 2-D array")
    if pixels.min() < 0 or pixels.max() > 255:
        raise ValueError("PGM pixels must lie in [0, 255]")
    pixels = pixels.astype(np.uint8)
    rows, cols = pixels.shape
    with open(path, "wb") as fh:
        if binary:
            fh.write(b"P5\n%d %d\n255\n" % (cols, rows))
            fh.write(pixels.tobytes())
        else:
            fh.write(b"P2\n%d %d\n255\n" % (cols, rows))
            for row in pixels:
                fh.write(" ".join(str(int(v)) for v in row).encode() + b"\n")


def image_to_signal(pixels, maxval: int = 255) -> np.ndarray:
    return np.asarray(pixels, dtype=np.float64).ravel() / float(maxval)


def signal_to_image(x, shape) -> np.ndarray:
    """Clamp to [0, 1] and quantize to 8 bits."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.rint(x * 255.0).astype(np.uint8).reshape(shape)


# -- adjacency lists --------------------------------------------------------


def read_adjacency(path) -> list:
    """Parse ``i: j k l`` lines (0-based) into a list of neighbor lists."""
    entries = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            head, sep, tail = line.partition(":")
            if not sep:
                raise FormatError(f"{path}:{lineno}: expected 'i: j k ...'")
            try:
                i = int(head)
                nbrs = [int(t) for t in tail.split()]
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-integer index") from None
            if i in entries:
                raise FormatError(f"{path}:{lineno}: index {i} listed twice")
            entries[i] = nbrs
    n = len(entries)
    if sorted(entries) != list(range(n)):
        raise FormatError(f"{path}: indices must cover 0..{n - 1} exactly once")
    return [entries[i] for i in range(n)]


def write_adjacency(path, lists) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for i, nb in enumerate(lists):
            fh.write(f"{i}: {' '.join(str(int(j)) for j in nb)}\n")


# -- config files -----------------------------------------------------------


def read_config(path) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise FormatError(f"{path}:{lineno}: expected 'key = value'")
            key = key.strip().replace("-", "_")
            if not key:
                raise FormatError(f"{path}:{lineno}: empty key")
            out[key] = (value.strip(), lineno)
    return out
