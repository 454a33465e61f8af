"""Matrix, trace and frame file formats.

Matrix files are either CSV (one row per line, ``.`` decimal point) or the
raw binary format: magic ``b"WLRA1"``, u64 rows, u64 cols (little endian),
then rows*cols little-endian f64 entries in row-major order.
"""
import csv
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"WLRA1"
_HEADER = struct.Struct("<5sQQ")


class MatrixFormatError(ValueError):
    """Malformed matrix file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


def read_csv_matrix(path):
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                row = [float(tok) for tok in text.split(",")]
            except ValueError:
                raise MatrixFormatError(f"cannot parse {text!r} as numbers", lineno) from None
            if not all(np.isfinite(row)):
                raise MatrixFormatError("non-finite entry", lineno)
            if rows and len(row) != len(rows[0]):
                raise MatrixFormatError(
                    f"expected {len(rows[0])} columns, found {len(row)}", lineno
                )
            rows.append(row)
    if not rows:
        raise MatrixFormatError("empty matrix file")
    return np.array(rows, dtype=np.float64)


def write_csv_matrix(path, a):
    a = np.asarray(a, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        for row in a:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def read_binary_matrix(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise MatrixFormatError("truncated header")
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MatrixFormatError(f"bad magic {magic!r}")
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise MatrixFormatError(f"expected {expected} bytes, found {len(data)}")
    a = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols)
    if not np.all(np.isfinite(a)):
        raise MatrixFormatError("non-finite entry")
    return a.astype(np.float64)


def write_binary_matrix(path, a):
    a = np.ascontiguousarray(a, dtype="<f8")
    rows, cols = a.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols))
        fh.write(a.tobytes())


def read_matrix(path):
    """Read CSV or binary, sniffing the magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        return read_binary_matrix(path)
    return read_csv_matrix(path)


def write_matrix(path, a):
    if str(path).endswith((".bin", ".wlra")):
        write_binary_matrix(path, a)
    else:
        write_csv_matrix(path, a)


TRACE_HEADER = ["iter", "objective", "step_norm", "rel_error", "wall_ms"]


def write_trace_csv(path, trace):
    """Write a :class:`wlra.swlr.ConvergenceTrace` (or RPCA trace)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for rec in trace.records:
            writer.writerow(
                [rec.iteration, repr(rec.objective), repr(rec.step_norm),
                 repr(rec.rel_error), repr(rec.wall_time * 1e3)]
            )


def read_pgm(path):
    """Read a binary 8-bit PGM (P5) image as a float64 array."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MatrixFormatError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise MatrixFormatError(f"{path}: not a P5 PGM")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise MatrixFormatError(f"{path}: only 8-bit PGM is supported")
    pos += 1
    pix = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return pix.reshape(height, width).astype(np.float64)


def write_pgm(path, img):
    img = np.clip(np.rint(np.asarray(img, dtype=np.float64)), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_frame_dir(path):
    """Stack the PGM frames of a directory (lexicographic order) as columns.

    Returns ``(frames, (height, width))``.
    """
    names = sorted(n for n in os.listdir(path) if n.lower().endswith(".pgm"))
    if not names:
        raise MatrixFormatError(f"no .pgm files in {path}")
    imgs = [read_pgm(os.path.join(path, n)) for n in names]
    dims = imgs[0].shape
    for name, img in zip(names, imgs):
        if img.shape != dims:
            raise MatrixFormatError(f"{name}: frame size {img.shape} != {dims}")
    return np.stack([img.ravel() for img in imgs], axis=1), dims


def write_frame_dir(path, frames, dims, prefix="frame"):
    os.makedirs(path, exist_ok=True)
    n = frames.shape[1]
    width = max(4, len(str(n - 1)))
    for j in range(n):
        write_pgm(os.path.join(path, f"{prefix}{j:0{width}d}.pgm"), frames[:, j].reshape(dims))
