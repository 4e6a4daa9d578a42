"""Plain-text matrices and histograms, trace CSV, and binary PPM (P6) images."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import OTError, SolveTrace, histogram_from_weights


class MalformedFile(OTError):
    pass


class EmptyImage(OTError):
    pass


# --- whitespace matrices -----------------------------------------------------


def read_matrix(path) -> np.ndarray:
    """Row-major whitespace-separated reals, one row per line."""
    rows = []
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as e:
            raise MalformedFile(f"{path}:{ln}: {e}") from None
    if not rows:
        raise MalformedFile(f"{path}: no data")
    if len({len(r) for r in rows}) != 1:
        raise MalformedFile(f"{path}: ragged rows")
    return np.array(rows, dtype=np.float64)


def read_histogram(path) -> np.ndarray:
    """A histogram stored as one row, one column, or any whitespace layout."""
    try:
        vals = np.array([float(t) for t in Path(path).read_text().split()])
    except ValueError as e:
        raise MalformedFile(f"{path}: {e}") from None
    if vals.size == 0:
        raise MalformedFile(f"{path}: no data")
    return histogram_from_weights(vals)


def format_matrix(M) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    return "".join(" ".join(repr(float(x)) for x in row) + "\n" for row in M)


def write_matrix(path, M) -> None:
    Path(path).write_text(format_matrix(M))


# --- traces ------------------------------------------------------------------


def write_trace_csv(path, trace: SolveTrace, reference: float | None = None) -> None:
    """Trace as CSV; with ``reference`` an extra ``abs_gap`` column ``|cost - reference|``."""
    header = list(SolveTrace.COLUMNS) + (["abs_gap"] if reference is not None else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in trace.rows():
            out = [row[0]] + [repr(float(x)) for x in row[1:]]
            if reference is not None:
                out.append(repr(abs(row[1] - reference)))
            w.writerow(out)


def read_trace_csv(path) -> SolveTrace:
    tr = SolveTrace()
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            tr.append(int(rec["iter"]), float(rec["cost"]), float(rec["marginal_violation"]),
                      float(rec["wall_time_s"]), float(rec["effective_eps"]))
    return tr


# --- PPM ---------------------------------------------------------------------


@dataclass(frozen=True)
class PpmImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8
    # header bytes as read from disk, kept so a read/write round trip is byte-exact
    header: bytes | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if self.width < 1 or self.height < 1:
            raise EmptyImage("image has no pixels")
        if px.shape != (self.height, self.width, 3):
            raise OTError(f"pixels must have shape {(self.height, self.width, 3)}, got {px.shape}")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255):
                raise OTError("channel values must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, px) -> "PpmImage":
        px = np.asarray(px)
        return cls(px.shape[1], px.shape[0], px)


_PPM_HEADER = re.compile(rb"P6(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s")


def decode_ppm(data: bytes) -> PpmImage:
    m = _PPM_HEADER.match(data)
    if not m:
        raise MalformedFile("not a binary PPM (P6) file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise MalformedFile(f"only maxval 255 is supported, got {maxval}")
    if w == 0 or h == 0:
        raise EmptyImage("image has no pixels")
    body = data[m.end():]
    if len(body) != w * h * 3:
        raise MalformedFile(f"expected {w * h * 3} pixel bytes, found {len(body)}")
    return PpmImage(w, h, np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3), data[:m.end()])


def encode_ppm(img: PpmImage) -> bytes:
    header = img.header or f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def read_ppm(path) -> PpmImage:
    return decode_ppm(Path(path).read_bytes())


def write_ppm(path, img: PpmImage) -> None:
    Path(path).write_bytes(encode_ppm(img))
