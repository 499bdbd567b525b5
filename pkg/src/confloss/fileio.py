"""Byte-level readers and writers: .flo flow fields, PFM scalar maps, PGM
visualizations, and the metrics CSV row format.

Every reader maps malformed input to FormatError (with a machine-readable
.reason) instead of crashing; round trips are bit-exact for values that are
representable in the formats' 32-bit floats.
"""

from __future__ import annotations

import csv
import struct
import warnings

import numpy as np

from .fields import BinaryMask, Grid1, Grid2
from .metrics import BAD_P_THRESHOLDS, OUTLIER_THRESHOLDS, MetricReport

FLO_MAGIC = 202021.25  # serializes to b"PIEH" as a little-endian float32
FLO_SENTINEL = 1e9  # components at or beyond this magnitude mark unknown flow


class FormatError(ValueError):
    """Malformed file content. .reason is a stable machine-readable code."""

    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason


class DegenerateRangeWarning(UserWarning):
    """Requested gray mapping had hi == lo; output is uniform mid-gray."""


def read_flo(data: bytes):
    """Parse a Middlebury .flo byte string.

    Returns (flow, valid): pixels whose stored components are NaN or exceed
    the unknown-flow sentinel come back as 0 with valid False.
    """
    if len(data) < 12:
        raise FormatError("truncated", f"flo header needs 12 bytes, got {len(data)}")
    magic, width, height = struct.unpack("<fii", data[:12])
    if magic != FLO_MAGIC:
        raise FormatError("bad_magic", f"bad flo magic {magic!r} (header {data[:4]!r})")
    if width <= 0 or height <= 0:
        raise FormatError("bad_dimensions", f"nonpositive flo dimensions {width}x{height}")
    n = height * width * 2
    avail = (len(data) - 12) // 4
    if avail < n:
        raise FormatError("truncated", f"flo payload has {avail} floats, needs {n}")
    raw = np.frombuffer(data, dtype="<f4", offset=12, count=n)
    raw = raw.astype(np.float64).reshape(height, width, 2)
    known = np.all(np.isfinite(raw) & (np.abs(raw) < FLO_SENTINEL), axis=-1)
    return Grid2(np.where(known[..., None], raw, 0.0)), BinaryMask(known)


def write_flo(flow: Grid2) -> bytes:
    header = struct.pack("<fii", FLO_MAGIC, flow.width, flow.height)
    return header + flow.data.astype("<f4").tobytes()


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # Skips whitespace and '#' comment lines, returns (token, pos past token).
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("truncated", "header ended before all fields were read")
    return data[start:pos], pos


def read_pfm(data: bytes):
    """Parse a scalar PFM ("Pf") byte string.

    Handles both endiannesses (negative scale = little-endian); rows are
    stored bottom-to-top. Returns (grid, valid) with non-finite samples
    mapped to 0 / invalid, mirroring read_flo.
    """
    try:
        kind, pos = _next_token(data, 0)
    except FormatError:
        raise FormatError("bad_header", "empty PFM input") from None
    if kind == b"PF":
        raise FormatError("unsupported_format", "color PFM (PF) is not supported, only Pf")
    if kind != b"Pf":
        raise FormatError("bad_header", f"not a PFM header: {kind!r}")
    wtok, pos = _next_token(data, pos)
    htok, pos = _next_token(data, pos)
    stok, pos = _next_token(data, pos)
    try:
        width, height = int(wtok), int(htok)
        scale = float(stok)
    except ValueError:
        raise FormatError("bad_header",
                          f"bad PFM dimension/scale fields {wtok!r} {htok!r} {stok!r}") from None
    if width <= 0 or height <= 0:
        raise FormatError("bad_dimensions", f"nonpositive PFM dimensions {width}x{height}")
    if scale == 0:
        raise FormatError("bad_header", "PFM scale must be nonzero")
    pos += 1  # exactly one whitespace byte separates the header from the data
    endian = "<" if scale < 0 else ">"
    n = height * width
    avail = (len(data) - pos) // 4
    if avail < n:
        raise FormatError("truncated", f"PFM payload has {max(avail, 0)} floats, needs {n}")
    payload = np.frombuffer(data, dtype=endian + "f4", offset=pos, count=n)
    raw = payload.astype(np.float64).reshape(height, width)[::-1]
    finite = np.isfinite(raw)
    return Grid1(np.where(finite, raw, 0.0)), BinaryMask(finite)


def write_pfm(grid: Grid1) -> bytes:
    header = b"Pf\n%d %d\n-1.0\n" % (grid.width, grid.height)
    return header + grid.data[::-1].astype("<f4").tobytes()


def write_pgm(m: Grid1 | BinaryMask,
              value_range: tuple[float, float] | None = None) -> bytes:
    """Render a map as a binary 8-bit PGM (P5, maxval 255).

    Masks come out bilevel (False=0, True=255). Scalar maps are mapped
    affinely onto [0, 255] with round-half-up and clamping; the default range
    is (0, 1) for maps that already lie in [0, 1] (confidence maps) and
    (min, max) otherwise. A degenerate range produces uniform gray 128 and a
    DegenerateRangeWarning.
    """
    if isinstance(m, BinaryMask):
        pixels = np.where(m.data, 255, 0).astype(np.uint8)
    else:
        data = m.data
        if value_range is None:
            if data.min() >= 0.0 and data.max() <= 1.0:
                lo, hi = 0.0, 1.0
            else:
                lo, hi = float(data.min()), float(data.max())
        else:
            lo, hi = float(value_range[0]), float(value_range[1])
        if hi == lo:
            warnings.warn(f"degenerate gray range ({lo}, {hi}); emitting uniform 128",
                          DegenerateRangeWarning, stacklevel=2)
            pixels = np.full(data.shape, 128, dtype=np.uint8)
        else:
            unit = np.clip((data - lo) / (hi - lo), 0.0, 1.0)
            pixels = np.floor(unit * 255.0 + 0.5).astype(np.uint8)
    header = b"P5\n%d %d\n255\n" % (pixels.shape[1], pixels.shape[0])
    return header + pixels.tobytes()


def read_pgm_mask(data: bytes) -> BinaryMask:
    """Parse a binary PGM into a mask: samples >= half the maxval are True."""
    kind, pos = _next_token(data, 0)
    if kind != b"P5":
        raise FormatError("bad_header", f"not a binary PGM header: {kind!r}")
    wtok, pos = _next_token(data, pos)
    htok, pos = _next_token(data, pos)
    mtok, pos = _next_token(data, pos)
    try:
        width, height, maxval = int(wtok), int(htok), int(mtok)
    except ValueError:
        raise FormatError("bad_header", "bad PGM header fields") from None
    if width <= 0 or height <= 0:
        raise FormatError("bad_dimensions", f"nonpositive PGM dimensions {width}x{height}")
    if not (0 < maxval < 256):
        raise FormatError("unsupported_format", f"PGM maxval {maxval} not in 1..255")
    pos += 1
    n = height * width
    if len(data) - pos < n:
        raise FormatError("truncated", f"PGM payload has {len(data) - pos} bytes, needs {n}")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=pos, count=n).reshape(height, width)
    return BinaryMask(pixels >= (maxval + 1) // 2)


METRICS_COLUMNS = (
    ["epe"]
    + [f"px{t:g}" for t in OUTLIER_THRESHOLDS]
    + ["fl_all", "s0_10", "s10_40", "s40plus", "epe_matched", "epe_unmatched", "avg_err"]
    + [f"bad_{t:g}" for t in BAD_P_THRESHOLDS]
    + ["n_valid", "n_matched", "n_unmatched"]
)


def _cell(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, int):
        return str(value)
    return f"{value:.4f}"


def write_metrics_csv(report: MetricReport, stream) -> None:
    """One header row plus one data row; None becomes "NA", floats get 4
    decimals. The column order is fixed (see METRICS_COLUMNS)."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    row = (
        [report.epe]
        + [report.outlier_rates[t] for t in OUTLIER_THRESHOLDS]
        + [report.fl_all]
        + list(report.speed_binned_epe)
        + [report.matched_epe, report.unmatched_epe, report.avg_err]
        + [report.bad_p[t] for t in BAD_P_THRESHOLDS]
        + [report.pixel_counts["valid"], report.pixel_counts["matched"],
           report.pixel_counts["unmatched"]]
    )
    writer.writerow([_cell(v) for v in row])


COMPARISON_COLUMNS = ("mode", "epe", "epe_matched", "epe_unmatched", "px3", "seeds")


def write_comparison_csv(rows, stream) -> None:
    """Rows of per-mode seed-averaged results (see toytrain.compare_runs)."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(COMPARISON_COLUMNS)
    for row in rows:
        writer.writerow([row.mode, _cell(row.epe), _cell(row.epe_matched),
                         _cell(row.epe_unmatched), _cell(row.px3), row.n_seeds])
