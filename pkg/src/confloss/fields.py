"""Dense grid types and geometric primitives: bilinear sampling, backward
warping, horizontal flips, and the disparity <-> flow embedding.

All grids are row-major with (row y, column x) indexing, x horizontal.
Values are immutable after construction, so they are safe to share across
threads; constructors reject NaN/Inf.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


def _as_readonly(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=dtype)
    if out is arr:
        out = arr.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Grid2:
    """H x W grid of 2-vectors (u, v), in pixels. Stored as (H, W, 2) float64."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise ValueError(f"Grid2 expects shape (H, W, 2), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"Grid2 dimensions must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("Grid2 rejects NaN/Inf entries")
        object.__setattr__(self, "data", _as_readonly(arr, np.float64))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    @classmethod
    def zeros(cls, height: int, width: int) -> "Grid2":
        return cls(np.zeros((height, width, 2)))

    @classmethod
    def constant(cls, height: int, width: int, u: float, v: float) -> "Grid2":
        out = np.empty((height, width, 2))
        out[..., 0] = u
        out[..., 1] = v
        return cls(out)


@dataclass(frozen=True, eq=False)
class Grid1:
    """H x W grid of scalars: disparity (pixels) or a confidence/weight map."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"Grid1 expects shape (H, W), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"Grid1 dimensions must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("Grid1 rejects NaN/Inf entries")
        object.__setattr__(self, "data", _as_readonly(arr, np.float64))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def zeros(cls, height: int, width: int) -> "Grid1":
        return cls(np.zeros((height, width)))

    @classmethod
    def full(cls, height: int, width: int, value: float) -> "Grid1":
        return cls(np.full((height, width), float(value)))


# A Grid1 whose entries all lie in [0, 1].
ConfidenceMap = Grid1


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """H x W boolean grid (validity masks, occlusion masks)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype != np.bool_:
            raise ValueError(f"BinaryMask expects boolean data, got dtype {arr.dtype}")
        if arr.ndim != 2:
            raise ValueError(f"BinaryMask expects shape (H, W), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"BinaryMask dimensions must be positive, got {arr.shape}")
        object.__setattr__(self, "data", _as_readonly(arr, np.bool_))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def full(cls, height: int, width: int, value: bool = True) -> "BinaryMask":
        return cls(np.full((height, width), bool(value), dtype=bool))

    def count(self) -> int:
        return int(self.data.sum())

    def __invert__(self) -> "BinaryMask":
        return BinaryMask(~self.data)

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        return BinaryMask(self.data & other.data)


def check_same_shape(*grids) -> tuple[int, int]:
    shapes = {g.data.shape[:2] for g in grids}
    if len(shapes) != 1:
        raise ValueError(f"dimension mismatch: {sorted(shapes)}")
    return next(iter(shapes))


def sample_values(data: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    """Bilinearly sample `data` (H, W[, C]) at float coordinates.

    Returns (values, in_bounds). Out-of-bounds samples are 0 with
    in_bounds False. In-bounds means (x, y) in [0, W-1] x [0, H-1].
    """
    h, w = data.shape[:2]
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inb = (xs >= 0.0) & (xs <= w - 1.0) & (ys >= 0.0) & (ys <= h - 1.0)

    # Clamp so indexing stays legal; weights of clamped corners are 0 for
    # in-bounds points and out-of-bounds results are zeroed below.
    xc = np.clip(xs, 0.0, w - 1.0)
    yc = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0

    if data.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]

    v00 = data[y0, x0]
    v01 = data[y0, x1]
    v10 = data[y1, x0]
    v11 = data[y1, x1]
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    values = top * (1.0 - fy) + bot * fy

    if data.ndim == 3:
        values = np.where(inb[..., None], values, 0.0)
    else:
        values = np.where(inb, values, 0.0)
    return values, inb


def bilinear_sample(field: Grid2 | Grid1, x: float, y: float):
    """Sample one point. Returns (value, in_bounds); value is 0 out of bounds.

    For a Grid2 the value is a length-2 array, for a Grid1 a float.
    """
    values, inb = sample_values(field.data, np.float64(x), np.float64(y))
    if isinstance(field, Grid2):
        return np.asarray(values, dtype=np.float64), bool(inb)
    return float(values), bool(inb)


def coordinate_grids(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel-center coordinate arrays (xs, ys), each (H, W)."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return xs, ys


def backward_warp(field: Grid2 | Grid1, flow: Grid2):
    """warped(x) = field(x + flow(x)) with bilinear sampling.

    Returns (warped, validity); validity(x) is False where the target falls
    outside the frame (where the warped value is 0).
    """
    check_same_shape(field, flow)
    h, w = flow.shape
    xs, ys = coordinate_grids(h, w)
    tx = xs + flow.data[..., 0]
    ty = ys + flow.data[..., 1]
    values, inb = sample_values(field.data, tx, ty)
    warped = Grid2(values) if isinstance(field, Grid2) else Grid1(values)
    return warped, BinaryMask(inb)


def hflip(field: Grid2 | Grid1 | BinaryMask):
    """Mirror columns (j -> width-1-j). No sign change on Grid2 components;
    sign handling for reverse disparities lives in reverse_disparity_restore."""
    flipped = field.data[:, ::-1].copy()
    return type(field)(flipped)


def reverse_disparity_restore(d_flipped_estimate: Grid1) -> Grid1:
    """Undo the swap-and-flip trick: flip columns back and negate.

    output(y, j) = -d_flipped_estimate(y, width-1-j). Applying it twice is
    the identity (bit-exact).
    """
    return Grid1(-d_flipped_estimate.data[:, ::-1])


LEFT_TO_RIGHT = "left_to_right"
RIGHT_TO_LEFT = "right_to_left"


def disparity_to_flow(d: Grid1, direction: str) -> Grid2:
    """Embed a rectified disparity map as a 2D flow field.

    Sign convention: positive disparity, left pixel (x, y) matches right
    pixel (x - d, y). left_to_right gives (-d, 0), right_to_left (+d, 0);
    the vertical component is always 0.
    """
    if direction not in (LEFT_TO_RIGHT, RIGHT_TO_LEFT):
        raise ValueError(f"unknown direction {direction!r}")
    if np.any(d.data < 0):
        warnings.warn("disparity map contains negative entries", RuntimeWarning,
                      stacklevel=2)
    sign = -1.0 if direction == LEFT_TO_RIGHT else 1.0
    out = np.zeros((d.height, d.width, 2))
    out[..., 0] = sign * d.data
    return Grid2(out)
