# spherekit/remap.py
"""
Image-space realizations of bipolar re-projection (BRP) and circular
rotation (CR) over ERP tensors.

BRP turns the sphere a quarter about the y axis so the poles land on the
equator, then back-projects onto a fresh canvas through a precomputed
SamplingGrid and wrap-aware bilinear interpolation. CR is an exact column
roll.
"""

import logging
from enum import Enum
from functools import lru_cache

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from spherekit.errors import ShapeError
from spherekit.sphere_core import (
    AxisRotation,
    GridShape,
    SphCoord,
    lat_lon_to_pixel,
    lat_lon_to_xyz,
    pixel_centers,
    pixel_to_lat_lon,
    rotate_xyz,
    xyz_to_lat_lon,
)

logger = logging.getLogger(__name__)

# Takes the north-pole axis z onto the equatorial axis x.
BRP_ROTATION = AxisRotation.quarter_turn("y")


class ErpTensor(BaseModel):
    """C x H x W float64 feature grid on the ERP lattice. Read-only once built."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    data: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, values):
        if not isinstance(values, dict) or "data" not in values:
            return values
        data = np.array(values["data"], dtype=np.float64, copy=True)
        if data.ndim == 2:
            data = data[np.newaxis]
        return {**values, "data": data}

    @model_validator(mode="after")
    def _check(self) -> "ErpTensor":
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise ValueError(f"ErpTensor needs C x H x W data, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("ErpTensor entries must be finite")
        self.data.setflags(write=False)
        return self

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> GridShape:
        return GridShape(height=self.data.shape[1], width=self.data.shape[2])


class BrpDirection(str, Enum):
    FORWARD = "forward"
    INVERSE = "inverse"

    @property
    def rotation(self) -> AxisRotation:
        return BRP_ROTATION if self is BrpDirection.FORWARD else BRP_ROTATION.inverse()


class SamplingGrid(BaseModel):
    """Source location of every output pixel, in pixel-index space.

    Index space puts pixel centers on integers: src_x in [0, W) (wrapped),
    src_y in [0, H - 1] (clamped).
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    shape: GridShape
    src_x: np.ndarray
    src_y: np.ndarray

    @model_validator(mode="after")
    def _check(self) -> "SamplingGrid":
        expected = (self.shape.height, self.shape.width)
        if self.src_x.shape != expected or self.src_y.shape != expected:
            raise ValueError(f"sampling grid arrays must be {expected}")
        if np.any(self.src_x < 0) or np.any(self.src_x >= self.shape.width):
            raise ValueError("src_x must lie in [0, W)")
        if np.any(self.src_y < 0) or np.any(self.src_y > self.shape.height - 1):
            raise ValueError("src_y must lie in [0, H - 1]")
        self.src_x.setflags(write=False)
        self.src_y.setflags(write=False)
        return self

    @classmethod
    def from_continuous(cls, shape: GridShape, u, v) -> "SamplingGrid":
        """Builds a grid from continuous (u, v) source coordinates."""
        src_x = np.mod(np.asarray(u, dtype=np.float64) - 0.5, shape.width)
        src_x = np.where(src_x >= shape.width, 0.0, src_x)
        src_y = np.clip(np.asarray(v, dtype=np.float64) - 0.5, 0.0, shape.height - 1)
        return cls(shape=shape, src_x=src_x, src_y=src_y)

    @classmethod
    def identity(cls, shape: GridShape) -> "SamplingGrid":
        rows, cols = np.indices((shape.height, shape.width), dtype=np.float64)
        return cls(shape=shape, src_x=cols, src_y=rows)

    @classmethod
    def column_shift(cls, shape: GridShape, k: int) -> "SamplingGrid":
        """Output column j reads input column (j + k) mod W."""
        rows, cols = np.indices((shape.height, shape.width))
        return cls(shape=shape, src_x=np.mod(cols + k, shape.width).astype(np.float64),
                   src_y=rows.astype(np.float64))


def _require_erp(shape: GridShape) -> None:
    if not shape.is_erp():
        raise ShapeError(f"BRP needs W = 2H, got {shape.height}x{shape.width}")


@lru_cache(maxsize=64)
def build_brp_grid(shape: GridShape, direction: BrpDirection) -> SamplingGrid:
    _require_erp(shape)
    u, v = pixel_centers(shape)
    lat, lon = pixel_to_lat_lon(u, v, shape)
    xyz = rotate_xyz(np.stack(lat_lon_to_xyz(lat, lon)), direction.rotation)
    src_lat, src_lon = xyz_to_lat_lon(*xyz)
    src_u, src_v = lat_lon_to_pixel(src_lat, src_lon, shape)
    logger.debug("Built %s BRP grid for %dx%d", direction.value, shape.height, shape.width)
    return SamplingGrid.from_continuous(shape, src_u, src_v)


def pole_target(shape: GridShape, direction: BrpDirection = BrpDirection.FORWARD) -> SphCoord:
    """Output position where the source north pole lands after the remap."""
    north = (np.float64(0.0), np.float64(0.0), np.float64(1.0))
    lat, lon = xyz_to_lat_lon(*rotate_xyz(north, direction.rotation.inverse()))
    return SphCoord(lat=float(lat), lon=float(lon))


def bilinear_sample(data: np.ndarray, src_x: np.ndarray, src_y: np.ndarray) -> np.ndarray:
    """Samples a C x H x W array at index-space points; columns wrap, rows clamp."""
    _, height, width = data.shape
    x0 = np.floor(src_x)
    y0 = np.clip(np.floor(src_y), 0, height - 1)
    fx = src_x - x0
    fy = np.clip(src_y, 0, height - 1) - y0
    x0 = np.mod(x0.astype(np.int64), width)
    x1 = np.mod(x0 + 1, width)
    y0 = y0.astype(np.int64)
    y1 = np.minimum(y0 + 1, height - 1)
    top = data[:, y0, x0] * (1.0 - fx) + data[:, y0, x1] * fx
    bottom = data[:, y1, x0] * (1.0 - fx) + data[:, y1, x1] * fx
    blended = top * (1.0 - fy) + bottom * fy
    # Sources on a pixel center are copied, which keeps the sign of -0.0.
    on_center = (fx == 0.0) & (fy == 0.0)
    return np.where(on_center, data[:, y0, x0], blended)


def apply_grid(t: ErpTensor, g: SamplingGrid) -> ErpTensor:
    if t.shape != g.shape:
        raise ShapeError(
            f"tensor {t.shape.height}x{t.shape.width} does not match grid {g.shape.height}x{g.shape.width}"
        )
    return ErpTensor(data=bilinear_sample(t.data, g.src_x, g.src_y))


def brp(t: ErpTensor) -> ErpTensor:
    return apply_grid(t, build_brp_grid(t.shape, BrpDirection.FORWARD))


def brp_inverse(t: ErpTensor) -> ErpTensor:
    return apply_grid(t, build_brp_grid(t.shape, BrpDirection.INVERSE))


def circular_rotate(t: ErpTensor, cols: int) -> ErpTensor:
    """Moves input column u to output column (u + cols) mod W."""
    return ErpTensor(data=np.roll(t.data, int(cols) % t.shape.width, axis=2))


def circular_rotate_inverse(t: ErpTensor, cols: int) -> ErpTensor:
    return circular_rotate(t, -cols)


def upsample2(t: ErpTensor) -> ErpTensor:
    """x2 bilinear upsampling on the ERP lattice (pixel-center aligned)."""
    height, width = t.shape.height * 2, t.shape.width * 2
    rows, cols = np.indices((height, width), dtype=np.float64)
    src_x = np.mod((cols + 0.5) / 2.0 - 0.5, t.shape.width)
    src_y = np.clip((rows + 0.5) / 2.0 - 0.5, 0.0, t.shape.height - 1)
    return ErpTensor(data=bilinear_sample(t.data, src_x, src_y))
