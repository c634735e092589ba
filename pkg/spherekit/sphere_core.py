# spherekit/sphere_core.py
"""
Coordinate conversions between the ERP pixel lattice, latitude/longitude on
the unit sphere and unit 3D Cartesian vectors, plus great-circle distance.

Conventions:
    - lat = pi * (1/2 - v/H), so row 0's top edge is the north pole.
    - lon = 2*pi*u/W - pi, so column 0's left edge is lon = -pi.
    - x = cos(lat)cos(lon), y = cos(lat)sin(lon), z = sin(lat) (z is polar).
    - Pixel centers sit at (u + 0.5, v + 0.5).

Every scalar operation is backed by an array kernel of the same name family
(``pixel_to_lat_lon`` and friends) so grid builders and scalar callers share
one implementation.
"""

import math
from typing import Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from spherekit.errors import DomainError

__all__ = [
    "GridShape",
    "PixelCoord",
    "SphCoord",
    "UnitVec3",
    "AxisRotation",
    "pix_to_sph",
    "sph_to_pix",
    "sph_to_unit",
    "unit_to_sph",
    "haversine",
    "apply_rotation",
    "pixel_to_lat_lon",
    "lat_lon_to_pixel",
    "lat_lon_to_xyz",
    "xyz_to_lat_lon",
    "rotate_xyz",
    "haversine_distance",
    "pixel_centers",
]

UNIT_TOLERANCE = 1e-6


# --- Value types ---
class GridShape(BaseModel):
    """Rows x columns of an ERP lattice."""

    model_config = ConfigDict(frozen=True)

    height: int = Field(..., ge=1, description="H, number of rows")
    width: int = Field(..., ge=1, description="W, number of columns")

    @property
    def size(self) -> int:
        return self.height * self.width

    def is_erp(self) -> bool:
        """True when the lattice has the 2:1 aspect BRP needs."""
        return self.width == 2 * self.height

    def halved(self, times: int = 1) -> "GridShape":
        factor = 2**times
        return GridShape(height=self.height // factor, width=self.width // factor)


class PixelCoord(BaseModel):
    model_config = ConfigDict(frozen=True)

    u: float = Field(..., allow_inf_nan=False)
    v: float = Field(..., allow_inf_nan=False)


class SphCoord(BaseModel):
    """Latitude/longitude in radians. Longitudes outside [-pi, pi) are wrapped."""

    model_config = ConfigDict(frozen=True)

    lat: float = Field(..., ge=-math.pi / 2, le=math.pi / 2, allow_inf_nan=False)
    lon: float = Field(..., allow_inf_nan=False)

    @field_validator("lon")
    @classmethod
    def _wrap_lon(cls, lon: float) -> float:
        if -math.pi <= lon < math.pi:
            return lon
        wrapped = math.fmod(lon + math.pi, 2 * math.pi)
        if wrapped < 0:
            wrapped += 2 * math.pi
        wrapped -= math.pi
        return -math.pi if wrapped >= math.pi else wrapped


class UnitVec3(BaseModel):
    """A 3-vector expected to lie on the unit sphere.

    Unit length is not enforced at construction; ``unit_to_sph`` rejects
    vectors whose norm is off by more than 1e-6.
    """

    model_config = ConfigDict(frozen=True)

    x: float = Field(..., allow_inf_nan=False)
    y: float = Field(..., allow_inf_nan=False)
    z: float = Field(..., allow_inf_nan=False)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


_QUARTER_TURNS = {
    "x": ((1, 0, 0), (0, 0, -1), (0, 1, 0)),
    "y": ((0, 0, 1), (0, 1, 0), (-1, 0, 0)),
    "z": ((0, -1, 0), (1, 0, 0), (0, 0, 1)),
}


class AxisRotation(BaseModel):
    """A proper rotation restricted to signed axis permutations."""

    model_config = ConfigDict(frozen=True)

    matrix: Tuple[Tuple[int, int, int], Tuple[int, int, int], Tuple[int, int, int]]

    @model_validator(mode="after")
    def _check_signed_permutation(self) -> "AxisRotation":
        m = np.array(self.matrix, dtype=np.int64)
        if not np.all(np.isin(m, (-1, 0, 1))):
            raise ValueError("rotation entries must be in {-1, 0, +1}")
        if not np.array_equal(m @ m.T, np.eye(3, dtype=np.int64)):
            raise ValueError("rotation matrix is not orthonormal")
        if round(np.linalg.det(m)) != 1:
            raise ValueError("rotation matrix must have determinant +1")
        return self

    @classmethod
    def identity(cls) -> "AxisRotation":
        return cls(matrix=((1, 0, 0), (0, 1, 0), (0, 0, 1)))

    @classmethod
    def quarter_turn(cls, axis: Literal["x", "y", "z"], turns: int = 1) -> "AxisRotation":
        """Right-handed rotation by ``turns`` * 90 degrees about ``axis``."""
        step = np.array(_QUARTER_TURNS[axis], dtype=np.int64)
        m = np.linalg.matrix_power(step, turns % 4)
        return cls(matrix=tuple(tuple(int(e) for e in row) for row in m))

    def as_array(self) -> np.ndarray:
        return np.array(self.matrix, dtype=np.int64)

    def inverse(self) -> "AxisRotation":
        return AxisRotation(matrix=tuple(zip(*self.matrix)))

    def compose(self, other: "AxisRotation") -> "AxisRotation":
        """Rotation equal to applying ``other`` first, then ``self``."""
        m = self.as_array() @ other.as_array()
        return AxisRotation(matrix=tuple(tuple(int(e) for e in row) for row in m))

    def signed_permutation(self) -> Tuple[Tuple[int, int, int], Tuple[int, int, int]]:
        """(source axis, sign) for each output axis."""
        perm = tuple(next(j for j in range(3) if row[j] != 0) for row in self.matrix)
        signs = tuple(self.matrix[i][perm[i]] for i in range(3))
        return perm, signs


# --- Array kernels ---
def pixel_to_lat_lon(u, v, shape: GridShape):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    lat = np.pi * (0.5 - v / shape.height)
    lon = 2.0 * np.pi * np.mod(u, shape.width) / shape.width - np.pi
    return lat, lon


def lat_lon_to_pixel(lat, lon, shape: GridShape):
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    u = np.mod((lon + np.pi) * shape.width / (2.0 * np.pi), shape.width)
    u = np.where(u >= shape.width, 0.0, u)
    v = shape.height * (0.5 - lat / np.pi)
    return u, v


def lat_lon_to_xyz(lat, lon):
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    cos_lat = np.cos(lat)
    return cos_lat * np.cos(lon), cos_lat * np.sin(lon), np.sin(lat)


def xyz_to_lat_lon(x, y, z):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    # arctan2 form equals arcsin(z) on the unit sphere and stays accurate near the poles
    lat = np.arctan2(z, np.hypot(x, y))
    at_pole = (x == 0.0) & (y == 0.0)
    lon = np.where(at_pole, 0.0, np.arctan2(y, x))
    lon = np.where(lon >= np.pi, lon - 2.0 * np.pi, lon)
    return lat, lon


def rotate_xyz(xyz, rotation: AxisRotation):
    """Applies a signed axis permutation to a (3, ...) stack of vectors exactly."""
    perm, signs = rotation.signed_permutation()
    return tuple(xyz[perm[i]] if signs[i] > 0 else -xyz[perm[i]] for i in range(3))


def haversine_distance(lat1, lon1, lat2, lon2):
    """Great-circle distance on the unit sphere (R = 1), broadcasting over arrays."""
    lat1 = np.asarray(lat1, dtype=np.float64)
    lat2 = np.asarray(lat2, dtype=np.float64)
    half_dlat = np.abs(lat2 - lat1) / 2.0
    half_dlon = np.abs(np.asarray(lon2, dtype=np.float64) - np.asarray(lon1, dtype=np.float64)) / 2.0
    h = np.sin(half_dlat) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(half_dlon) ** 2
    h = np.clip(h, 0.0, 1.0)
    return 2.0 * np.arctan2(np.sqrt(h), np.sqrt(1.0 - h))


def pixel_centers(shape: GridShape, row_start: int = 0, rows: int | None = None,
                  col_start: int = 0, cols: int | None = None):
    """(u, v) continuous coordinates of a block of pixel centers, each of shape (rows, cols)."""
    rows = shape.height - row_start if rows is None else rows
    cols = shape.width - col_start if cols is None else cols
    v = np.arange(row_start, row_start + rows, dtype=np.float64) + 0.5
    u = np.arange(col_start, col_start + cols, dtype=np.float64) + 0.5
    uu, vv = np.meshgrid(u, v)
    return uu, vv


# --- Scalar operations ---
def pix_to_sph(p: PixelCoord, shape: GridShape) -> SphCoord:
    if not 0.0 <= p.v <= shape.height:
        raise DomainError(f"row coordinate {p.v} outside [0, {shape.height}]")
    lat, lon = pixel_to_lat_lon(p.u, p.v, shape)
    return SphCoord(lat=float(lat), lon=float(lon))


def sph_to_pix(s: SphCoord, shape: GridShape) -> PixelCoord:
    u, v = lat_lon_to_pixel(s.lat, s.lon, shape)
    return PixelCoord(u=float(u), v=float(v))


def sph_to_unit(s: SphCoord) -> UnitVec3:
    x, y, z = lat_lon_to_xyz(s.lat, s.lon)
    return UnitVec3(x=float(x), y=float(y), z=float(z))


def unit_to_sph(v: UnitVec3) -> SphCoord:
    norm = v.norm()
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise DomainError(f"vector norm {norm!r} is not unit within {UNIT_TOLERANCE}")
    lat, lon = xyz_to_lat_lon(v.x, v.y, v.z)
    return SphCoord(lat=float(lat), lon=float(lon))


def haversine(s1: SphCoord, s2: SphCoord) -> float:
    return float(haversine_distance(s1.lat, s1.lon, s2.lat, s2.lon))


def apply_rotation(v: UnitVec3, r: AxisRotation) -> UnitVec3:
    x, y, z = rotate_xyz((v.x, v.y, v.z), r)
    return UnitVec3(x=x, y=y, z=z)
