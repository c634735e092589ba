# spherekit/priors.py
"""
Spherical-distance position embeddings.

- CLE: great-circle distances between the N*N pixel centers of one window.
  Only the window row matters (distances depend on longitude differences
  only), so one table per window row serves every window column.
- GSPE: the same distances over every pixel of the f3 (H/16 x W/16) grid.
- GCPE: a global attention block over f3 biased by -alpha_g * GSPE yields a
  global key; every pyramid level then queries that key to produce its own
  position embedding.
"""

import logging
import math
from functools import lru_cache
from typing import Dict, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import softmax

from spherekit.config import SPHEREKIT_MAX_GSPE_TOKENS
from spherekit.errors import ConfigurationError, DomainError, ShapeError
from spherekit.remap import ErpTensor
from spherekit.sphere_core import GridShape, haversine_distance, pixel_centers, pixel_to_lat_lon

logger = logging.getLogger(__name__)

PYRAMID_LEVELS = 5
REFERENCE_LEVEL = 2  # f3, H/8 x W/8 of the input grid
GSPE_CACHE_SIZE = 2


# --- Types ---
class WindowSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1, description="window side length N")
    shape: GridShape

    @model_validator(mode="after")
    def _check_divisible(self) -> "WindowSpec":
        if self.shape.height % self.n or self.shape.width % self.n:
            raise ValueError(
                f"window {self.n} does not divide grid {self.shape.height}x{self.shape.width}"
            )
        return self

    @classmethod
    def for_shape(cls, shape: GridShape, n: int) -> "WindowSpec":
        """Like the constructor, but reports non-divisible grids as a ShapeError."""
        if n < 1 or shape.height % n or shape.width % n:
            raise ShapeError(f"window {n} does not divide grid {shape.height}x{shape.width}")
        return cls(n=n, shape=shape)

    @property
    def window_rows(self) -> int:
        return self.shape.height // self.n

    @property
    def window_cols(self) -> int:
        return self.shape.width // self.n

    @property
    def tokens(self) -> int:
        return self.n * self.n


class CleTable(BaseModel):
    """N^2 x N^2 great-circle distances inside any window of one window row."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    window_row: int
    n: int
    dist: np.ndarray


class GspeMatrix(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    shape_f3: GridShape
    dist: np.ndarray


class FeaturePyramid(BaseModel):
    """f1..f5 at H/2^k x W/2^k, k = 1..5."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    levels: Tuple[ErpTensor, ErpTensor, ErpTensor, ErpTensor, ErpTensor]

    @model_validator(mode="after")
    def _check_halving(self) -> "FeaturePyramid":
        for finer, coarser in zip(self.levels, self.levels[1:]):
            fs, cs = finer.shape, coarser.shape
            if fs.height != 2 * cs.height or fs.width != 2 * cs.width:
                raise ValueError(
                    f"pyramid levels must halve: {fs.height}x{fs.width} -> {cs.height}x{cs.width}"
                )
        return self

    @property
    def f3(self) -> ErpTensor:
        return self.levels[REFERENCE_LEVEL]


def _finite(matrix: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(matrix)):
        raise ValueError(f"{name} must be finite")
    return matrix


class GcpeParams(BaseModel):
    """Weights of the query-based GCPE module. Linear maps act on row vectors."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    model_dim: int = Field(..., ge=1)
    input_proj: np.ndarray  # C3 x d, f3 tokens -> model space
    global_q: np.ndarray  # d x d
    global_k: np.ndarray  # d x d
    global_v: np.ndarray  # d x d
    alpha_g: float = Field(..., allow_inf_nan=False)
    query_projs: Tuple[np.ndarray, ...]  # C_k x d per level
    key_projs: Tuple[np.ndarray, ...]  # d x d per level
    output_proj: np.ndarray  # d x d

    @model_validator(mode="after")
    def _check(self) -> "GcpeParams":
        d = self.model_dim
        if len(self.query_projs) != PYRAMID_LEVELS or len(self.key_projs) != PYRAMID_LEVELS:
            raise ValueError("GCPE needs one query and one key projection per pyramid level")
        if self.input_proj.ndim != 2 or self.input_proj.shape[1] != d:
            raise ValueError("input_proj must be C3 x d")
        for name in ("global_q", "global_k", "global_v", "output_proj"):
            if getattr(self, name).shape != (d, d):
                raise ValueError(f"{name} must be {d} x {d}")
            _finite(getattr(self, name), name)
        for k, (q, key) in enumerate(zip(self.query_projs, self.key_projs)):
            if q.ndim != 2 or q.shape[1] != d:
                raise ValueError(f"query_projs[{k}] must be C_k x {d}")
            if key.shape != (d, d):
                raise ValueError(f"key_projs[{k}] must be {d} x {d}")
            _finite(q, f"query_projs[{k}]")
            _finite(key, f"key_projs[{k}]")
        _finite(self.input_proj, "input_proj")
        return self


class GcpeOutput(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    gcpes: Tuple[ErpTensor, ...]
    global_key: np.ndarray  # M x d
    global_attention: np.ndarray  # M x M
    scale_attention: Tuple[np.ndarray, ...]  # N_k x M per level


# --- CLE ---
def cle_window_distances(spec: WindowSpec, window_row: int) -> CleTable:
    if not 0 <= window_row < spec.window_rows:
        raise DomainError(f"window row {window_row} outside [0, {spec.window_rows})")
    u, v = pixel_centers(spec.shape, row_start=window_row * spec.n, rows=spec.n, cols=spec.n)
    lat, lon = pixel_to_lat_lon(u.ravel(), v.ravel(), spec.shape)
    dist = haversine_distance(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    dist.setflags(write=False)
    return CleTable(window_row=window_row, n=spec.n, dist=dist)


@lru_cache(maxsize=128)
def cle_tables(spec: WindowSpec) -> Dict[int, CleTable]:
    """One table per window row."""
    return {row: cle_window_distances(spec, row) for row in range(spec.window_rows)}


def cle_bias(table: CleTable, alpha: float) -> np.ndarray:
    if not math.isfinite(alpha):
        raise ConfigurationError(f"CLE coefficient must be finite, got {alpha}")
    return -alpha * table.dist


# --- GSPE ---
# A matrix at the token cap is 128 MiB.
@lru_cache(maxsize=GSPE_CACHE_SIZE)
def gspe_matrix(shape_f3: GridShape) -> GspeMatrix:
    if shape_f3.size > SPHEREKIT_MAX_GSPE_TOKENS:
        raise ConfigurationError(
            f"GSPE over {shape_f3.size} tokens exceeds SPHEREKIT_MAX_GSPE_TOKENS={SPHEREKIT_MAX_GSPE_TOKENS}"
        )
    u, v = pixel_centers(shape_f3)
    lat, lon = pixel_to_lat_lon(u.ravel(), v.ravel(), shape_f3)
    dist = haversine_distance(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    dist.setflags(write=False)
    logger.debug("Built GSPE matrix over %d tokens", shape_f3.size)
    return GspeMatrix(shape_f3=shape_f3, dist=dist)


# --- GCPE ---
def tokens_of(t: ErpTensor) -> np.ndarray:
    """Row-major (H*W) x C token matrix of a tensor."""
    return t.data.reshape(t.channels, -1).T


def tensor_from_tokens(tokens: np.ndarray, shape: GridShape) -> ErpTensor:
    return ErpTensor(data=tokens.T.reshape(tokens.shape[1], shape.height, shape.width))


def gcpe_forward(pyramid: FeaturePyramid, params: GcpeParams, gspe: GspeMatrix) -> GcpeOutput:
    f3 = pyramid.f3
    if f3.shape != gspe.shape_f3:
        raise ShapeError(
            f"f3 is {f3.shape.height}x{f3.shape.width} but GSPE was built for "
            f"{gspe.shape_f3.height}x{gspe.shape_f3.width}"
        )
    if f3.channels != params.input_proj.shape[0]:
        raise ShapeError(f"f3 has {f3.channels} channels, input_proj expects {params.input_proj.shape[0]}")
    scale = 1.0 / math.sqrt(params.model_dim)

    tokens = tokens_of(f3) @ params.input_proj
    q, k, v = tokens @ params.global_q, tokens @ params.global_k, tokens @ params.global_v
    global_attention = softmax(q @ k.T * scale - params.alpha_g * gspe.dist, axis=-1)
    global_key = global_attention @ v

    gcpes, scale_attention = [], []
    for level, (feature, q_proj, k_proj) in enumerate(
        zip(pyramid.levels, params.query_projs, params.key_projs)
    ):
        if feature.channels != q_proj.shape[0]:
            raise ShapeError(
                f"f{level + 1} has {feature.channels} channels, query projection expects {q_proj.shape[0]}"
            )
        keys = global_key @ k_proj
        queries = tokens_of(feature) @ q_proj
        attention = softmax(queries @ keys.T * scale, axis=-1)
        gcpes.append(tensor_from_tokens(attention @ keys @ params.output_proj, feature.shape))
        scale_attention.append(attention)

    return GcpeOutput(
        gcpes=tuple(gcpes),
        global_key=global_key,
        global_attention=global_attention,
        scale_attention=tuple(scale_attention),
    )
