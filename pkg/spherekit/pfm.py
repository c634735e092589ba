# spherekit/pfm.py
"""
PFM (portable float map) reader and writer.

Layout: identifier line ("Pf" = 1 channel, "PF" = 3 channels), "W H" line,
scale line, then W*H*C 32-bit floats. A negative scale marks a
little-endian payload. Rows are stored bottom-to-top; in memory they are
kept top-to-bottom (row 0 = north) and widened to float64.
"""

import logging
from pathlib import Path
from typing import Literal, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from spherekit.errors import PfmFormatError, ShapeError
from spherekit.losses_metrics import DepthMap
from spherekit.remap import ErpTensor

logger = logging.getLogger(__name__)

_CHANNELS = {"Pf": 1, "PF": 3}
_WHITESPACE = b" \t\r\n"


class PfmImage(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: Literal["Pf", "PF"]
    width: int
    height: int
    scale: float
    data: np.ndarray  # H x W x C float64, row 0 at the top
    payload: bytes  # raw payload as stored on disk

    @property
    def channels(self) -> int:
        return _CHANNELS[self.kind]

    @property
    def little_endian(self) -> bool:
        return self.scale < 0


# --- Utilities ---
def _next_token(buffer: bytes, pos: int) -> Tuple[str, int]:
    """Reads one whitespace-delimited header token; returns it and the offset just past it."""
    while pos < len(buffer) and buffer[pos] in _WHITESPACE:
        pos += 1
    start = pos
    while pos < len(buffer) and buffer[pos] not in _WHITESPACE:
        pos += 1
    if start == pos:
        raise PfmFormatError("unexpected end of header", pos)
    try:
        return buffer[start:pos].decode("ascii"), pos
    except UnicodeDecodeError:
        raise PfmFormatError("non-ASCII header token", start) from None


def _parse_int(token: str, offset: int, name: str) -> int:
    try:
        value = int(token)
    except ValueError:
        raise PfmFormatError(f"invalid {name} {token!r}", offset) from None
    if value < 1:
        raise PfmFormatError(f"{name} must be positive, got {value}", offset)
    return value


# --- Load ---
def parse_pfm(buffer: bytes) -> PfmImage:
    kind, pos = _next_token(buffer, 0)
    if kind not in _CHANNELS:
        raise PfmFormatError(f"unrecognized identifier {kind!r}", 0)
    channels = _CHANNELS[kind]

    width_token, pos = _next_token(buffer, pos)
    width = _parse_int(width_token, pos - len(width_token), "width")
    height_token, pos = _next_token(buffer, pos)
    height = _parse_int(height_token, pos - len(height_token), "height")
    scale_token, pos = _next_token(buffer, pos)
    try:
        scale = float(scale_token)
    except ValueError:
        raise PfmFormatError(f"invalid scale {scale_token!r}", pos - len(scale_token)) from None
    if scale == 0 or not np.isfinite(scale):
        raise PfmFormatError(f"scale must be finite and non-zero, got {scale_token!r}", pos - len(scale_token))

    # Exactly one whitespace byte separates the scale from the payload.
    if pos >= len(buffer):
        raise PfmFormatError("missing payload", pos)
    start = pos + 1
    expected = width * height * channels * 4
    payload = buffer[start:]
    if len(payload) < expected:
        raise PfmFormatError(f"truncated payload: expected {expected} bytes, found {len(payload)}", len(buffer))
    if len(payload) > expected:
        raise PfmFormatError(f"{len(payload) - expected} trailing bytes after payload", start + expected)

    dtype = "<f4" if scale < 0 else ">f4"
    stored = np.frombuffer(payload, dtype=dtype).reshape(height, width, channels)
    data = stored[::-1].astype(np.float64)
    return PfmImage(kind=kind, width=width, height=height, scale=scale, data=data, payload=payload)


def read_pfm(path: Union[str, Path]) -> PfmImage:
    image = parse_pfm(Path(path).read_bytes())
    logger.debug("Read %s %dx%d from %s", image.kind, image.width, image.height, path)
    return image


def to_depth(image: PfmImage) -> DepthMap:
    if image.channels != 1:
        raise PfmFormatError(f"expected a 1-channel 'Pf' depth map, found {image.kind!r}", 0)
    return DepthMap(values=image.data[:, :, 0])


def to_tensor(image: PfmImage) -> ErpTensor:
    return ErpTensor(data=image.data.transpose(2, 0, 1))


def read_depth(path: Union[str, Path]) -> DepthMap:
    return to_depth(read_pfm(path))


def read_tensor(path: Union[str, Path]) -> ErpTensor:
    return to_tensor(read_pfm(path))


# --- Save ---
def _format_scale(scale: float) -> str:
    """Six fixed decimals when that is exact, otherwise the shortest round-tripping repr."""
    fixed = f"{scale:f}"
    return fixed if float(fixed) == scale else repr(float(scale))


def encode_pfm(data: np.ndarray, scale: float = -1.0) -> bytes:
    """Encodes an H x W x C (C in {1, 3}) array; the sign of ``scale`` picks the byte order."""
    if data.ndim != 3 or data.shape[2] not in (1, 3):
        raise ShapeError(f"PFM holds 1 or 3 channels, got array of shape {data.shape}")
    if scale == 0:
        raise ValueError("PFM scale must be non-zero")
    height, width, channels = data.shape
    kind = "Pf" if channels == 1 else "PF"
    dtype = "<f4" if scale < 0 else ">f4"
    header = f"{kind}\n{width} {height}\n{_format_scale(scale)}\n".encode("ascii")
    return header + np.ascontiguousarray(data[::-1], dtype=dtype).tobytes()


def write_pfm(obj: Union[DepthMap, ErpTensor, np.ndarray], path: Union[str, Path], scale: float = -1.0) -> None:
    if isinstance(obj, DepthMap):
        data = obj.values[:, :, np.newaxis]
    elif isinstance(obj, ErpTensor):
        data = obj.data.transpose(1, 2, 0)
    else:
        data = np.asarray(obj, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, np.newaxis]
    Path(path).write_bytes(encode_pfm(data, scale))
    logger.debug("Wrote %dx%d x%d PFM to %s", data.shape[1], data.shape[0], data.shape[2], path)
