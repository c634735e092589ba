# spherekit/seeding.py
"""
SplitMix64-seeded construction of demo pyramids and parameters.

Values are drawn in a fixed order (C-order fill, fields in declaration
order) so one seed reproduces the same tensors everywhere.
"""

from typing import Tuple

import numpy as np
from pydantic import BaseModel, Field

from spherekit.decoder import DecoderParams, DecoderScaleParams
from spherekit.priors import PYRAMID_LEVELS, FeaturePyramid, GcpeParams
from spherekit.remap import ErpTensor
from spherekit.sphere_core import GridShape
from spherekit.spattention import AttentionParams

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15

DEMO_CHANNELS = (4, 8, 8, 16, 16)  # f1..f5
DEMO_MODEL_DIM = 16
DEMO_HEADS = 2


class DemoSeed(BaseModel):
    seed: int = Field(..., ge=0, le=_MASK64)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN_GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float, shape: Tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape))
        draws = np.array([self.next_float() for _ in range(count)], dtype=np.float64)
        return (low + (high - low) * draws).reshape(shape)


def _linear(rng: SplitMix64, fan_in: int, fan_out: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, (fan_in, fan_out))


def demo_pyramid(rng: SplitMix64, shape: GridShape, channels: Tuple[int, ...] = DEMO_CHANNELS) -> FeaturePyramid:
    """f1..f5 at H/2^k x W/2^k with uniform [-1, 1) features."""
    if shape.height % 2**PYRAMID_LEVELS or shape.width % 2**PYRAMID_LEVELS:
        raise ValueError(f"input grid must be divisible by {2 ** PYRAMID_LEVELS}")
    levels = []
    for k, c in enumerate(channels, start=1):
        level_shape = shape.halved(k)
        levels.append(ErpTensor(data=rng.uniform(-1.0, 1.0, (c, level_shape.height, level_shape.width))))
    return FeaturePyramid(levels=tuple(levels))


def demo_gcpe_params(rng: SplitMix64, channels: Tuple[int, ...] = DEMO_CHANNELS,
                     model_dim: int = DEMO_MODEL_DIM, alpha_g: float = 1.0) -> GcpeParams:
    d = model_dim
    return GcpeParams(
        model_dim=d,
        input_proj=_linear(rng, channels[2], d),
        global_q=_linear(rng, d, d),
        global_k=_linear(rng, d, d),
        global_v=_linear(rng, d, d),
        alpha_g=alpha_g,
        query_projs=tuple(_linear(rng, c, d) for c in channels),
        key_projs=tuple(_linear(rng, d, d) for _ in channels),
        output_proj=_linear(rng, d, d),
    )


def demo_attention_params(rng: SplitMix64, model_dim: int = DEMO_MODEL_DIM, heads: int = DEMO_HEADS) -> AttentionParams:
    d = model_dim
    return AttentionParams(
        model_dim=d,
        heads=heads,
        w_q=_linear(rng, d, d),
        w_k=_linear(rng, d, d),
        w_v=_linear(rng, d, d),
        w_o=_linear(rng, d, d),
        alphas=tuple(float(a) for a in rng.uniform(0.5, 2.0, (heads,))),
    )


def demo_decoder_params(rng: SplitMix64, channels: Tuple[int, ...] = DEMO_CHANNELS,
                        model_dim: int = DEMO_MODEL_DIM, heads: int = DEMO_HEADS) -> DecoderParams:
    scales = tuple(
        DecoderScaleParams(lateral=_linear(rng, c, model_dim), attention=demo_attention_params(rng, model_dim, heads))
        for c in channels
    )
    return DecoderParams(scales=scales, head=_linear(rng, model_dim, 1)[:, 0])
