# spherekit/decoder.py
"""Coarse-to-fine toy decoder: f5 -> f1, GCPE-conditioned SPDecoder blocks, softplus depth head."""

import logging
from typing import Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from spherekit.errors import ShapeError
from spherekit.losses_metrics import DepthMap
from spherekit.priors import PYRAMID_LEVELS, FeaturePyramid
from spherekit.remap import ErpTensor, upsample2
from spherekit.spattention import AttentionParams, DecoderBlockConfig, spdecoder_block

logger = logging.getLogger(__name__)


class DecoderScaleParams(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    lateral: np.ndarray  # C_k x d, projects the skip feature into model space
    attention: AttentionParams

    @model_validator(mode="after")
    def _check(self) -> "DecoderScaleParams":
        if self.lateral.ndim != 2 or self.lateral.shape[1] != self.attention.model_dim:
            raise ValueError(f"lateral projection must be C_k x {self.attention.model_dim}")
        if not np.all(np.isfinite(self.lateral)):
            raise ValueError("lateral projection must be finite")
        return self


class DecoderParams(BaseModel):
    """Per-level parameters, index 0 = f1 (finest) ... 4 = f5 (coarsest)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    scales: Tuple[DecoderScaleParams, ...]
    head: np.ndarray  # d, final 1-channel projection

    @model_validator(mode="after")
    def _check(self) -> "DecoderParams":
        if len(self.scales) != PYRAMID_LEVELS:
            raise ValueError(f"decoder needs {PYRAMID_LEVELS} scales")
        dims = {scale.attention.model_dim for scale in self.scales}
        if len(dims) != 1:
            raise ValueError("every decoder scale must share one model_dim")
        if self.head.shape != (dims.pop(),):
            raise ValueError("head must be a d-vector")
        return self

    @property
    def model_dim(self) -> int:
        return self.scales[0].attention.model_dim


def _project(feature: ErpTensor, weights: np.ndarray) -> np.ndarray:
    if feature.channels != weights.shape[0]:
        raise ShapeError(f"feature has {feature.channels} channels, projection expects {weights.shape[0]}")
    return np.einsum("chw,cd->dhw", feature.data, weights)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def decoder_forward(
    pyramid: FeaturePyramid,
    gcpes: Sequence[ErpTensor],
    params: DecoderParams,
    window: int = 8,
    enable_gcpe: bool = True,
    enable_cle: bool = True,
    enable_cr: bool = True,
    enable_brp: bool = True,
) -> DepthMap:
    if len(gcpes) != PYRAMID_LEVELS:
        raise ShapeError(f"expected {PYRAMID_LEVELS} GCPE tensors, got {len(gcpes)}")

    x = None
    for level in reversed(range(PYRAMID_LEVELS)):
        feature, gcpe, scale = pyramid.levels[level], gcpes[level], params.scales[level]
        if gcpe.shape != feature.shape or gcpe.channels != params.model_dim:
            raise ShapeError(f"GCPE for f{level + 1} does not match the feature grid or model_dim")

        data = _project(feature, scale.lateral)
        if x is not None:
            data = data + x.data
        if enable_gcpe:
            data = data + gcpe.data

        n = min(window, feature.shape.height)
        cfg = DecoderBlockConfig(n=n, enable_cle=enable_cle, enable_cr=enable_cr, enable_brp=enable_brp)
        logger.debug("Decoding f%d at %dx%d with window %d", level + 1,
                     feature.shape.height, feature.shape.width, n)
        x = upsample2(spdecoder_block(ErpTensor(data=data), scale.attention, cfg))

    depth = softplus(np.einsum("dhw,d->hw", x.data, params.head))
    return DepthMap(values=depth)
