# spherekit/losses_metrics.py
"""
Scale-and-shift-invariant (SSI) depth loss and panoramic depth metrics.

A pixel is valid iff its ground-truth depth is > 0. Alignment solves the
2x2 least-squares normal equations for (s, t) over valid pixels, then

    l_pix   = (1/n) * sum m * |s*pred + t - gt|      (n = all pixels)
    l_grad  = sum |Gx(D)| + |Gy(D)|,  D = m * (s*pred + t - gt)
    l_total = l_pix + omega * l_grad,  omega = 0.5

Gx is a forward difference along columns with horizontal wrap, Gy a forward
difference along rows without wrap. Gradients treat (s, t) as constants.
"""

import logging
import math
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from spherekit.errors import DegenerateInputError, ShapeError
from spherekit.sphere_core import GridShape

logger = logging.getLogger(__name__)

GRAD_WEIGHT = 0.5
DELTA_BASE = 1.25


# --- Types ---
class DepthMap(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, values):
        if isinstance(values, dict) and "values" in values:
            return {**values, "values": np.array(values["values"], dtype=np.float64, copy=True)}
        return values

    @model_validator(mode="after")
    def _check(self) -> "DepthMap":
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise ValueError(f"DepthMap needs H x W values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("DepthMap entries must be finite")
        self.values.setflags(write=False)
        return self

    @property
    def shape(self) -> GridShape:
        return GridShape(height=self.values.shape[0], width=self.values.shape[1])

    def valid_mask(self) -> np.ndarray:
        return self.values > 0


class AlignParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    s: float = Field(..., allow_inf_nan=False)
    t: float = Field(..., allow_inf_nan=False)

    def apply(self, pred: DepthMap) -> DepthMap:
        return DepthMap(values=self.s * pred.values + self.t)


class LossReport(BaseModel):
    l_pix: float = Field(..., ge=0)
    l_grad: float = Field(..., ge=0)
    l_total: float = Field(..., ge=0)
    valid_count: int = Field(..., ge=0)


class MetricsReport(BaseModel):
    abs_rel: float = Field(..., ge=0)
    sq_rel: float = Field(..., ge=0)
    rms_lin: float = Field(..., ge=0)
    rms_log: float = Field(..., ge=0)
    mae: float = Field(..., ge=0)
    delta1: float = Field(..., ge=0, le=1)
    delta2: float = Field(..., ge=0, le=1)
    delta3: float = Field(..., ge=0, le=1)
    valid_count: int = Field(..., ge=0)
    log_valid_count: int = Field(..., ge=0, description="valid pixels that also have pred > 0")

    @model_validator(mode="after")
    def _ordered_deltas(self) -> "MetricsReport":
        if not self.delta1 <= self.delta2 <= self.delta3:
            raise ValueError("delta accuracies must satisfy delta1 <= delta2 <= delta3")
        return self


class GradCheckReport(BaseModel):
    max_rel_error: float
    max_abs_error: float
    checked_components: int
    step: float


def _require_same_shape(a: DepthMap, b: DepthMap) -> None:
    if a.values.shape != b.values.shape:
        raise ShapeError(f"depth maps differ in shape: {a.values.shape} vs {b.values.shape}")


# --- Alignment ---
def ssi_align(pred: DepthMap, gt: DepthMap) -> AlignParams:
    _require_same_shape(pred, gt)
    mask = gt.valid_mask()
    count = int(mask.sum())
    if count < 2:
        raise DegenerateInputError(f"alignment needs at least 2 valid pixels, got {count}")
    p = pred.values[mask]
    g = gt.values[mask]
    if np.ptp(p) == 0:
        raise DegenerateInputError("prediction is constant over the valid pixels")
    # Normal equations [[sum p^2, sum p], [sum p, n]] [s, t] = [sum p*g, sum g], solved in centered form.
    p_mean, g_mean = p.mean(), g.mean()
    p_centered = p - p_mean
    s = float(np.dot(p_centered, g - g_mean) / np.dot(p_centered, p_centered))
    t = float(g_mean - s * p_mean)
    return AlignParams(s=s, t=t)


def alignment_error(pred: DepthMap, gt: DepthMap, params: AlignParams) -> float:
    """Sum of squared aligned residuals over valid pixels."""
    mask = gt.valid_mask()
    residual = params.s * pred.values[mask] + params.t - gt.values[mask]
    return float(np.dot(residual, residual))


# --- Losses ---
def _masked_residual(pred_aligned: DepthMap, gt: DepthMap) -> np.ndarray:
    return np.where(gt.valid_mask(), pred_aligned.values - gt.values, 0.0)


def _edge_differences(delta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    gx = np.roll(delta, -1, axis=1) - delta
    gy = delta[1:] - delta[:-1]
    return gx, gy


def l_pix(pred_aligned: DepthMap, gt: DepthMap) -> float:
    _require_same_shape(pred_aligned, gt)
    residual = _masked_residual(pred_aligned, gt)
    return float(np.sum(np.abs(residual)) / residual.size)


def l_grad(pred_aligned: DepthMap, gt: DepthMap) -> float:
    _require_same_shape(pred_aligned, gt)
    gx, gy = _edge_differences(_masked_residual(pred_aligned, gt))
    return float(np.sum(np.abs(gx)) + np.sum(np.abs(gy)))


def _loss_at(pred: DepthMap, gt: DepthMap, params: AlignParams, omega: float) -> LossReport:
    aligned = params.apply(pred)
    pix, grad = l_pix(aligned, gt), l_grad(aligned, gt)
    return LossReport(
        l_pix=pix,
        l_grad=grad,
        l_total=pix + omega * grad,
        valid_count=int(gt.valid_mask().sum()),
    )


def total_loss(pred: DepthMap, gt: DepthMap, omega: float = GRAD_WEIGHT) -> Tuple[LossReport, AlignParams]:
    params = ssi_align(pred, gt)
    return _loss_at(pred, gt, params, omega), params


def loss_gradient(pred: DepthMap, gt: DepthMap, omega: float = GRAD_WEIGHT) -> np.ndarray:
    """d l_total / d pred with (s, t) held constant; sign(0) is taken as 0.

    With no valid ground-truth pixel the loss does not depend on ``pred`` and
    the gradient is zero; no alignment is attempted.
    """
    _require_same_shape(pred, gt)
    if not gt.valid_mask().any():
        return np.zeros_like(pred.values, dtype=np.float64)
    params = ssi_align(pred, gt)
    return _gradient_at(pred, gt, params, omega)


def _gradient_at(pred: DepthMap, gt: DepthMap, params: AlignParams, omega: float) -> np.ndarray:
    mask = gt.valid_mask()
    delta = _masked_residual(params.apply(pred), gt)
    gx, gy = _edge_differences(delta)
    sx, sy = np.sign(gx), np.sign(gy)

    d_delta = np.roll(sx, 1, axis=1) - sx
    d_delta[1:] += sy
    d_delta[:-1] -= sy

    d_delta = np.sign(delta) / delta.size + omega * d_delta
    return np.where(mask, params.s * d_delta, 0.0)


def gradient_check(pred: DepthMap, gt: DepthMap, step: float = 1e-6, omega: float = GRAD_WEIGHT) -> GradCheckReport:
    """Compares loss_gradient against central finite differences.

    The alignment is solved once at ``pred`` and then held fixed, matching
    the constants convention of ``loss_gradient``.
    """
    params = ssi_align(pred, gt)
    analytic = _gradient_at(pred, gt, params, omega)
    base = np.array(pred.values, dtype=np.float64)
    numeric = np.zeros_like(base)
    logger.info("Beginning finite difference check over %d components", base.size)

    for index in np.ndindex(base.shape):
        shifted = base.copy()
        shifted[index] = base[index] + step
        f_plus = _loss_at(DepthMap(values=shifted), gt, params, omega).l_total
        shifted[index] = base[index] - step
        f_minus = _loss_at(DepthMap(values=shifted), gt, params, omega).l_total
        numeric[index] = (f_plus - f_minus) / (2 * step)

    abs_error = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel_error = np.where(scale > 0, abs_error / np.where(scale > 0, scale, 1.0), 0.0)
    return GradCheckReport(
        max_rel_error=float(rel_error.max()),
        max_abs_error=float(abs_error.max()),
        checked_components=int(base.size),
        step=step,
    )


# --- Metrics ---
def evaluate(pred: DepthMap, gt: DepthMap, align_first: bool = False) -> MetricsReport:
    _require_same_shape(pred, gt)
    mask = gt.valid_mask()
    count = int(mask.sum())
    if count == 0:
        raise DegenerateInputError("evaluation needs at least one valid ground-truth pixel")
    if align_first:
        pred = ssi_align(pred, gt).apply(pred)

    p = pred.values[mask]
    g = gt.values[mask]
    diff = p - g
    sq = diff * diff

    positive = p > 0
    log_count = int(positive.sum())
    if log_count < count:
        logger.info("%d valid pixels have non-positive predictions; excluded from log/delta terms",
                    count - log_count)
    if log_count:
        pp, gp = p[positive], g[positive]
        log_diff = np.log(pp) - np.log(gp)
        rms_log = math.sqrt(float(np.mean(log_diff * log_diff)))
        ratio = np.maximum(pp / gp, gp / pp)
        # Divided by the valid count so a pixel lost to the log terms counts as a miss.
        deltas = [float(np.sum(ratio < DELTA_BASE**n)) / count for n in (1, 2, 3)]
    else:
        rms_log = 0.0
        deltas = [0.0, 0.0, 0.0]

    return MetricsReport(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(sq / g)),
        rms_lin=math.sqrt(float(np.mean(sq))),
        rms_log=rms_log,
        mae=float(np.mean(np.abs(diff))),
        delta1=deltas[0],
        delta2=deltas[1],
        delta3=deltas[2],
        valid_count=count,
        log_valid_count=log_count,
    )
