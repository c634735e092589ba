# spherekit/service.py

import logging
from typing import List, Optional

from fastapi import FastAPI, status
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, ValidationError

from spherekit import __version__
from spherekit.errors import SphereKitError
from spherekit.losses_metrics import (
    GRAD_WEIGHT,
    AlignParams,
    DepthMap,
    GradCheckReport,
    LossReport,
    MetricsReport,
    alignment_error,
    evaluate,
    gradient_check,
    ssi_align,
    total_loss,
)
from spherekit.priors import WindowSpec, cle_window_distances, gspe_matrix
from spherekit.sphere_core import GridShape

logger = logging.getLogger(__name__)

# Initialize FastAPI app
app = FastAPI(
    title="Spherical Depth Kernels API",
    description="Alignment, loss, metrics and spherical position-distance tables for ERP depth maps.",
    version=__version__,
)


# --- Pydantic Models for API ---
class DepthPairRequest(BaseModel):
    pred: List[List[float]]
    gt: List[List[float]]


class EvaluateRequest(DepthPairRequest):
    align_first: bool = False


class LossRequest(DepthPairRequest):
    grad_check: bool = False
    omega: float = Field(GRAD_WEIGHT, ge=0)


class AlignResponse(BaseModel):
    s: float
    t: float
    sse: float
    valid_count: int


class LossResponse(BaseModel):
    loss: LossReport
    align: AlignParams
    grad_check: Optional[GradCheckReport] = None


class CleRequest(BaseModel):
    height: int
    width: int
    window: int
    row: int


class GspeRequest(BaseModel):
    height: int
    width: int


class DistanceTableResponse(BaseModel):
    tokens: int
    distances: List[List[float]]


def _depth_pair(request: DepthPairRequest):
    return DepthMap(values=request.pred), DepthMap(values=request.gt)


# --- Depth endpoints ---
@app.post("/align", response_model=AlignResponse)
async def align(request: DepthPairRequest):
    pred, gt = _depth_pair(request)
    params = ssi_align(pred, gt)
    logger.info("Aligned %dx%d prediction: s=%g t=%g", pred.shape.height, pred.shape.width, params.s, params.t)
    return AlignResponse(
        s=params.s,
        t=params.t,
        sse=alignment_error(pred, gt, params),
        valid_count=int(gt.valid_mask().sum()),
    )


@app.post("/evaluate", response_model=MetricsReport)
async def evaluate_depth(request: EvaluateRequest):
    pred, gt = _depth_pair(request)
    return evaluate(pred, gt, align_first=request.align_first)


@app.post("/loss", response_model=LossResponse)
async def loss(request: LossRequest):
    pred, gt = _depth_pair(request)
    report, params = total_loss(pred, gt, omega=request.omega)
    check = gradient_check(pred, gt, omega=request.omega) if request.grad_check else None
    return LossResponse(loss=report, align=params, grad_check=check)


# --- Distance-table endpoints ---
@app.post("/cle", response_model=DistanceTableResponse)
async def cle(request: CleRequest):
    spec = WindowSpec.for_shape(GridShape(height=request.height, width=request.width), request.window)
    table = cle_window_distances(spec, request.row)
    return DistanceTableResponse(tokens=spec.tokens, distances=table.dist.tolist())


@app.post("/gspe", response_model=DistanceTableResponse)
async def gspe(request: GspeRequest):
    matrix = gspe_matrix(GridShape(height=request.height, width=request.width))
    return DistanceTableResponse(tokens=matrix.shape_f3.size, distances=matrix.dist.tolist())


@app.get("/health")
async def health_check():
    return {"status": "ok"}


@app.exception_handler(SphereKitError)
async def kernel_error_handler(request, exc: SphereKitError):
    logger.warning("Rejected %s: %s", request.url.path, exc)
    return JSONResponse(status_code=status.HTTP_400_BAD_REQUEST, content={"detail": str(exc)})


@app.exception_handler(ValidationError)
async def value_error_handler(request, exc: ValidationError):
    logger.warning("Rejected %s: %s", request.url.path, exc)
    return JSONResponse(
        status_code=status.HTTP_400_BAD_REQUEST,
        content={"detail": exc.errors(include_url=False, include_context=False, include_input=False)},
    )
