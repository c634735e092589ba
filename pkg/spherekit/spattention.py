# spherekit/spattention.py

import logging
import math
from typing import Dict, List, Literal, Mapping, Tuple, TypedDict

import numpy as np
from langchain_core.runnables import RunnableConfig
from langgraph.graph import END, StateGraph
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import softmax

from spherekit.errors import ConfigurationError, ShapeError
from spherekit.priors import CleTable, WindowSpec, cle_bias, cle_tables
from spherekit.remap import ErpTensor, brp, brp_inverse, circular_rotate, circular_rotate_inverse

logger = logging.getLogger(__name__)

CANONICAL_STAGES = (
    "s1_attention",
    "s2_rotated_attention",
    "s3_brp",
    "s4_rotated_attention",
    "s5_brp_inverse",
)


# --- Types ---
class AttentionParams(BaseModel):
    """Multi-head window attention weights.

    Each d x d projection holds all heads side by side; head i owns columns
    [i * d/h, (i + 1) * d/h). ``alphas`` holds one CLE coefficient per head.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    model_dim: int = Field(..., ge=1)
    heads: int = Field(..., ge=1)
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    alphas: Tuple[float, ...]

    @model_validator(mode="after")
    def _check(self) -> "AttentionParams":
        d = self.model_dim
        if d % self.heads:
            raise ValueError(f"model_dim {d} is not divisible by {self.heads} heads")
        if len(self.alphas) != self.heads:
            raise ValueError("one CLE coefficient per head is required")
        for name in ("w_q", "w_k", "w_v", "w_o"):
            matrix = getattr(self, name)
            if matrix.shape != (d, d):
                raise ValueError(f"{name} must be {d} x {d}, got {matrix.shape}")
            if not np.all(np.isfinite(matrix)):
                raise ValueError(f"{name} must be finite")
        if not all(math.isfinite(a) for a in self.alphas):
            raise ValueError("CLE coefficients must be finite")
        return self

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads

    def without_cle(self) -> "AttentionParams":
        return self.model_copy(update={"alphas": (0.0,) * self.heads})


class WindowPartition(BaseModel):
    """Windows in row-major window order, tokens row-major inside each window."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    spec: WindowSpec
    windows: np.ndarray  # (window_rows * window_cols) x N^2 x C

    def window_row(self, index: int) -> int:
        return index // self.spec.window_cols


class DecoderBlockConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1)
    stages: Tuple[str, ...] = CANONICAL_STAGES
    enable_cle: bool = True
    enable_cr: bool = True
    enable_brp: bool = True

    @model_validator(mode="after")
    def _check_stages(self) -> "DecoderBlockConfig":
        if self.stages != CANONICAL_STAGES:
            raise ValueError(f"decoder stages are fixed to {CANONICAL_STAGES}")
        return self

    @property
    def rotation(self) -> int:
        """Half the window size, as in the shifted-window scheme."""
        return self.n // 2

    def configurable(self) -> Dict[str, bool]:
        return {
            "enable_cle": self.enable_cle,
            "enable_cr": self.enable_cr,
            "enable_brp": self.enable_brp,
        }


class StageTrace(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    step: int
    stage: str
    description: str
    tensor: ErpTensor


# --- Window mechanics ---
def window_partition(t: ErpTensor, spec: WindowSpec) -> WindowPartition:
    if t.shape != spec.shape:
        raise ShapeError(
            f"tensor {t.shape.height}x{t.shape.width} does not match window grid "
            f"{spec.shape.height}x{spec.shape.width}"
        )
    n, c = spec.n, t.channels
    blocks = t.data.reshape(c, spec.window_rows, n, spec.window_cols, n)
    windows = blocks.transpose(1, 3, 2, 4, 0).reshape(spec.window_rows * spec.window_cols, n * n, c)
    return WindowPartition(spec=spec, windows=np.ascontiguousarray(windows))


def window_merge(w: WindowPartition) -> ErpTensor:
    spec = w.spec
    n, c = spec.n, w.windows.shape[-1]
    blocks = w.windows.reshape(spec.window_rows, spec.window_cols, n, n, c)
    return ErpTensor(data=blocks.transpose(4, 0, 2, 1, 3).reshape(c, spec.shape.height, spec.shape.width))


# --- SPAttention ---
def _window_biases(w: WindowPartition, params: AttentionParams, tables: Mapping[int, CleTable]) -> np.ndarray:
    """(num_windows, heads, N^2, N^2) additive logit bias."""
    spec = w.spec
    rows = []
    for row in range(spec.window_rows):
        table = tables.get(row)
        if table is None:
            raise ConfigurationError(f"no CLE table for window row {row}")
        if table.n != spec.n:
            raise ConfigurationError(f"CLE table for row {row} has N={table.n}, windows have N={spec.n}")
        rows.append(np.stack([cle_bias(table, alpha) for alpha in params.alphas]))
    return np.repeat(np.stack(rows), spec.window_cols, axis=0)


def _attend(w: WindowPartition, params: AttentionParams, tables: Mapping[int, CleTable]):
    x = w.windows
    if x.shape[-1] != params.model_dim:
        raise ShapeError(f"tokens have {x.shape[-1]} channels, attention expects {params.model_dim}")
    num_windows, tokens, d = x.shape
    h, dh = params.heads, params.head_dim

    def split_heads(projected: np.ndarray) -> np.ndarray:
        return projected.reshape(num_windows, tokens, h, dh).transpose(0, 2, 1, 3)

    q, k, v = (split_heads(x @ m) for m in (params.w_q, params.w_k, params.w_v))
    logits = q @ k.transpose(0, 1, 3, 2) / math.sqrt(dh) + _window_biases(w, params, tables)
    weights = softmax(logits, axis=-1)
    heads_out = (weights @ v).transpose(0, 2, 1, 3).reshape(num_windows, tokens, d)
    return heads_out @ params.w_o, weights


def sp_attention(w: WindowPartition, params: AttentionParams, tables: Mapping[int, CleTable]) -> WindowPartition:
    out, _ = _attend(w, params, tables)
    return WindowPartition(spec=w.spec, windows=out)


def attention_weights(w: WindowPartition, params: AttentionParams, tables: Mapping[int, CleTable]) -> np.ndarray:
    """Softmax weights, shaped (num_windows, heads, N^2, N^2)."""
    _, weights = _attend(w, params, tables)
    return weights


def _residual_attention(t: ErpTensor, params: AttentionParams, spec: WindowSpec, tables) -> ErpTensor:
    attended = window_merge(sp_attention(window_partition(t, spec), params, tables))
    return ErpTensor(data=t.data + attended.data)


# --- Shared state type ---
class DecoderState(TypedDict, total=False):
    tensor: ErpTensor
    params: AttentionParams
    spec: WindowSpec
    rotation: int
    route: Literal["s3_brp", "s4_rotated_attention", "s5_brp_inverse", "end"]


def _stage_inputs(state: DecoderState, config: RunnableConfig):
    configurable = config.get("configurable", {})
    params = state["params"]
    if not configurable.get("enable_cle", True):
        params = params.without_cle()
    rotation = state["rotation"] if configurable.get("enable_cr", True) else 0
    return params, rotation, cle_tables(state["spec"])


# --- Stage nodes ---
def attention_node(state: DecoderState, config: RunnableConfig) -> DecoderState:
    logger.debug("Entering s1_attention")
    params, _, tables = _stage_inputs(state, config)
    return {"tensor": _residual_attention(state["tensor"], params, state["spec"], tables)}


def _rotated_attention(state: DecoderState, config: RunnableConfig) -> ErpTensor:
    params, rotation, tables = _stage_inputs(state, config)
    logger.debug("Entering rotated attention, rotation=%d", rotation)
    rotated = circular_rotate(state["tensor"], rotation)
    attended = _residual_attention(rotated, params, state["spec"], tables)
    return circular_rotate_inverse(attended, rotation)


def shifted_attention_node(state: DecoderState, config: RunnableConfig) -> DecoderState:
    enable_brp = config.get("configurable", {}).get("enable_brp", True)
    route = "s3_brp" if enable_brp else "s4_rotated_attention"
    return {"tensor": _rotated_attention(state, config), "route": route}


def vertical_attention_node(state: DecoderState, config: RunnableConfig) -> DecoderState:
    enable_brp = config.get("configurable", {}).get("enable_brp", True)
    route = "s5_brp_inverse" if enable_brp else "end"
    return {"tensor": _rotated_attention(state, config), "route": route}


def brp_node(state: DecoderState) -> DecoderState:
    logger.debug("Entering s3_brp")
    return {"tensor": brp(state["tensor"])}


def brp_inverse_node(state: DecoderState) -> DecoderState:
    logger.debug("Entering s5_brp_inverse")
    return {"tensor": brp_inverse(state["tensor"])}


# --- Routing helpers ---
def after_shifted(st: DecoderState) -> Literal["s3_brp", "s4_rotated_attention"]:
    return st["route"]


def after_vertical(st: DecoderState) -> Literal["s5_brp_inverse", "end"]:
    return st["route"]


# --- Build graph ---
def build_decoder_block():
    """Builds and compiles the S1..S5 stage graph of one decoder block."""
    g = StateGraph(DecoderState)
    g.add_node("s1_attention", attention_node)
    g.add_node("s2_rotated_attention", shifted_attention_node)
    g.add_node("s3_brp", brp_node)
    g.add_node("s4_rotated_attention", vertical_attention_node)
    g.add_node("s5_brp_inverse", brp_inverse_node)

    g.set_entry_point("s1_attention")
    g.add_edge("s1_attention", "s2_rotated_attention")
    g.add_conditional_edges(
        "s2_rotated_attention",
        after_shifted,
        {"s3_brp": "s3_brp", "s4_rotated_attention": "s4_rotated_attention"},
    )
    g.add_edge("s3_brp", "s4_rotated_attention")
    g.add_conditional_edges(
        "s4_rotated_attention",
        after_vertical,
        {"s5_brp_inverse": "s5_brp_inverse", "end": END},
    )
    g.add_edge("s5_brp_inverse", END)
    return g.compile()


decoder_block = build_decoder_block()

_STAGE_DESCRIPTIONS = {
    "s1_attention": "Window attention with curve local embedding.",
    "s2_rotated_attention": "Circular rotation, window attention, reverse rotation.",
    "s3_brp": "Bipolar re-projection of the poles onto the equator.",
    "s4_rotated_attention": "Circular rotation, window attention, reverse rotation on the re-projected map.",
    "s5_brp_inverse": "Reverse bipolar re-projection back to the original ERP layout.",
}


def _block_inputs(t: ErpTensor, params: AttentionParams, cfg: DecoderBlockConfig):
    if cfg.enable_brp and not t.shape.is_erp():
        raise ShapeError(f"decoder block needs W = 2H, got {t.shape.height}x{t.shape.width}")
    spec = WindowSpec.for_shape(t.shape, cfg.n)
    inputs: DecoderState = {"tensor": t, "params": params, "spec": spec, "rotation": cfg.rotation}
    return inputs, {"configurable": cfg.configurable()}


def spdecoder_trace(t: ErpTensor, params: AttentionParams, cfg: DecoderBlockConfig) -> List[StageTrace]:
    """Runs one block and records the tensor after every executed stage."""
    inputs, config = _block_inputs(t, params, cfg)
    trace: List[StageTrace] = []
    for i, s in enumerate(decoder_block.stream(inputs, config=config)):
        stage = list(s.keys())[0]
        trace.append(
            StageTrace(step=i + 1, stage=stage, description=_STAGE_DESCRIPTIONS[stage], tensor=s[stage]["tensor"])
        )
        logger.debug("Stage %d - %s", i + 1, stage)
    return trace


def spdecoder_block(t: ErpTensor, params: AttentionParams, cfg: DecoderBlockConfig) -> ErpTensor:
    inputs, config = _block_inputs(t, params, cfg)
    return decoder_block.invoke(inputs, config=config)["tensor"]
