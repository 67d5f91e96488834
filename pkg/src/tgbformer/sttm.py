"""Spatial-temporal transformer: global aggregation within and across frames.

Each layer runs multi-head self-attention over the tokens of every frame
separately, then over the tokens of all frames jointly. Both attention
stages are followed by a post-norm residual block::

    y   = LN(x + attn(x))
    out = LN(y + FFN(y))
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError
from .params import uniform
from .probe import Probe
from .tensor import (Tensor, add, as_tensor, concat, layer_norm, matmul, relu, reshape, softmax,
                     stack, swap_last, tsum)
from .tokenizer import TokenFrame

NORM_TOL = 1e-12


@dataclass(frozen=True)
class AttentionParams:
    """Per-head projections, stacked along a leading head axis.

    ``out_proj[t]`` is D x D_v and maps head outputs back to D; ``value``,
    ``query`` and ``key`` are each T x D_v x D.
    """

    out_proj: Tensor
    value: Tensor
    query: Tensor
    key: Tensor

    def __post_init__(self):
        t, dv, d = self.value.shape
        if d != t * dv:
            raise ConfigError(f"model width {d} is not heads ({t}) x head width ({dv})", field="heads")
        for name in ("query", "key", "value"):
            if getattr(self, name).shape != (t, dv, d):
                raise DimensionError(f"{name} projection must be {[t, dv, d]}, got {list(getattr(self, name).shape)}")
        if self.out_proj.shape != (t, d, dv):
            raise DimensionError(f"out_proj must be {[t, d, dv]}, got {list(self.out_proj.shape)}")

    @property
    def heads(self) -> int:
        return self.value.shape[0]

    @property
    def dim(self) -> int:
        return self.value.shape[2]

    @property
    def head_dim(self) -> int:
        return self.value.shape[1]


@dataclass(frozen=True)
class FfnParams:
    """Two-layer ReLU feed-forward net and the two layer-norm affines around it."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    ln1_gamma: Tensor
    ln1_beta: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor

    def __post_init__(self):
        d, d_ff = self.w1.shape
        if d_ff < d:
            raise ConfigError(f"hidden width {d_ff} must be at least model width {d}", field="d_ff")
        if self.w2.shape != (d_ff, d) or self.b1.shape != (d_ff,) or self.b2.shape != (d,):
            raise DimensionError("feed-forward weights do not chain D -> D_ff -> D")


@dataclass(frozen=True)
class SttmLayer:
    spatial_attn: AttentionParams
    spatial_ffn: FfnParams
    temporal_attn: AttentionParams
    temporal_ffn: FfnParams


@dataclass(frozen=True)
class SttmParams:
    layers: tuple[SttmLayer, ...]


def init_attention(seed: int, prefix: str, dim: int, heads: int) -> AttentionParams:
    if heads < 1 or dim % heads:
        raise ConfigError(f"model width {dim} is not divisible by {heads} heads", field="heads")
    dv = dim // heads
    return AttentionParams(
        out_proj=uniform(seed, f"{prefix}.out_proj", (heads, dim, dv), dv),
        value=uniform(seed, f"{prefix}.value", (heads, dv, dim), dim),
        query=uniform(seed, f"{prefix}.query", (heads, dv, dim), dim),
        key=uniform(seed, f"{prefix}.key", (heads, dv, dim), dim),
    )


def init_ffn(seed: int, prefix: str, dim: int, d_ff: int) -> FfnParams:
    return FfnParams(
        w1=uniform(seed, f"{prefix}.w1", (dim, d_ff), dim),
        b1=uniform(seed, f"{prefix}.b1", (d_ff,), dim),
        w2=uniform(seed, f"{prefix}.w2", (d_ff, dim), d_ff),
        b2=uniform(seed, f"{prefix}.b2", (dim,), d_ff),
        ln1_gamma=Tensor(np.ones(dim)),
        ln1_beta=Tensor(np.zeros(dim)),
        ln2_gamma=Tensor(np.ones(dim)),
        ln2_beta=Tensor(np.zeros(dim)),
    )


def init_sttm(seed: int, dim: int, heads: int, d_ff: int | None = None, layers: int = 1) -> SttmParams:
    d_ff = 4 * dim if d_ff is None else d_ff
    return SttmParams(tuple(
        SttmLayer(
            spatial_attn=init_attention(seed, f"sttm.{i}.spatial_attn", dim, heads),
            spatial_ffn=init_ffn(seed, f"sttm.{i}.spatial_ffn", dim, d_ff),
            temporal_attn=init_attention(seed, f"sttm.{i}.temporal_attn", dim, heads),
            temporal_ffn=init_ffn(seed, f"sttm.{i}.temporal_ffn", dim, d_ff),
        )
        for i in range(layers)
    ))


def _with_head_axis(x: Tensor) -> Tensor:
    return reshape(x, x.shape[:-2] + (1,) + x.shape[-2:])


def _logits(queries: Tensor, keys: Tensor, params: AttentionParams) -> Tensor:
    q = matmul(_with_head_axis(queries), swap_last(params.query))
    k = matmul(_with_head_axis(keys), swap_last(params.key))
    return matmul(q, swap_last(k)) / math.sqrt(params.head_dim)


def attention_weights(queries, keys, params: AttentionParams) -> np.ndarray:
    """Attention weights O with shape (..., T, M_q, K); each row sums to 1."""
    return softmax(_logits(as_tensor(queries), as_tensor(keys), params), axis=-1).numpy()


def attention(queries, keys, params: AttentionParams, probe: Probe | None = None,
              label: str = "attention") -> Tensor:
    """Multi-head attention of ``queries`` (..., M_q, D) over ``keys`` (..., K, D).

    Row q of the result is sum_t W_t [sum_k O_tqk W'_t x_k], with O the
    softmax over k of (U_t z_q . V_t x_k) / sqrt(D_v).
    """
    queries, keys = as_tensor(queries), as_tensor(keys)
    d = params.dim
    if queries.shape[-1] != d or keys.shape[-1] != d:
        raise DimensionError(
            f"{label}: queries {list(queries.shape)} / keys {list(keys.shape)} must have width {d}")
    weights = softmax(_logits(queries, keys, params), axis=-1)
    if probe is not None:
        probe.check(f"{label}_normalized", np.all(np.abs(weights.data.sum(axis=-1) - 1.0) < NORM_TOL))
    values = matmul(_with_head_axis(keys), swap_last(params.value))
    per_head = matmul(matmul(weights, values), swap_last(params.out_proj))
    return tsum(per_head, axis=-3)


def spat_mhsa(z, params: AttentionParams, probe: Probe | None = None) -> Tensor:
    """Self-attention among the M tokens of one frame (z is M x D)."""
    z = as_tensor(z)
    if z.ndim != 2:
        raise DimensionError(f"expected an M x D token matrix, got {list(z.shape)}")
    return attention(z, z, params, probe, "sttm.spatial_attention")


def temp_mhsa(z, frames: Sequence, params: AttentionParams, probe: Probe | None = None) -> Tensor:
    """Attention of one frame's tokens over the tokens of all N frames."""
    z = as_tensor(z)
    frames = [as_tensor(f) for f in frames]
    if not frames:
        raise DimensionError("temporal attention needs at least one frame")
    for n, f in enumerate(frames):
        if f.shape != z.shape:
            raise DimensionError(f"frame {n} has shape {list(f.shape)}, queries have {list(z.shape)}")
    return attention(z, concat(frames, axis=0), params, probe, "sttm.temporal_attention")


def feed_forward(y, ffn: FfnParams) -> Tensor:
    return matmul(relu(matmul(y, ffn.w1) + ffn.b1), ffn.w2) + ffn.b2


def transformer_sublayer(x, sub_out, ffn: FfnParams) -> Tensor:
    """Post-norm residual: LN(x + sub_out), then LN(y + FFN(y))."""
    x, sub_out = as_tensor(x), as_tensor(sub_out)
    if x.shape != sub_out.shape:
        raise DimensionError(f"residual shapes differ: {list(x.shape)} vs {list(sub_out.shape)}")
    y = layer_norm(add(x, sub_out), ffn.ln1_gamma, ffn.ln1_beta)
    return layer_norm(y + feed_forward(y, ffn), ffn.ln2_gamma, ffn.ln2_beta)


def check_frames(frames: Sequence[TokenFrame]) -> tuple[int, int]:
    if not frames:
        raise DimensionError("need at least one frame")
    m, d = frames[0].num_tokens, frames[0].dim
    for n, f in enumerate(frames):
        if (f.num_tokens, f.dim) != (m, d):
            raise DimensionError(f"frame {n} is {f.num_tokens}x{f.dim}, frame 0 is {m}x{d}")
    return m, d


def sttm_forward(frames: Sequence[TokenFrame], params: SttmParams, probe: Probe | None = None) -> Tensor:
    """Global aggregated features G, (N*M) x D, rows ordered frame-major."""
    m, d = check_frames(frames)
    n = len(frames)
    x = stack([f.embedded() for f in frames])
    for layer in params.layers:
        spatial = attention(x, x, layer.spatial_attn, probe, "sttm.spatial_attention")
        x = transformer_sublayer(x, spatial, layer.spatial_ffn)
        flat = reshape(x, (n * m, d))
        temporal = attention(flat, flat, layer.temporal_attn, probe, "sttm.temporal_attention")
        x = reshape(transformer_sublayer(flat, temporal, layer.temporal_ffn), (n, m, d))
    return reshape(x, (n * m, d))
