"""Global-local feature blender: input-conditioned convex mix of G and L."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .params import uniform
from .probe import Probe
from .tensor import Tensor, as_tensor, concat, matmul, maximum, minimum, softmax, stack

SUM_TOL = 1e-12


@dataclass(frozen=True)
class BlenderParams:
    w_alpha: Tensor  # 2D x 2D


@dataclass(frozen=True)
class BlendState:
    global_features: Tensor
    local_features: Tensor
    w_alpha: Tensor
    alpha_gf: Tensor
    alpha_lf: Tensor
    blended: Tensor


def init_blender(seed: int, dim: int) -> BlenderParams:
    return BlenderParams(uniform(seed, "blender.w_alpha", (2 * dim, 2 * dim), 2 * dim))


def _check(g: Tensor, l: Tensor, w_alpha: Tensor) -> int:
    if g.ndim != 2 or g.shape != l.shape:
        raise DimensionError(f"G {list(g.shape)} and L {list(l.shape)} must be equal D x NM matrices")
    d = g.shape[0]
    if w_alpha.shape != (2 * d, 2 * d):
        raise DimensionError(f"projection must be {[2 * d, 2 * d]}, got {list(w_alpha.shape)}")
    return d


def blend_weights(g, l, w_alpha) -> tuple[Tensor, Tensor]:
    """Project [G; L] column-wise and softmax each (global, local) logit pair."""
    g, l, w_alpha = as_tensor(g), as_tensor(l), as_tensor(w_alpha)
    d = _check(g, l, w_alpha)
    logits = matmul(w_alpha, concat([g, l], axis=0))
    pair = softmax(stack([logits[:d], logits[d:]], axis=0), axis=0)
    return pair[0], pair[1]


def blend_state(g, l, w_alpha, probe: Probe | None = None) -> BlendState:
    """Blend and keep the weights.

    The output is computed as L + alpha_gf * (G - L), which equals
    alpha_gf*G + alpha_lf*L because the two weights sum to one, but keeps
    G == L exact. A final clamp to [min(G, L), max(G, L)] absorbs rounding.
    """
    g, l, w_alpha = as_tensor(g), as_tensor(l), as_tensor(w_alpha)
    alpha_gf, alpha_lf = blend_weights(g, l, w_alpha)
    raw = l + alpha_gf * (g - l)
    out = minimum(maximum(raw, minimum(g, l)), maximum(g, l))
    if probe is not None:
        probe.check("blender.weights_sum_to_one",
                    np.all(np.abs(alpha_gf.data + alpha_lf.data - 1.0) < SUM_TOL))
        probe.check("blender.convex_bound",
                    np.all(out.data >= np.minimum(g.data, l.data)) and np.all(out.data <= np.maximum(g.data, l.data)))
    return BlendState(g, l, w_alpha, alpha_gf, alpha_lf, out)


def blend(g, l, w_alpha, probe: Probe | None = None) -> Tensor:
    """Blended features B (D x NM)."""
    return blend_state(g, l, w_alpha, probe).blended
