"""Spatial-temporal GraphFormer: local aggregation over pruned similarity graphs.

Graph functions accept node matrices with arbitrary leading batch axes, so
the N per-frame spatial graphs (or M per-location temporal graphs) are
processed in one call. Shapes below omit those batch axes.

Pipeline for one graph with node rows R (M x D)::

    e_ij  = mlp([euclid_std(r_i, r_j), cos(r_i, r_j), r_i . r_j])
    A     = softmax_j(e)
    P     = lam * A_ij / d_i,      d_i = sum_j (A + I)_ij
    AT[0] = I,  AT[s] = A masked to theta[s-1] <= P < theta[s], i != j
    Q_c   = sum_s softmax(phi_c)_s AT[s]
    Abar  = D^-1/2 (Q_1 Q_2 + I) D^-1/2
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateGraphError, DimensionError, EmptyInputError
from .params import uniform
from .probe import Probe
from .tensor import (Tensor, as_tensor, matmul, mean, relu, reshape, softmax, sqrt, stack,
                     swap_last, transpose, tsum)
from .tokenizer import TokenFrame
from .sttm import check_frames

STD_FLOOR = 1e-8
NORM_FLOOR = 1e-12
ROW_TOL = 1e-12

PER_LOCATION = "per-location"
FULL = "full"


@dataclass(frozen=True)
class EdgeMlpParams:
    """Two affine layers 3 -> hidden -> 1 with a ReLU between."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def __post_init__(self):
        if self.w1.ndim != 2 or self.w1.shape[0] != 3:
            raise DimensionError(f"edge MLP input width must be 3, got weights {list(self.w1.shape)}")
        hidden = self.w1.shape[1]
        if self.b1.shape != (hidden,) or self.w2.shape != (hidden, 1) or self.b2.shape != (1,):
            raise DimensionError("edge MLP weights do not chain 3 -> hidden -> 1")


@dataclass(frozen=True)
class PruneConfig:
    """Threshold partition and slice-selection logits for graph pruning."""

    thresholds: tuple[float, ...]
    lam: float
    rho: float
    phi1: Tensor
    phi2: Tensor

    def __post_init__(self):
        validate_thresholds(self.thresholds)
        s = len(self.thresholds)
        if self.phi1.shape != (s,) or self.phi2.shape != (s,):
            raise DimensionError(
                f"selection logits must have length {s}, got {list(self.phi1.shape)} and {list(self.phi2.shape)}")

    @property
    def slices(self) -> int:
        return len(self.thresholds)


@dataclass(frozen=True)
class GraphBlockParams:
    """Weights of one dynamic graph convolution block (one per layer)."""

    weights: tuple[Tensor, ...]
    mlp: EdgeMlpParams
    prune: PruneConfig


@dataclass(frozen=True)
class StgmParams:
    spatial: GraphBlockParams
    temporal: GraphBlockParams
    temporal_graph: str = PER_LOCATION


@dataclass(frozen=True)
class PrunedGraph:
    """Every intermediate of the pruning pipeline for one (batch of) graph(s)."""

    nodes: Tensor          # H, D x M
    adjacency: Tensor      # A, row-stochastic
    adjacency_tensor: Tensor  # S x M x M
    probability: np.ndarray  # P
    q1: Tensor
    q2: Tensor
    pruned: Tensor         # Abar


def validate_thresholds(thresholds: Sequence[float]) -> None:
    th = list(thresholds)
    if not th:
        raise ConfigError("need at least one threshold", field="thresholds")
    if any(not 0.0 <= t <= 1.0 for t in th):
        raise ConfigError(f"thresholds must lie in [0, 1], got {th}", field="thresholds")
    if any(a >= b for a, b in zip(th, th[1:])):
        raise ConfigError(f"thresholds must be strictly ascending, got {th}", field="thresholds")


def init_edge_mlp(seed: int, prefix: str, hidden: int = 16) -> EdgeMlpParams:
    return EdgeMlpParams(
        w1=uniform(seed, f"{prefix}.w1", (3, hidden), 3),
        b1=uniform(seed, f"{prefix}.b1", (hidden,), 3),
        w2=uniform(seed, f"{prefix}.w2", (hidden, 1), hidden),
        b2=uniform(seed, f"{prefix}.b2", (1,), hidden),
    )


def init_prune(seed: int, prefix: str, thresholds=(0.1, 0.3, 1.0), lam: float = 0.3,
               rho: float = 0.5) -> PruneConfig:
    s = len(thresholds)
    return PruneConfig(
        thresholds=tuple(float(t) for t in thresholds), lam=float(lam), rho=float(rho),
        phi1=uniform(seed, f"{prefix}.phi1", (s,), s),
        phi2=uniform(seed, f"{prefix}.phi2", (s,), s),
    )


def init_graph_block(seed: int, prefix: str, dim: int, layers: int = 2, hidden: int = 16,
                     thresholds=(0.1, 0.3, 1.0), lam: float = 0.3, rho: float = 0.5) -> GraphBlockParams:
    if layers < 0:
        raise ConfigError(f"layer count must be >= 0, got {layers}", field="l_dgc")
    return GraphBlockParams(
        weights=tuple(uniform(seed, f"{prefix}.w{i}", (dim, dim), dim) for i in range(layers)),
        mlp=init_edge_mlp(seed, f"{prefix}.mlp", hidden),
        prune=init_prune(seed, f"{prefix}.prune", thresholds, lam, rho),
    )


def init_stgm(seed: int, dim: int, layers: int = 2, hidden: int = 16, thresholds=(0.1, 0.3, 1.0),
              lam: float = 0.3, rho: float = 0.5, temporal_graph: str = PER_LOCATION) -> StgmParams:
    if temporal_graph not in (PER_LOCATION, FULL):
        raise ConfigError(f"temporal_graph must be {PER_LOCATION!r} or {FULL!r}", field="temporal_graph")
    return StgmParams(
        spatial=init_graph_block(seed, "stgm.spatial", dim, layers, hidden, thresholds, lam, rho),
        temporal=init_graph_block(seed, "stgm.temporal", dim, layers, hidden, thresholds, lam, rho),
        temporal_graph=temporal_graph,
    )


def _lead(x: Tensor) -> tuple[int, ...]:
    return x.shape[:-2]


def similarity_features(nodes) -> Tensor:
    """Stack [standardized Euclidean, cosine, dot product] for all pairs: (M, M, 3)."""
    r = as_tensor(nodes)
    if r.ndim < 2 or r.shape[-2] == 0:
        raise EmptyInputError(f"need at least one node, got node matrix {list(r.shape)}")
    lead, (m, d) = _lead(r), r.shape[-2:]
    centered = r - mean(r, axis=-2, keepdims=True)
    var = mean(centered * centered, axis=-2, keepdims=True) + STD_FLOOR
    diff = reshape(r, lead + (m, 1, d)) - reshape(r, lead + (1, m, d))
    euc = sqrt(tsum(diff * diff / reshape(var, lead + (1, 1, d)), axis=-1))

    gram = matmul(r, swap_last(r))
    norms = sqrt(tsum(r * r, axis=-1))
    live = (norms.data >= NORM_FLOOR).astype(np.float64)
    safe = norms * live + (1.0 - live)
    denom = reshape(safe, lead + (m, 1)) * reshape(safe, lead + (1, m))
    both_live = live[..., :, None] * live[..., None, :]
    cos = gram / denom * both_live
    return stack([euc, cos, gram], axis=-1)


def edge_scores(nodes, mlp: EdgeMlpParams) -> Tensor:
    """Edge score matrix e (M x M) from node rows (M x D)."""
    feats = similarity_features(nodes)
    hidden = relu(matmul(feats, mlp.w1) + mlp.b1)
    out = matmul(hidden, mlp.w2) + mlp.b2
    return reshape(out, out.shape[:-1])


def adjacency(scores, probe: Probe | None = None) -> Tensor:
    """Row-wise softmax of the edge scores."""
    a = softmax(as_tensor(scores), axis=-1)
    if probe is not None:
        probe.check("stgm.adjacency_row_stochastic", np.all(np.abs(a.data.sum(axis=-1) - 1.0) < ROW_TOL))
    return a


def probability_matrix(a: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """P = lam * A / d with d_i the row sums of A + I; returns (P, d)."""
    m = a.shape[-1]
    degree = (a + np.eye(m)).sum(axis=-1)
    return lam * a / degree[..., None], degree


def adjacency_tensor(adj, cfg: PruneConfig, probe: Probe | None = None) -> tuple[Tensor, np.ndarray]:
    """Partition the off-diagonal entries of A into threshold slices.

    Returns the S x M x M tensor (slice 0 is the identity) and P. The masks
    are piecewise constant in A, so gradients reach only the kept values.
    """
    adj = as_tensor(adj)
    a = adj.data
    m = a.shape[-1]
    prob, degree = probability_matrix(a, cfg.lam)
    off_diag = ~np.eye(m, dtype=bool)
    th = cfg.thresholds
    slices = [Tensor(np.broadcast_to(np.eye(m), a.shape))]
    for s in range(1, len(th)):
        keep = (prob >= th[s - 1]) & (prob < th[s]) & off_diag
        slices.append(adj * keep.astype(np.float64))
    at = stack(slices, axis=-3)
    if probe is not None:
        probe.check("stgm.degree_equals_two", np.all(np.abs(degree - 2.0) < ROW_TOL))
        rest = at.data[..., 1:, :, :]
        hits = (rest != 0).sum(axis=-3)
        kept = rest.sum(axis=-3)
        probe.check("stgm.adjacency_tensor_partition",
                    np.all(hits[..., off_diag] <= 1) and np.all(kept[..., ~off_diag] == 0)
                    and np.all((kept == a) | (hits == 0)))
    return at, prob


def soft_select(at, cfg: PruneConfig) -> tuple[Tensor, Tensor]:
    """Two convex combinations of the slices, weighted by softmax(phi1), softmax(phi2)."""
    at = as_tensor(at)
    s = cfg.slices
    if at.ndim < 3 or at.shape[-3] != s:
        raise DimensionError(f"adjacency tensor {list(at.shape)} does not have {s} slices")
    q1 = tsum(at * reshape(softmax(cfg.phi1), (s, 1, 1)), axis=-3)
    q2 = tsum(at * reshape(softmax(cfg.phi2), (s, 1, 1)), axis=-3)
    return q1, q2


def laplacian_normalize(y) -> Tensor:
    """D^-1/2 Y D^-1/2 with D the diagonal of row sums of Y."""
    y = as_tensor(y)
    lead, m = _lead(y), y.shape[-1]
    degree = tsum(y, axis=-1)
    if np.any(degree.data <= 0):
        bad = np.argwhere(degree.data <= 0)[0].tolist()
        raise DegenerateGraphError(f"node {bad} has nonpositive degree")
    # y_ij / sqrt(d_i d_j): symmetric inputs stay exactly symmetric and a lone
    # node maps to exactly 1, since sqrt(fl(d*d)) == d
    return y / sqrt(reshape(degree, lead + (m, 1)) * reshape(degree, lead + (1, m)))


def build_graph(nodes, mlp: EdgeMlpParams, cfg: PruneConfig, probe: Probe | None = None) -> PrunedGraph:
    """Run the whole pruning pipeline on node rows (M x D), keeping intermediates."""
    r = as_tensor(nodes)
    adj = adjacency(edge_scores(r, mlp), probe)
    at, prob = adjacency_tensor(adj, cfg, probe)
    q1, q2 = soft_select(at, cfg)
    eye = np.eye(r.shape[-2])
    pruned = laplacian_normalize(matmul(q1, q2) + eye)
    if probe is not None:
        probe.check("stgm.pruned_nonnegative", np.all(pruned.data >= 0))
    return PrunedGraph(swap_last(r), adj, at, prob, q1, q2, pruned)


def pruned_adjacency(nodes, mlp: EdgeMlpParams, cfg: PruneConfig, probe: Probe | None = None) -> Tensor:
    return build_graph(nodes, mlp, cfg, probe).pruned


def dgcl(h, weight, mlp: EdgeMlpParams, cfg: PruneConfig, probe: Probe | None = None) -> Tensor:
    """One dynamic graph convolution: ReLU(W H Abar(H)) on H (D x M).

    The graph is rebuilt from the current columns of H on every call.
    """
    h, weight = as_tensor(h), as_tensor(weight)
    if weight.shape != (h.shape[-2], h.shape[-2]):
        raise DimensionError(f"layer weight {list(weight.shape)} does not match node width {h.shape[-2]}")
    abar = pruned_adjacency(swap_last(h), mlp, cfg, probe)
    return relu(matmul(matmul(weight, h), abar))


def dgcb(h, block: GraphBlockParams, probe: Probe | None = None) -> Tensor:
    """Sequential dynamic graph convolutions plus rho * H.

    With zero layers only the scaled residual remains.
    """
    h = as_tensor(h)
    out = h
    for weight in block.weights:
        out = dgcl(out, weight, block.mlp, block.prune, probe)
    residual = h * block.prune.rho
    return residual if not block.weights else out + residual


def stgm_forward(frames: Sequence[TokenFrame], params: StgmParams, probe: Probe | None = None) -> Tensor:
    """Local aggregated features L, (N*M) x D, rows ordered frame-major."""
    m, d = check_frames(frames)
    n = len(frames)
    x = stack([f.embedded() for f in frames])               # N, M, D
    inter = dgcb(swap_last(x), params.spatial, probe)        # N, D, M
    if params.temporal_graph == PER_LOCATION:
        per_loc = dgcb(transpose(inter, (2, 1, 0)), params.temporal, probe)   # M, D, N
        out = transpose(per_loc, (2, 0, 1))                                   # N, M, D
    elif params.temporal_graph == FULL:
        joint = reshape(transpose(inter, (1, 0, 2)), (d, n * m))
        out = swap_last(dgcb(joint, params.temporal, probe))
    else:
        raise ConfigError(f"unknown temporal graph mode {params.temporal_graph!r}", field="temporal_graph")
    return reshape(out, (n * m, d))
