"""Verification suites behind the ``oracle`` and ``gradcheck`` commands."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import oracles
from .blender import blend
from .config import PipelineConfig
from .params import flatten, rebuild, stream
from .pipeline import forward, init_model, synth_sequence
from .sttm import spat_mhsa, sttm_forward, temp_mhsa, transformer_sublayer
from .stgm import dgcb, dgcl, edge_scores, pruned_adjacency, stgm_forward
from .tensor import Tape, Tensor, as_tensor, backward, finite_diff_grad, layer_norm, mul, softmax, tsum
from .tokenizer import TokenFrame, positional_encoding, token_frames, tokenize

DEFAULT_H = 1e-5
GRAD_TOL = 1e-5
# gradient norms below this are compared absolutely (both sides are ~0)
GRAD_FLOOR = 1e-4

ORACLE_TOL = {
    "tokenize": 1e-14,
    "positional_encoding": 1e-14,
    "spat_mhsa": 1e-10,
    "temp_mhsa": 1e-10,
    "transformer_sublayer": 1e-10,
    "sttm_forward": 1e-9,
    "edge_scores": 1e-10,
    "pruned_adjacency": 1e-12,
    "dgcl": 1e-10,
    "dgcb": 1e-10,
    "stgm_forward": 1e-9,
    "blend": 1e-12,
}

MAX_ORACLE_FRAMES = 3
MAX_ORACLE_SIDE = 3


@dataclass
class OracleRow:
    kernel: str
    max_abs_diff: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.max_abs_diff < self.tol)


@dataclass
class GradRow:
    check: str
    block: str
    rel_error: float
    size: int

    @property
    def passed(self) -> bool:
        return bool(self.rel_error < GRAD_TOL)


def oracle_config(cfg: PipelineConfig) -> PipelineConfig:
    """Shrink a config to at most 3 frames of at most 3x3 tokens."""
    return cfg.replace(N=min(cfg.N, MAX_ORACLE_FRAMES), h=min(cfg.h, MAX_ORACLE_SIDE),
                       w=min(cfg.w, MAX_ORACLE_SIDE))


def _tokenize_loop(frame: np.ndarray, proj) -> np.ndarray:
    c, h, w = frame.shape
    rows = [[frame[ch, y, x] for ch in range(c)] for y in range(h) for x in range(w)]
    if proj is None:
        return np.array(rows)
    p = proj.data
    return np.array([[oracles.dot(row, p[:, j]) for j in range(p.shape[1])] for row in rows])


def _positional_loop(h: int, w: int, dim: int) -> np.ndarray:
    half = dim // 2
    out = np.zeros((h * w, dim))
    for y in range(h):
        for x in range(w):
            for base, coord in ((0, y), (half, x)):
                for k in range(half // 2):
                    angle = coord / 10000.0 ** (2 * k / half)
                    out[y * w + x, base + 2 * k] = np.sin(angle)
                    out[y * w + x, base + 2 * k + 1] = np.cos(angle)
    return out


def _fault(params, path: str):
    leaf = flatten(params)[path].numpy()
    leaf.flat[0] += 1e-3
    return rebuild(params, {path: leaf})


def oracle_suite(cfg: PipelineConfig, seed: int | None = None, inject_fault: bool = False) -> list[OracleRow]:
    """Compare every vectorized kernel with its loop oracle on a small window.

    With ``inject_fault`` one attention weight is nudged by 1e-3 after the
    oracle values are captured, which must make the suite fail.
    """
    small = oracle_config(cfg)
    seed = small.seed if seed is None else seed
    params = init_model(small, seed)
    frames = synth_sequence(small, seed)
    tokens = token_frames(frames, params.proj)
    emb = [t.embedded().data for t in tokens]
    st, gr = params.sttm.layers[0], params.stgm
    g_in = sttm_forward(tokens, params.sttm).data.T
    l_in = stgm_forward(tokens, params.stgm).data.T
    mid = transformer_sublayer(emb[0], spat_mhsa(emb[0], st.spatial_attn), st.spatial_ffn).data

    expected = {
        "tokenize": _tokenize_loop(frames[0], params.proj),
        "positional_encoding": _positional_loop(small.h, small.w, small.dim),
        "spat_mhsa": oracles.spat_mhsa(emb[0], st.spatial_attn),
        "temp_mhsa": oracles.temp_mhsa(emb[0], emb, st.temporal_attn),
        "transformer_sublayer": oracles.transformer_sublayer(emb[0], mid, st.spatial_ffn),
        "sttm_forward": oracles.sttm_forward(emb, params.sttm),
        "edge_scores": oracles.edge_scores(emb[0], gr.spatial.mlp),
        "pruned_adjacency": oracles.pruned_adjacency(emb[0], gr.spatial.mlp, gr.spatial.prune),
        "dgcl": (oracles.dgcl(emb[0].T, gr.spatial.weights[0], gr.spatial.mlp, gr.spatial.prune)
                 if gr.spatial.weights else None),
        "dgcb": oracles.dgcb(emb[0].T, gr.spatial),
        "stgm_forward": oracles.stgm_forward(emb, gr),
        "blend": oracles.blend(g_in, l_in, params.blender.w_alpha)[2],
    }

    if inject_fault:
        params = _fault(params, "sttm.layers.0.spatial_attn.query")
        st = params.sttm.layers[0]

    actual: dict[str, Callable[[], Any]] = {
        "tokenize": lambda: tokenize(frames[0], params.proj),
        "positional_encoding": lambda: positional_encoding(small.h, small.w, small.dim),
        "spat_mhsa": lambda: spat_mhsa(emb[0], st.spatial_attn),
        "temp_mhsa": lambda: temp_mhsa(emb[0], emb, st.temporal_attn),
        "transformer_sublayer": lambda: transformer_sublayer(emb[0], mid, st.spatial_ffn),
        "sttm_forward": lambda: sttm_forward(tokens, params.sttm),
        "edge_scores": lambda: edge_scores(emb[0], gr.spatial.mlp),
        "pruned_adjacency": lambda: pruned_adjacency(emb[0], gr.spatial.mlp, gr.spatial.prune),
        "dgcl": lambda: dgcl(emb[0].T, gr.spatial.weights[0], gr.spatial.mlp, gr.spatial.prune),
        "dgcb": lambda: dgcb(emb[0].T, gr.spatial),
        "stgm_forward": lambda: stgm_forward(tokens, gr),
        "blend": lambda: blend(g_in, l_in, params.blender.w_alpha),
    }
    rows = []
    for kernel, ref in expected.items():
        if ref is None:
            continue
        got = as_tensor(actual[kernel]()).data
        diff = float(np.max(np.abs(got - ref))) if got.shape == ref.shape else float("inf")
        rows.append(OracleRow(kernel, diff, ORACLE_TOL[kernel]))
    return rows


def relative_error(analytic, numeric) -> float:
    """||a - n|| / max(||a||, ||n||, GRAD_FLOOR) over a whole parameter block."""
    a, n = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), GRAD_FLOOR)
    return float(np.linalg.norm(a - n) / scale)


def check_blocks(name: str, fn: Callable[[Any], Tensor], tree: Any, seed: int = 0,
                 h: float = DEFAULT_H) -> list[GradRow]:
    """Tape vs central-difference gradients of a weighted output sum, per leaf block.

    The loss is sum(out * r) with fixed random r, so that outputs whose plain
    sum is constant (layer norm, softmax) still give informative gradients.
    """
    leaves = flatten(tree)
    probe_out = fn(tree)
    weights = stream(seed, f"gradcheck.{name}").normal(size=probe_out.shape)

    def loss(t):
        return tsum(mul(fn(t), weights))

    tape = Tape()
    watched = {path: tape.watch(leaf) for path, leaf in leaves.items()}
    grads = backward(tape, loss(rebuild(tree, watched)))
    rows = []
    for path, leaf in leaves.items():
        numeric = finite_diff_grad(lambda x, path=path: loss(rebuild(tree, {path: x})), leaf, h)
        rows.append(GradRow(name, path, relative_error(grads[watched[path].node], numeric), leaf.size))
    return rows


def gradcheck_config(cfg: PipelineConfig) -> PipelineConfig:
    """Desk-size instance (N=2, 2x3 tokens, D=8, T=2) keeping the graph hyperparameters."""
    return cfg.replace(N=2, c=8, h=2, w=3, D=None,
                       sttm=cfg.sttm.__class__(heads=2, d_ff=None, layers=cfg.sttm.layers))


def gradcheck_suite(cfg: PipelineConfig, seed: int | None = None, h: float = DEFAULT_H,
                    only: set[str] | None = None) -> list[GradRow]:
    """Gradient checks for each module and the composed pipeline."""
    if h < 1e-8:
        warnings.warn(f"step h={h:g} loses most digits to cancellation; judging at h={DEFAULT_H:g}",
                      RuntimeWarning, stacklevel=2)
        h = DEFAULT_H
    small = gradcheck_config(cfg)
    seed = small.seed if seed is None else seed
    params = init_model(small, seed)
    rng = stream(seed, "gradcheck.inputs")
    n, m, d = small.N, small.tokens, small.dim
    frames = synth_sequence(small, seed)
    pos = positional_encoding(small.h, small.w, d)
    emb = [Tensor(rng.normal(size=(m, d))) for _ in range(n)]
    st, gr = params.sttm.layers[0], params.stgm

    def frames_of(tokens):
        return [TokenFrame(as_tensor(t), pos) for t in tokens]

    checks: dict[str, tuple[Callable, Any]] = {
        "tensor.softmax": (lambda t: softmax(t["x"], axis=-1), {"x": emb[0]}),
        "tensor.layer_norm": (lambda t: layer_norm(t["x"], t["gamma"], t["beta"]),
                              {"x": emb[0], "gamma": Tensor(rng.normal(size=d)),
                               "beta": Tensor(rng.normal(size=d))}),
        "sttm.spat_mhsa": (lambda t: spat_mhsa(t["z"], t["attn"]), {"z": emb[0], "attn": st.spatial_attn}),
        "sttm.temp_mhsa": (lambda t: temp_mhsa(t["z"], t["frames"], t["attn"]),
                           {"z": emb[0], "frames": emb, "attn": st.temporal_attn}),
        "sttm.transformer_sublayer": (lambda t: transformer_sublayer(t["x"], t["sub"], t["ffn"]),
                                      {"x": emb[0], "sub": emb[1], "ffn": st.spatial_ffn}),
        "sttm.forward": (lambda t: sttm_forward(frames_of(t["tokens"]), t["sttm"]),
                         {"tokens": emb, "sttm": params.sttm}),
        "stgm.edge_scores": (lambda t: edge_scores(t["r"], t["mlp"]), {"r": emb[0], "mlp": gr.spatial.mlp}),
        "stgm.pruned_adjacency": (lambda t: pruned_adjacency(t["r"], t["mlp"], t["prune"]),
                                  {"r": emb[0], "mlp": gr.spatial.mlp, "prune": gr.spatial.prune}),
        "stgm.dgcb": (lambda t: dgcb(t["h"], t["block"]), {"h": emb[0].T, "block": gr.spatial}),
        "stgm.forward": (lambda t: stgm_forward(frames_of(t["tokens"]), t["stgm"]),
                         {"tokens": emb, "stgm": gr}),
        "blender": (lambda t: blend(t["g"], t["l"], t["w_alpha"]),
                    {"g": Tensor(rng.normal(size=(d, n * m))), "l": Tensor(rng.normal(size=(d, n * m))),
                     "w_alpha": params.blender.w_alpha}),
        "pipeline": (lambda t: forward(t["frames"], t["model"])[2], {"frames": Tensor(frames), "model": params}),
    }
    if gr.spatial.weights:
        checks["stgm.dgcl"] = (lambda t: dgcl(t["h"], t["w"], t["mlp"], t["prune"]),
                               {"h": emb[0].T, "w": gr.spatial.weights[0], "mlp": gr.spatial.mlp,
                                "prune": gr.spatial.prune})
    rows = []
    for name, (fn, tree) in checks.items():
        if only is None or name in only or name.split(".")[0] in only:
            rows.extend(check_blocks(name, fn, tree, seed, h))
    return rows
