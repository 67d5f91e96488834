import warnings

import numpy as np
import pytest

from tgbformer.config import PipelineConfig
from tgbformer.verify import (ORACLE_TOL, check_blocks, gradcheck_config, gradcheck_suite, oracle_config,
                              oracle_suite, relative_error)
from tgbformer.blender import blend
from tgbformer.stgm import edge_scores, init_edge_mlp
from tgbformer.sttm import init_attention, init_ffn, spat_mhsa, transformer_sublayer
from tgbformer.tensor import Tensor, layer_norm, matmul, softmax


def test_oracle_suite_passes():
    rows = oracle_suite(PipelineConfig())
    assert {r.kernel for r in rows} == set(ORACLE_TOL)
    assert all(r.passed for r in rows), [r for r in rows if not r.passed]


def test_injected_fault_is_caught():
    rows = {r.kernel: r for r in oracle_suite(PipelineConfig(), inject_fault=True)}
    assert not rows["spat_mhsa"].passed and not rows["sttm_forward"].passed
    assert rows["blend"].passed


def test_oracle_config_is_small():
    small = oracle_config(PipelineConfig(N=30, h=16, w=16))
    assert small.N <= 3 and small.h <= 3 and small.w <= 3


def test_single_token_oracle():
    rows = oracle_suite(PipelineConfig(N=1, h=1, w=1))
    assert all(r.passed for r in rows)


def test_gradcheck_config_dims():
    g = gradcheck_config(PipelineConfig())
    assert (g.N, g.tokens, g.dim, g.sttm.heads) == (2, 6, 8, 2)


def test_relative_error_floor():
    assert relative_error(np.zeros(3), np.full(3, 1e-10)) < 1e-5
    assert relative_error(np.ones(3), np.ones(3) * 1.1) == pytest.approx(0.1 / 1.1 * 1, rel=1e-12)


def test_check_blocks_single_leaf():
    rows = check_blocks("softmax", lambda t: softmax(t["x"]), {"x": Tensor(np.arange(4.0))})
    assert len(rows) == 1 and rows[0].passed


def test_blender_and_tensor_subset():
    rows = gradcheck_suite(PipelineConfig(), only={"blender", "tensor"})
    assert {r.check for r in rows} == {"blender", "tensor.softmax", "tensor.layer_norm"}
    assert all(r.passed for r in rows)


def test_tiny_step_falls_back():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rows = gradcheck_suite(PipelineConfig(), h=1e-12, only={"tensor.softmax"})
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)
    assert all(r.passed for r in rows)


COMPOSITES = {
    "softmax": lambda rng, m: (lambda t: softmax(t["x"]), {"x": Tensor(rng.normal(size=(m, 8)))}),
    "layer_norm": lambda rng, m: (lambda t: layer_norm(t["x"], t["g"], t["b"]),
                                  {"x": Tensor(rng.normal(size=(m, 8))), "g": Tensor(rng.normal(size=8)),
                                   "b": Tensor(rng.normal(size=8))}),
    "matmul": lambda rng, m: (lambda t: matmul(t["a"], t["b"]),
                              {"a": Tensor(rng.normal(size=(m, 8))), "b": Tensor(rng.normal(size=(8, 3)))}),
    "spat_mhsa": lambda rng, m: (lambda t: spat_mhsa(t["z"], t["p"]),
                                 {"z": Tensor(rng.normal(size=(m, 8))), "p": init_attention(m, "a", 8, 2)}),
    "transformer_sublayer": lambda rng, m: (lambda t: transformer_sublayer(t["x"], t["s"], t["f"]),
                                            {"x": Tensor(rng.normal(size=(m, 8))),
                                             "s": Tensor(rng.normal(size=(m, 8))), "f": init_ffn(m, "f", 8, 16)}),
    "edge_scores": lambda rng, m: (lambda t: edge_scores(t["r"], t["mlp"]),
                                   {"r": Tensor(rng.normal(size=(m, 8))), "mlp": init_edge_mlp(m, "e", 4)}),
    "blend": lambda rng, m: (lambda t: blend(t["g"], t["l"], t["w"]),
                             {"g": Tensor(rng.normal(size=(4, m))), "l": Tensor(rng.normal(size=(4, m))),
                              "w": Tensor(rng.normal(size=(8, 8)))}),
}


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("op", list(COMPOSITES))
def test_composite_gradients(op, seed):
    rng = np.random.default_rng(seed)
    fn, tree = COMPOSITES[op](rng, int(rng.integers(1, 9)))
    rows = check_blocks(op, fn, tree, seed)
    assert all(r.passed for r in rows), [(r.block, r.rel_error) for r in rows if not r.passed]
