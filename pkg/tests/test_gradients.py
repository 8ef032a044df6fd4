"""Analytic gradients against central finite differences.

Block-level checks isolate each backward; the pipeline check drives the whole
model through the contrastive loss on a tie-free fixture.
"""

import numpy as np
import pytest

from synret.blocks import (
    dot_softmax_attend,
    dot_softmax_attend_backward,
    layer_norm,
    layer_norm_backward,
    mlp,
    mlp_backward,
    transformer_encode,
    transformer_backward,
)
from synret.config import RunConfig
from synret.dataset import synthetic_bundles
from synret.gradcheck import grad_check, max_relative_error
from synret.params import LayerNormParams, MlpParams, init_params, zeros_like
from synret.rng import SplitMix64
from synret.train import batch_loss, batch_loss_and_grads, selection_margins


def fd(fn, arr, h=1e-6):
    """Elementwise central differences of a scalar function of arr."""
    out = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        lp = fn()
        flat[i] = orig - h
        lm = fn()
        flat[i] = orig
        gflat[i] = (lp - lm) / (2 * h)
    return out


class TestBlockGradients:
    def test_mlp_params_and_input(self):
        rng = SplitMix64(81)
        d = 6
        mp = MlpParams(w1=rng.uniform_sym((d, d)), b1=rng.uniform_sym(d),
                       w2=rng.uniform_sym((d, d)), b2=rng.uniform_sym(d))
        x = rng.uniform_sym((3, d))
        r = rng.uniform_sym((3, d))

        def loss():
            y, _ = mlp(x, mp)
            return float((y * r).sum())

        y, cache = mlp(x, mp)
        g = MlpParams(w1=np.zeros_like(mp.w1), b1=np.zeros_like(mp.b1),
                      w2=np.zeros_like(mp.w2), b2=np.zeros_like(mp.b2))
        xbar = mlp_backward(r, cache, mp, g)
        assert np.abs(xbar - fd(loss, x)).max() < 1e-8
        for name in ("w1", "b1", "w2", "b2"):
            assert np.abs(getattr(g, name) - fd(loss, getattr(mp, name))).max() < 1e-8

    def test_layer_norm_params_and_input(self):
        rng = SplitMix64(82)
        ln = LayerNormParams(gain=rng.uniform_sym(6), bias=rng.uniform_sym(6))
        x = rng.uniform_sym((2, 6))
        r = rng.uniform_sym((2, 6))

        def loss():
            y, _ = layer_norm(x, ln)
            return float((y * r).sum())

        _, cache = layer_norm(x, ln)
        g = LayerNormParams(gain=np.zeros(6), bias=np.zeros(6))
        xbar = layer_norm_backward(r, cache, ln, g)
        assert np.abs(xbar - fd(loss, x)).max() < 1e-8
        assert np.abs(g.gain - fd(loss, ln.gain)).max() < 1e-8
        assert np.abs(g.bias - fd(loss, ln.bias)).max() < 1e-8

    def test_attention_pooling_inputs(self):
        rng = SplitMix64(83)
        q = rng.uniform_sym(5)
        keys = rng.uniform_sym((4, 5))
        values = rng.uniform_sym((4, 5))
        r = rng.uniform_sym(5)

        def loss():
            _, pooled, _ = dot_softmax_attend(q, keys, values)
            return float(pooled @ r)

        _, _, cache = dot_softmax_attend(q, keys, values)
        qbar, kbar, vbar = dot_softmax_attend_backward(r, cache)
        assert np.abs(qbar - fd(loss, q)).max() < 1e-8
        assert np.abs(kbar - fd(loss, keys)).max() < 1e-8
        assert np.abs(vbar - fd(loss, values)).max() < 1e-8

    def test_transformer_params_and_input(self):
        params = init_params(84, 8, max_frames=5)
        rng = SplitMix64(84)
        x = rng.uniform_sym((4, 8))
        r = rng.uniform_sym((4, 8))

        def loss():
            y, _ = transformer_encode(x, params.temporal, params.pos_emb, 8)
            return float((y * r).sum())

        _, cache = transformer_encode(x, params.temporal, params.pos_emb, 8)
        g = zeros_like(params)
        xbar = transformer_backward(r, cache, params.temporal, g.temporal, g.pos_emb, 8)
        assert np.abs(xbar - fd(loss, x)).max() < 1e-7
        assert np.abs(g.pos_emb - fd(loss, params.pos_emb)).max() < 1e-7
        for name in ("wq", "wk", "wv", "wo", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2"):
            got = getattr(g.temporal, name)
            want = fd(loss, getattr(params.temporal, name))
            assert np.abs(got - want).max() < 1e-7, name


class TestGradCheckHarness:
    def test_quadratic_toy_loss(self):
        # loss = ||W x||^2 has exact gradient 2 (W x) x^T; central differences
        # are exact for quadratics up to roundoff
        params = zeros_like(d=4, max_frames=2)
        rng = SplitMix64(85)
        params.mlp1.w1[...] = rng.uniform_sym((4, 4))
        x = rng.uniform_sym(4)

        def loss():
            y = params.mlp1.w1 @ x
            return float(y @ y)

        grads = zeros_like(params)
        grads.mlp1.w1[...] = 2.0 * np.outer(params.mlp1.w1 @ x, x)
        report = grad_check(loss, grads, params, h=1e-4)
        assert report["mlp1.w1"] < 1e-10
        assert all(v == 0.0 for k, v in report.items() if k != "mlp1.w1")

    def test_constant_loss_reports_exact_zero(self):
        params = zeros_like(d=4, max_frames=2)
        report = grad_check(lambda: 0.0, zeros_like(params), params, h=1e-4)
        assert max_relative_error(report) == 0.0

    def test_zero_weight_quadratic_is_exact_zero(self):
        # at W = 0 both the analytic gradient and the symmetric difference
        # vanish identically
        params = zeros_like(d=4, max_frames=2)
        x = SplitMix64(86).uniform_sym(4)

        def loss():
            y = params.mlp1.w1 @ x
            return float(y @ y)

        report = grad_check(loss, zeros_like(params), params, h=1e-4)
        assert max_relative_error(report) == 0.0


@pytest.mark.slow
def test_full_pipeline_gradients_small():
    """End-to-end check on a reduced fixture; the acceptance suite runs the
    full-size one."""
    cfg = RunConfig(d=8, max_frames=3, seed=0)
    bundles, params = None, None
    for seed in range(10):
        cand = synthetic_bundles(seed, 2, 5, 3, 4, 8)
        cand_params = init_params(seed + 50, 8, max_frames=3)
        if selection_margins(cand, cand_params, cfg) > 5e-3:
            bundles, params = cand, cand_params
            break
    assert bundles is not None, "no tie-free fixture in seed range"
    _, grads, _ = batch_loss_and_grads(bundles, params, cfg)
    report = grad_check(lambda: batch_loss(bundles, params, cfg), grads, params)
    assert max_relative_error(report) < 1e-4
