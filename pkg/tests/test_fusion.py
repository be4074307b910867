import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvprof.core import tensor as T
from mvprof.core.tensor import Tensor
from mvprof.errors import ConfigError, DimensionError
from mvprof.fusion import (
    AttentiveGatedProjector,
    CrossViewFusion,
    ProficiencyClassifier,
    agp_project,
    classify,
    cross_view_fuse,
)
from mvprof.nn import Linear
from mvprof.rng import SplitMix64
from mvprof.textio import ProficiencyLabel


def ln(x, gain, bias, eps=1e-5):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def gelu(x):
    return 0.5 * x * (1 + np.tanh(0.7978845608028654 * (x + 0.044715 * x**3)))


def sig(x):
    return 1 / (1 + np.exp(-x))


def lin(layer, x):
    w = layer.effective_weight() if hasattr(layer, "effective_weight") else layer.weight.data
    b = layer.base_bias.data if hasattr(layer, "base_bias") else (
        0 if layer.bias is None else layer.bias.data)
    return x @ w.T + b


def scramble(module, rng):
    for _, p in module.named_parameters():
        p.data = p.data + rng.normals(p.shape, 0.3)


class TestCrossViewFusion:
    def test_single_view_straight_line_oracle(self):
        rng = SplitMix64(21)
        block = CrossViewFusion(8, 2, rng, max_views=5, ffn_hidden=6, lora_rank=2)
        scramble(block, rng)
        x = rng.normals((3, 1, 8))
        a = block.attn
        v = lin(a.o, lin(a.v, ln(x[:, 0], block.norm.gain.data, block.norm.bias.data)))
        f = sig(block.view_gate_logits.data[0]) * v
        h = lin(block.ffn.fc2, gelu(lin(block.ffn.fc1, f)))
        g = sig(block.blend_gate_logits.data)
        z = g * h + (1 - g) * f
        sd = np.log1p(np.exp(block.calib_sigma_raw.data)) + block.calib_eps
        out = (z - block.calib_mu.data) / sd * block.calib_scale.data + block.calib_shift.data
        np.testing.assert_allclose(cross_view_fuse(block, Tensor(x)).data, out, rtol=1e-11, atol=1e-12)

    def test_fresh_block_calibration_is_near_identity(self):
        block = CrossViewFusion(4, 2, SplitMix64(0))
        sd = np.log1p(np.exp(block.calib_sigma_raw.data))
        np.testing.assert_allclose(sd, 1.0, rtol=1e-15)

    def test_gate_saturation_isolates_one_view(self):
        rng = SplitMix64(5)
        block = CrossViewFusion(4, 2, rng, max_views=3)
        block.view_gate_logits.data = np.array([-1e3, 0.0, -1e3])
        block.blend_gate_logits.data[:] = -1e3  # pass f straight through
        block.calib_eps = 0.0
        block.calib_sigma_raw.data[:] = 50.0  # softplus(50) == 50 in float64
        block.calib_scale.data[:] = 50.0
        x = rng.normals((3, 4))
        attended = block.attn(block.norm(Tensor(x))).data
        out = block(Tensor(x)).data
        np.testing.assert_allclose(out, sig(0.0) * attended[1] / 3, rtol=1e-12)

    def test_blend_gate_zero_passthrough(self):
        rng = SplitMix64(6)
        block = CrossViewFusion(4, 2, rng)
        block.blend_gate_logits.data[:] = -1e3
        x = rng.normals((2, 4))
        f = (block.attn(block.norm(Tensor(x))).data * 0.5).mean(0)
        sd = np.log1p(np.exp(block.calib_sigma_raw.data)) + block.calib_eps
        np.testing.assert_allclose(block(Tensor(x)).data, f / sd, rtol=1e-12)

    @given(st.integers(1, 5), st.integers(0, 2**31))
    def test_tied_gates_make_fusion_permutation_invariant(self, V, seed):
        rng = SplitMix64(seed)
        block = CrossViewFusion(8, 4, rng, lora_rank=2)
        x = rng.normals((V, 8))
        perm = SplitMix64(seed + 1).permutation(V)
        attended = block.attn(block.norm(Tensor(x))).data
        np.testing.assert_allclose(block.attn(block.norm(Tensor(x[perm]))).data, attended[perm],
                                   atol=1e-12)
        np.testing.assert_allclose(block(Tensor(x[perm])).data, block(Tensor(x)).data, atol=1e-12)

    def test_untied_gates_break_permutation_invariance(self):
        rng = SplitMix64(3)
        block = CrossViewFusion(8, 4, rng)
        block.view_gate_logits.data = np.array([2.0, -1.0, 0.5, 0.0, 0.0])
        x = rng.normals((3, 8))
        swapped = block(Tensor(x[[1, 0, 2]])).data
        assert not np.allclose(swapped, block(Tensor(x)).data, atol=1e-6)

    def test_too_many_views(self):
        block = CrossViewFusion(4, 2, SplitMix64(0), max_views=2)
        with pytest.raises(ConfigError):
            block(Tensor(np.ones((3, 4))))
        with pytest.raises(DimensionError):
            block(Tensor(np.ones((2, 5))))

    def test_deterministic_under_seed(self):
        a = CrossViewFusion(8, 2, SplitMix64(4))
        b = CrossViewFusion(8, 2, SplitMix64(4))
        x = Tensor(SplitMix64(1).normals((3, 8)))
        assert a(x).data.tobytes() == b(x).data.tobytes()


class TestAgp:
    def test_single_view_straight_line_oracle(self):
        rng = SplitMix64(31)
        block = AttentiveGatedProjector(8, 6, 2, rng, ffn_hidden=5)
        scramble(block, rng)
        x = rng.normals((1, 3, 8))
        a = block.attn
        u = lin(a.o, lin(a.v, ln(x[0], block.norm.gain.data, block.norm.bias.data)))
        r = u + lin(block.ffn.fc2, gelu(lin(block.ffn.fc1, u)))
        gate = sig(lin(block.token_gate, u))
        out = ln(lin(block.out_proj, gate * r), block.out_norm.gain.data, block.out_norm.bias.data)
        np.testing.assert_allclose(agp_project(block, Tensor(x)).data, out, rtol=1e-11, atol=1e-12)

    def test_closed_gate_leaves_bias_pathway(self):
        rng = SplitMix64(2)
        block = AttentiveGatedProjector(4, 6, 2, rng)
        block.out_proj.bias.data = rng.normals(6)
        block.token_gate.weight.data[:] = 0.0
        block.token_gate.bias.data[:] = -1e3
        out = block(Tensor(rng.normals((3, 5, 4)))).data
        expected = ln(block.out_proj.bias.data, 1.0, 0.0)
        np.testing.assert_allclose(out, np.broadcast_to(expected, (5, 6)), atol=1e-12)

    @given(st.integers(1, 5), st.integers(0, 6), st.integers(0, 2**31))
    def test_output_shape_independent_of_view_count(self, V, steps, seed):
        rng = SplitMix64(seed)
        block = AttentiveGatedProjector(8, 4, 2, rng)
        assert block(Tensor(rng.normals((V, steps, 8)))).shape == (steps, 4)

    def test_batched_matches_single(self):
        rng = SplitMix64(3)
        block = AttentiveGatedProjector(8, 4, 2, rng)
        x = rng.normals((2, 3, 4, 8))
        np.testing.assert_allclose(block(Tensor(x)).data[1], block(Tensor(x[1])).data, atol=1e-13)

    def test_bad_width(self):
        with pytest.raises(DimensionError):
            AttentiveGatedProjector(8, 4, 2, SplitMix64(0))(Tensor(np.ones((2, 3, 5))))


class TestClassify:
    def test_bias_only_head_predicts_late_expert(self):
        head = Linear(4, 4, SplitMix64(0))
        head.weight.data[:] = 0.0
        head.bias.data = np.array([0.0, 0.0, 0.0, 1.0])
        logits = classify(head, Tensor(np.ones(4))).data
        assert ProficiencyLabel(int(logits.argmax())) is ProficiencyLabel.LATE_EXPERT

    def test_one_hot_through_identity_head(self):
        head = Linear(4, 4, SplitMix64(0))
        head.weight.data = np.eye(4)
        head.bias.data[:] = 0.0
        for k in range(4):
            assert int(classify(head, Tensor(np.eye(4)[k])).data.argmax()) == k

    def test_random_head_matches_dense_oracle(self):
        rng = SplitMix64(7)
        head = Linear(6, 4, rng)
        head.bias.data = rng.normals(4)
        x = rng.normals((3, 6))
        np.testing.assert_allclose(classify(head, Tensor(x)).data,
                                   x @ head.weight.data.T + head.bias.data, atol=1e-12)

    def test_classifier_end_to_end_shapes(self):
        rng = SplitMix64(1)
        model = ProficiencyClassifier(8, 2, rng)
        bundle = Tensor(rng.normals((2, 4, 3, 8)))
        assert model(bundle).shape == (2, 4)
        preds = model.predict(bundle)
        assert len(preds) == 2 and all(isinstance(p, ProficiencyLabel) for p in preds)
        assert model(Tensor(rng.normals((4, 3, 8)))).shape == (4,)
        trainable = {n for n, p in model.named_parameters() if p.requires_grad}
        assert "fusion.attn.q.A" in trainable and "fusion.attn.q.base_weight" not in trainable
