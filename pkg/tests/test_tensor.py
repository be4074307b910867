import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvprof.core import tensor as T
from mvprof.core.tensor import Graph, Tensor, backward
from mvprof.errors import ContractError, DimensionError, NumericError
from mvprof.rng import SplitMix64


def leaf(x):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)


def grad_of(fn, *xs):
    ts = [leaf(x) for x in xs]
    with Graph() as g:
        loss = fn(*ts)
    backward(loss, g)
    return [t.grad for t in ts]


def triple_loop(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for p in range(k):
                out[i, j] += a[i, p] * b[p, j]
    return out


class TestMatmul:
    def test_identity(self):
        out = T.matmul(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([[3.0, 4.0], [5.0, 6.0]]))
        np.testing.assert_array_equal(out.data, [[3, 4], [5, 6]])

    def test_row_times_column(self):
        assert T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]

    def test_random_3x4_by_4x2_matches_triple_loop(self):
        rng = SplitMix64(5)
        a, b = rng.normals((3, 4)), rng.normals((4, 2))
        np.testing.assert_allclose(T.matmul(Tensor(a), Tensor(b)).data, triple_loop(a, b),
                                   rtol=0, atol=1e-12)

    @given(st.integers(1, 16), st.integers(1, 16), st.integers(1, 16), st.integers(0, 2**32))
    def test_all_shapes_up_to_16(self, m, k, n, seed):
        rng = SplitMix64(seed)
        a, b = rng.normals((m, k)), rng.normals((k, n))
        np.testing.assert_allclose(T.matmul(Tensor(a), Tensor(b)).data, triple_loop(a, b),
                                   rtol=0, atol=1e-12)

    def test_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\[2, 3\].*\[2, 3\]"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_backward_rules(self):
        rng = SplitMix64(1)
        a, b = rng.normals((2, 3)), rng.normals((3, 4))
        w = rng.normals((2, 4))
        ga, gb = grad_of(lambda x, y: T.sum(T.mul(T.matmul(x, y), Tensor(w))), a, b)
        np.testing.assert_allclose(ga, w @ b.T, atol=1e-12)
        np.testing.assert_allclose(gb, a.T @ w, atol=1e-12)


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(T.softmax_lastdim(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3,
                                   atol=1e-15)

    def test_large_inputs_do_not_overflow(self):
        np.testing.assert_array_equal(T.softmax_lastdim(Tensor([1000.0, 1000.0])).data, [0.5, 0.5])

    def test_one_two_three(self):
        e = [math.exp(v) for v in (1, 2, 3)]
        oracle = [v / math.fsum(e) for v in e]
        np.testing.assert_allclose(T.softmax_lastdim(Tensor([1.0, 2.0, 3.0])).data, oracle,
                                   rtol=1e-14)

    def test_non_finite_input_rejected(self):
        with pytest.raises(NumericError):
            T.softmax_lastdim(Tensor([0.0, np.nan]))

    def test_mask_zeroes_entries(self):
        mask = np.array([[True, False], [True, True]])
        out = T.softmax_lastdim(Tensor(np.zeros((2, 2))), mask).data
        np.testing.assert_array_equal(out, [[1.0, 0.0], [0.5, 0.5]])

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=12), st.floats(-100, 100))
    def test_rows_sum_to_one_and_shift_invariant(self, xs, c):
        x = np.array(xs)
        s = T.softmax_lastdim(Tensor(x)).data
        assert abs(s.sum() - 1.0) <= 1e-12
        assert np.all(s > 0) and np.all(s <= 1)
        np.testing.assert_allclose(T.softmax_lastdim(Tensor(x + c)).data, s, atol=1e-12)


class TestLayerNorm:
    ones, zeros = Tensor(np.ones(3)), Tensor(np.zeros(3))

    def test_constant_input_maps_to_bias(self):
        np.testing.assert_array_equal(T.layer_norm(Tensor([1.0, 1.0, 1.0]), self.ones, self.zeros).data,
                                      [0, 0, 0])

    def test_already_standardized(self):
        out = T.layer_norm(Tensor([-1.0, 1.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-300)
        np.testing.assert_allclose(out.data, [-1, 1], rtol=1e-15)

    def test_direct_formula(self):
        x = np.array([1.0, 2.0, 3.0])
        var = 2.0 / 3.0
        oracle = [2 * (v - 2.0) / math.sqrt(var + 1e-5) + 1 for v in x]
        out = T.layer_norm(Tensor(x), Tensor(np.full(3, 2.0)), Tensor(np.ones(3)), 1e-5)
        np.testing.assert_allclose(out.data, oracle, rtol=1e-14)

    def test_rejects_bad_eps_and_shapes(self):
        with pytest.raises(ContractError):
            T.layer_norm(Tensor([1.0, 2.0, 3.0]), self.ones, self.zeros, eps=0)
        with pytest.raises(DimensionError):
            T.layer_norm(Tensor([1.0, 2.0]), self.ones, self.zeros)


class TestElementwise:
    def test_sigmoid_zero(self):
        assert T.sigmoid(Tensor(0.0)).item() == 0.5

    def test_sigmoid_extremes_are_finite(self):
        out = T.sigmoid(Tensor([-1000.0, 1000.0])).data
        np.testing.assert_array_equal(out, [0.0, 1.0])

    def test_mean_axis(self):
        assert T.mean_axis(Tensor([[1.0, 3.0], [5.0, 7.0]]), axis=0).data.tolist() == [3.0, 5.0]

    def test_gelu_one(self):
        c, k = 0.7978845608028654, 0.044715
        oracle = 0.5 * (1 + math.tanh(c * (1 + k)))
        assert T.gelu(Tensor(1.0)).item() == pytest.approx(oracle, rel=1e-15)

    def test_relu_softplus_tanh(self):
        x = np.array([-2.0, 0.5, 40.0])
        np.testing.assert_array_equal(T.relu(Tensor(x)).data, [0, 0.5, 40])
        np.testing.assert_allclose(T.softplus(Tensor(x)).data, np.log1p(np.exp(x)), rtol=1e-14)
        np.testing.assert_allclose(T.tanh(Tensor(x)).data, np.tanh(x))

    def test_trailing_suffix_broadcast(self):
        out = T.add(Tensor(np.zeros((2, 3))), Tensor([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(out.data, [[1, 2, 3], [1, 2, 3]])

    @pytest.mark.parametrize("a,b", [((2, 3), (2,)), ((2, 3), (3, 1)), ((4,), (2, 3))])
    def test_non_suffix_broadcast_rejected(self, a, b):
        with pytest.raises(DimensionError):
            T.mul(Tensor(np.ones(a)), Tensor(np.ones(b)))

    def test_explicit_broadcast_to(self):
        out = T.broadcast_to(Tensor(np.array([[1.0], [2.0]])), (3, 2, 2))
        assert out.shape == (3, 2, 2) and out.data[2, 1, 0] == 2.0

    def test_concat_and_slice(self):
        a, b = Tensor(np.ones((1, 2))), Tensor(np.zeros((2, 2)))
        out = T.concat([a, b], axis=0)
        assert out.shape == (3, 2)
        np.testing.assert_array_equal(T.slice_axis(out, 0, 0, 1).data, [[1, 1]])

    def test_zero_extent_tensors_flow(self):
        x = leaf(np.zeros((0, 3)))
        with Graph() as g:
            loss = T.add(T.sum(T.mul(x, x)), T.sum(leaf(np.ones(1))))
        backward(loss, g)
        assert x.grad.shape == (0, 3)


class TestCrossEntropy:
    def test_uniform_logits(self):
        assert T.cross_entropy(Tensor(np.zeros((1, 4))), [2]).item() == pytest.approx(
            1.3862943611198906, abs=1e-15)

    def test_saturated_correct(self):
        logits = np.zeros((1, 3))
        logits[0, 1] = 1e6
        assert T.cross_entropy(Tensor(logits), [1]).item() == pytest.approx(0.0, abs=1e-12)

    def test_direct_log_softmax(self):
        oracle = -(1 - math.log(math.fsum(math.exp(v) for v in (1, 2, 3))))
        assert T.cross_entropy(Tensor([[1.0, 2.0, 3.0]]), [0]).item() == pytest.approx(oracle, rel=1e-15)

    def test_out_of_range_target(self):
        with pytest.raises(IndexError):
            T.cross_entropy(Tensor(np.zeros((1, 3))), [3])
        with pytest.raises(IndexError):
            T.cross_entropy(Tensor(np.zeros((1, 3))), [-1])


class TestBackward:
    def test_sum_is_ones(self):
        (g,) = grad_of(T.sum, [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(g, [1, 1, 1])

    def test_quadratic(self):
        (g,) = grad_of(lambda x: T.sum(T.mul(x, x)), [1.0, 2.0])
        np.testing.assert_array_equal(g, [2, 4])

    def test_fan_out_accumulates(self):
        (g,) = grad_of(lambda x: T.add(T.sum(x), T.sum(x)), np.ones((2, 3)))
        np.testing.assert_array_equal(g, 2 * np.ones((2, 3)))

    def test_non_scalar_loss_rejected(self):
        x = leaf([1.0, 2.0])
        with Graph() as g:
            y = T.mul(x, x)
        with pytest.raises(ContractError):
            backward(y, g)

    def test_frozen_inputs_get_no_gradient(self):
        x, w = leaf([1.0, 2.0]), Tensor([3.0, 4.0])
        with Graph() as g:
            loss = T.sum(T.mul(x, w))
        backward(loss, g)
        assert w.grad is None
        np.testing.assert_array_equal(x.grad, [3, 4])

    def test_nothing_recorded_without_graph(self):
        x = leaf([1.0])
        y = T.mul(x, x)
        assert y.node is None and not y.requires_grad

    def test_graph_is_freed_after_backward(self):
        x = leaf([1.0, 2.0])
        with Graph() as g:
            loss = T.sum(T.mul(x, x))
        backward(loss, g)
        assert len(g.nodes) == 0

    def test_topological_order_is_insertion_order(self):
        x = leaf([1.0, 2.0])
        with Graph() as g:
            T.sum(T.mul(T.add(x, x), x))
        for node in g.nodes:
            for inp in node.inputs:
                if inp.node is not None:
                    assert inp.node.index < node.index

    def test_bit_identical_repeats(self):
        rng = SplitMix64(3)
        a, b = rng.normals((3, 4)), rng.normals((4, 2))

        def run():
            return grad_of(lambda x, y: T.sum(T.gelu(T.matmul(x, y))), a, b)

        first, second = run(), run()
        for u, v in zip(first, second):
            assert u.tobytes() == v.tobytes()
