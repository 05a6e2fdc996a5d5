"""Tests for the autodiff core: op semantics, gradients, RNG determinism."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffsinger.numerics import (
    InvalidProbability,
    NonFiniteValue,
    Rng,
    ShapeMismatch,
    STREAM_DROPOUT,
    Tensor,
    abs_,
    add,
    concat_cols,
    conv1d,
    dropout,
    embedding,
    grad_check,
    layer_norm,
    linear,
    matmul,
    mean_,
    mean_pool_rows,
    sigmoid,
    slice_cols,
    slice_rows,
    softmax_rows,
    softplus,
    softplus_inv,
    sum_,
)


def tensor(data, grad=True):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=grad)


class TestMatmul:
    def test_identity(self):
        m = np.arange(9.0).reshape(3, 3)
        out = matmul(tensor(np.eye(3)), tensor(m))
        assert np.array_equal(out.data, m)

    def test_hand_product(self):
        out = matmul(tensor([[1, 2], [3, 4]]), tensor([[1], [1]]))
        assert np.array_equal(out.data, [[3], [7]])

    def test_grad_of_sum_is_ones_times_bt(self):
        a = tensor(np.arange(6.0).reshape(2, 3))
        b = tensor(np.arange(12.0).reshape(3, 4))
        sum_(matmul(a, b)).backward()
        assert np.allclose(a.grad, np.ones((2, 4)) @ b.data.T)
        assert np.allclose(b.grad, a.data.T @ np.ones((2, 4)))

    def test_inner_extent_mismatch(self):
        with pytest.raises(ShapeMismatch):
            matmul(tensor(np.ones((2, 3))), tensor(np.ones((2, 4))))


class TestConv1d:
    def test_width_one_kernel_is_per_frame_linear(self):
        x = tensor(np.random.default_rng(0).normal(size=(5, 3)))
        w = np.random.default_rng(1).normal(size=(3, 4))
        out = conv1d(x, tensor(w[None]))
        assert np.allclose(out.data, x.data @ w)

    def test_hand_case_with_zero_padding(self):
        x = tensor([[1.0], [2.0], [3.0]])
        w = tensor(np.ones((3, 1, 1)))
        assert np.allclose(conv1d(x, w).data.ravel(), [3.0, 6.0, 5.0])

    def test_even_kernel_rejected(self):
        with pytest.raises(ShapeMismatch):
            conv1d(tensor(np.ones((4, 2))), tensor(np.ones((2, 2, 2))))

    def test_gradients_match_finite_differences(self):
        rng = Rng(7)
        x = tensor(rng.normal((6, 3)))
        w = tensor(rng.normal((3, 3, 2)))
        b = tensor(rng.normal(2))
        err = grad_check(lambda: sum_(abs_(conv1d(x, w, b))), [x, w, b])
        assert err < 1e-6


class TestLayerNorm:
    def test_constant_row_maps_to_bias(self):
        x = tensor(np.full((2, 4), 3.0))
        out = layer_norm(x, tensor(np.ones(4)), tensor(np.zeros(4)))
        assert np.allclose(out.data, 0.0)

    def test_two_point_row(self):
        out = layer_norm(tensor([[1.0, 3.0]]), tensor(np.ones(2)), tensor(np.zeros(2)))
        # population variance; eps=1e-5 pulls the values in by ~5e-6
        assert np.allclose(out.data, [[-1.0, 1.0]], atol=1e-4)

    def test_unit_affine_rows_have_zero_mean(self):
        x = tensor(Rng(3).normal((8, 16), std=10.0))
        out = layer_norm(x, tensor(np.ones(16)), tensor(np.zeros(16)))
        assert np.abs(out.data.mean(axis=1)).max() < 1e-9

    def test_gradients(self):
        rng = Rng(11)
        x = tensor(rng.normal((4, 5)))
        g = tensor(rng.normal(5))
        b = tensor(rng.normal(5))
        err = grad_check(lambda: sum_(sigmoid(layer_norm(x, g, b))), [x, g, b])
        assert err < 1e-6


class TestSoftmax:
    def test_equal_values_give_uniform(self):
        out = softmax_rows(tensor(np.full((2, 5), 1.7)))
        assert np.allclose(out.data, 0.2)

    def test_closed_form(self):
        out = softmax_rows(tensor([[0.0, np.log(3.0)]]))
        assert np.allclose(out.data, [[0.25, 0.75]], atol=1e-12)

    def test_shift_invariance(self):
        x = Rng(5).normal((4, 6))
        a = softmax_rows(tensor(x)).data
        b = softmax_rows(tensor(x + 123.456)).data
        assert np.abs(a - b).max() < 1e-12

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_rows_sum_to_one(self, seed):
        x = Rng(seed).normal((5, 7))
        p = softmax_rows(tensor(x)).data
        assert np.abs(p.sum(axis=1) - 1.0).max() < 1e-12
        assert np.all(p > 0.0) and np.all(p < 1.0)

    def test_extreme_logits_stay_stochastic(self):
        # a dominant logit saturates its entry to 1.0 at 64-bit, but rows
        # must still sum to 1 and nothing may underflow to exactly 0
        x = Rng(0).normal((5, 7), std=100.0)
        p = softmax_rows(tensor(x)).data
        assert np.abs(p.sum(axis=1) - 1.0).max() < 1e-12
        assert np.all(p > 0.0) and np.all(p <= 1.0)


class TestDropout:
    def test_p_zero_is_identity(self):
        x = tensor(np.ones((3, 3)))
        assert dropout(x, 0.0, "train", Rng(0)) is x

    def test_eval_mode_is_identity(self):
        x = tensor(np.ones((3, 3)))
        assert dropout(x, 0.9, "eval", None) is x

    def test_zero_fraction_concentrates(self):
        x = tensor(np.ones((1000, 1000)))
        out = dropout(x, 0.1, "train", Rng(123, STREAM_DROPOUT))
        frac = float((out.data == 0.0).mean())
        assert abs(frac - 0.1) < 0.002
        survivors = out.data[out.data != 0.0]
        assert np.allclose(survivors, 1.0 / 0.9)

    def test_same_seed_same_mask(self):
        x = tensor(Rng(1).normal((32, 32)))
        a = dropout(x, 0.5, "train", Rng(9, STREAM_DROPOUT)).data
        b = dropout(x, 0.5, "train", Rng(9, STREAM_DROPOUT)).data
        assert np.array_equal(a, b)

    def test_invalid_probability(self):
        x = tensor(np.ones(3))
        with pytest.raises(InvalidProbability):
            dropout(x, 1.0, "train", Rng(0))
        with pytest.raises(InvalidProbability):
            dropout(x, -0.1, "train", Rng(0))

    def test_mask_reused_in_backward(self):
        x = tensor(np.ones((50, 50)))
        out = dropout(x, 0.3, "train", Rng(2, STREAM_DROPOUT))
        sum_(out).backward()
        assert np.array_equal(x.grad != 0.0, out.data != 0.0)


class TestGradCheck:
    def test_sum_of_squares(self):
        x = tensor([1.0, 2.0])
        err = grad_check(lambda: sum_(x * x), [x])
        assert err < 1e-8
        assert np.allclose(x.grad, [2.0, 4.0])

    def test_linear_graph_is_near_exact(self):
        x = tensor(np.arange(4.0))
        err = grad_check(lambda: sum_(x * 3.0 + 1.0), [x])
        assert err < 1e-10

    def test_rejects_non_finite_graphs(self):
        x = tensor([0.0])
        with np.errstate(invalid="ignore"), pytest.raises(NonFiniteValue):
            grad_check(lambda: sum_(Tensor(np.array([np.inf])) * x), [x])


class TestGraphMechanics:
    def test_reused_node_accumulates_once_per_path(self):
        # diamond: y = x*x + x*x; dy/dx = 4x
        x = tensor([3.0])
        z = x * x
        sum_(z + z).backward()
        assert np.allclose(x.grad, [12.0])

    def test_broadcast_add_unbroadcasts_gradient(self):
        a = tensor(np.zeros((3, 4)))
        b = tensor(np.zeros(4))
        sum_(add(a, b)).backward()
        assert np.allclose(a.grad, 1.0)
        assert np.allclose(b.grad, 3.0)

    def test_grad_accumulates_across_backward_calls(self):
        x = tensor([1.0])
        sum_(x * 2.0).backward()
        sum_(x * 2.0).backward()
        assert np.allclose(x.grad, [4.0])
        x.zero_grad()
        assert x.grad is None

    def test_forward_is_deterministic(self):
        rng = Rng(21)
        x = tensor(rng.normal((6, 4)))
        w = tensor(rng.normal((3, 4, 4)))

        def run():
            return softmax_rows(conv1d(sigmoid(x), w)).data

        assert np.array_equal(run(), run())


class TestShapingOps:
    def test_embedding_gathers_and_accumulates(self):
        table = tensor(np.arange(12.0).reshape(4, 3))
        out = embedding(table, np.array([0, 2, 0]))
        assert np.array_equal(out.data, table.data[[0, 2, 0]])
        sum_(out).backward()
        assert np.allclose(table.grad[0], 2.0)
        assert np.allclose(table.grad[2], 1.0)
        assert np.allclose(table.grad[1], 0.0)

    def test_mean_pool_rows_pads_with_last_row(self):
        x = tensor(np.array([[1.0], [3.0], [5.0], [7.0], [9.0]]))
        out = mean_pool_rows(x, 2)
        assert np.allclose(out.data.ravel(), [2.0, 6.0, 9.0])

    def test_mean_pool_identity_at_r1(self):
        x = tensor(np.ones((3, 2)))
        assert mean_pool_rows(x, 1) is x

    def test_concat_slice_round_trip(self):
        a = tensor(Rng(1).normal((4, 2)))
        b = tensor(Rng(2).normal((4, 3)))
        cat = concat_cols([a, b])
        assert np.array_equal(slice_cols(cat, 0, 2).data, a.data)
        assert np.array_equal(slice_cols(cat, 2, 5).data, b.data)
        assert np.array_equal(slice_rows(cat, 1, 3).data, cat.data[1:3])

    def test_softplus_inverse(self):
        for y in (0.1, 1.0, 30.0):
            x = softplus_inv(y)
            assert abs(float(softplus(tensor([x], grad=False)).data[0]) - y) < 1e-9


@given(
    t=st.integers(min_value=1, max_value=16),
    c=st.integers(min_value=1, max_value=32),
    seed=st.integers(0, 2**31 - 1),
)
@settings(max_examples=15, deadline=None)
def test_composite_backward_matches_finite_differences(t, c, seed):
    """Randomized-shape gradient fidelity for a graph touching every primitive
    family: conv, layer norm, linear, softmax, sigmoid, pooling, L1."""
    rng = Rng(seed)
    x = tensor(rng.normal((t, c)))
    w = tensor(rng.normal((3, c, c), std=1.0 / np.sqrt(c)))
    gain = tensor(1.0 + 0.1 * rng.normal(c))
    bias = tensor(0.1 * rng.normal(c))
    proj = tensor(rng.normal((c, 2), std=1.0 / np.sqrt(c)))

    def f():
        h = conv1d(x, w)
        h = layer_norm(h, gain, bias)
        h = sigmoid(linear(mean_pool_rows(h, 2), proj))
        return mean_(abs_(h) + softmax_rows(h))

    assert grad_check(f, [x, w, gain, bias, proj]) < 1e-6


def test_rng_streams_are_decoupled_and_reproducible():
    a = Rng(42).normal((8,))
    b = Rng(42).normal((8,))
    assert np.array_equal(a, b)
    main = Rng(42)
    assert not np.array_equal(main.normal((8,)), main.substream(1).normal((8,)))
    assert Rng(42).ALGORITHM == "philox4x64"
