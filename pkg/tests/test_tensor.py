"""Tensor core: kernel semantics against naive loop oracles, tape mechanics,
and finite-difference checks for every backward rule."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from sptnet import tensor as T
from sptnet.tensor import (
    Rng, SparseMask, Tape, Tensor, add, avgpool_grid, backward, clamp, concat,
    depthwise_conv5x5, div, gather_rows, gelu, layer_norm, linear, log,
    masked_softmax, matmul, mean_all, mul, patchify, permute, reset_tape,
    reshape, scale, scatter_mean, sigmoid, softmax, sub, sum_all,
    topk_indices, topk_mask, transpose, upsample_x2, xavier_uniform,
)


# ---------------------------------------------------------------------------
# independent reference implementations (loops, math.exp)

def softmax_rows_oracle(x, allowed=None):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(x.shape[0]):
        cols = list(range(x.shape[1])) if allowed is None else list(allowed[i])
        m = max(x[i, j] for j in cols)
        exps = {j: math.exp(x[i, j] - m) for j in cols}
        z = sum(exps.values())
        for j in cols:
            out[i, j] = exps[j] / z
    return out


def matmul_oracle(a, b):
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for l in range(k):
                out[i, j] += a[i, l] * b[l, j]
    return out


def topk_oracle(row, cand, k):
    order = sorted(cand, key=lambda j: (-row[j], j))
    return order[:k]


def fd_gradients(f, params, eps=1e-5):
    """Central finite differences of scalar f() w.r.t. each Tensor in params."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            hi = f()
            flat[i] = keep - eps
            lo = f()
            flat[i] = keep
            gflat[i] = (hi - lo) / (2 * eps)
        grads.append(g)
    return grads


def run_op_gradcheck(make_out, params, rtol=1e-5, atol=1e-7):
    """Analytic grads of sum(w * out) vs central differences."""
    rng = np.random.default_rng(7)
    with Tape():
        out = make_out()
        w = Tensor(rng.standard_normal(out.shape))
        loss = sum_all(mul(out, w))
        backward(loss)
    analytic = [p.grad.copy() for p in params]

    def scalar():
        return float((make_out().data * w.data).sum())

    numeric = fd_gradients(scalar, params)
    for a, n in zip(analytic, numeric):
        assert_allclose(a, n, rtol=rtol, atol=atol)


# ---------------------------------------------------------------------------

class TestRng:
    def test_same_seed_bit_identical(self):
        a = Rng(12345)
        b = Rng(12345)
        assert [a.next_u64() for _ in range(10)] == [b.next_u64() for _ in range(10)]

    def test_f64_range(self):
        r = Rng(1)
        vals = [r.next_f64() for _ in range(1000)]
        assert all(0.0 <= v < 1.0 for v in vals)

    def test_vectorized_matches_scalar_stream(self):
        a = Rng(999)
        b = Rng(999)
        arr = a.uniform((3, 5))
        seq = np.array([b.next_f64() for _ in range(15)]).reshape(3, 5)
        assert_array_equal(arr, seq)
        # streams stay aligned afterwards
        assert a.next_u64() == b.next_u64()

    def test_uniform_bounds(self):
        r = Rng(4)
        arr = r.uniform(2000, low=-0.5, high=0.25)
        assert arr.min() >= -0.5 and arr.max() < 0.25

    def test_split_decorrelates(self):
        r = Rng(0)
        child = r.split()
        assert child.state != r.state

    def test_xavier_bound(self):
        w = xavier_uniform(Rng(3), 64, 64)
        bound = math.sqrt(6.0 / 128)
        assert np.all(np.abs(w.data) <= bound)
        assert w.requires_grad


class TestElementwise:
    def test_add_sub_mul_div(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[5.0, 6.0], [7.0, 8.0]])
        assert_array_equal(add(a, b).data, [[6, 8], [10, 12]])
        assert_array_equal(sub(a, b).data, [[-4, -4], [-4, -4]])
        assert_array_equal(mul(a, b).data, [[5, 12], [21, 32]])
        assert_allclose(div(b, a).data, [[5, 3], [7 / 3, 2]])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            add(Tensor([1.0]), Tensor([1.0, 2.0]))

    def test_scale_and_shift(self):
        a = Tensor([1.0, -2.0])
        assert_array_equal(scale(a, 3.0).data, [3.0, -6.0])
        assert_array_equal((a + 1.0).data, [2.0, -1.0])

    def test_sigmoid_values(self):
        s = sigmoid(Tensor([0.0, 100.0, -100.0]))
        assert_allclose(s.data, [0.5, 1.0, 0.0], atol=1e-12)

    def test_gelu_fixed_points(self):
        g = gelu(Tensor([0.0, 10.0, -10.0]))
        assert_allclose(g.data, [0.0, 10.0, 0.0], atol=1e-8)

    def test_clamp_and_log(self):
        c = clamp(Tensor([-1.0, 0.5, 2.0]), 0.0, 1.0)
        assert_array_equal(c.data, [0.0, 0.5, 1.0])
        assert_allclose(log(Tensor([1.0, math.e])).data, [0.0, 1.0])
        with pytest.raises(ValueError):
            log(Tensor([0.0]))

    def test_reductions(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert sum_all(a).item() == 10.0
        assert mean_all(a).item() == 2.5


class TestMatmul:
    def test_identity(self):
        rng = np.random.default_rng(0)
        a = Tensor(rng.standard_normal((4, 4)))
        assert_array_equal(matmul(a, Tensor(np.eye(4))).data, a.data)

    def test_against_loop_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            a = rng.standard_normal((3, 7))
            b = rng.standard_normal((7, 2))
            assert_allclose(matmul(Tensor(a), Tensor(b)).data,
                            matmul_oracle(a, b), rtol=1e-13)

    def test_batched(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((5, 2, 3))
        b = rng.standard_normal((5, 3, 4))
        out = matmul(Tensor(a), Tensor(b)).data
        for i in range(5):
            assert_allclose(out[i], matmul_oracle(a[i], b[i]), rtol=1e-13)

    def test_inner_dim_mismatch(self):
        with pytest.raises(ValueError):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    def test_batch_dim_mismatch(self):
        with pytest.raises(ValueError):
            matmul(Tensor(np.zeros((2, 3, 4))), Tensor(np.zeros((3, 4, 5))))


class TestSoftmax:
    def test_constant_rows_are_uniform(self):
        y = softmax(Tensor(np.full((3, 4), 2.5)), axis=1)
        assert_allclose(y.data, np.full((3, 4), 0.25), rtol=1e-15)

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((5, 6))
        a = softmax(Tensor(x), axis=1).data
        b = softmax(Tensor(x + 123.0), axis=1).data
        assert_allclose(a, b, atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(4)
        y = softmax(Tensor(rng.standard_normal((8, 5)) * 10), axis=1)
        assert_allclose(y.data.sum(axis=1), np.ones(8), atol=1e-12)

    def test_matches_oracle(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((6, 9))
        assert_allclose(softmax(Tensor(x), axis=1).data,
                        softmax_rows_oracle(x), atol=1e-12)


class TestMaskedSoftmax:
    def test_two_candidate_row(self):
        x = Tensor([[5.0, 9.0, 2.0]])
        mask = SparseMask([[0, 2]], 3)
        y = masked_softmax(x, mask, axis=1).data
        assert_allclose(y, [[0.9525741268224334, 0.0, 0.04742587317756678]],
                        atol=1e-12)
        assert y[0, 1] == 0.0  # exactly zero outside the mask

    def test_full_mask_equals_softmax(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((4, 7))
        full = masked_softmax(Tensor(x), SparseMask.full(4, 7), axis=1).data
        assert_allclose(full, softmax(Tensor(x), axis=1).data, atol=1e-14)

    def test_matches_loop_oracle_random_masks(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            n, m = rng.integers(2, 12, size=2)
            x = rng.standard_normal((n, m)) * 5
            allowed = [rng.choice(m, size=rng.integers(1, m + 1), replace=False)
                       for _ in range(n)]
            got = masked_softmax(Tensor(x), SparseMask(allowed, m), axis=1).data
            assert_allclose(got, softmax_rows_oracle(x, allowed), atol=1e-12)
            assert_allclose(got.sum(axis=1), np.ones(n), atol=1e-12)

    def test_axis_zero(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((5, 3))
        allowed = [[0, 2], [1, 3, 4], [2]]
        got = masked_softmax(Tensor(x), SparseMask(allowed, 5), axis=0).data
        assert_allclose(got.T, softmax_rows_oracle(x.T, allowed), atol=1e-12)

    def test_empty_row_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            masked_softmax(Tensor([[1.0, 2.0]]), SparseMask([[]], 2), axis=1)

    def test_mask_shape_rejected(self):
        with pytest.raises(ValueError):
            masked_softmax(Tensor(np.zeros((2, 3))), SparseMask.full(2, 4), axis=1)


class TestTopk:
    def test_descending_with_tie_break(self):
        got = topk_indices(Tensor([[3.0, 1.0, 4.0, 1.0, 5.0]]), 2)
        assert_array_equal(got[0], [4, 2])

    def test_all_equal_prefers_small_indices(self):
        got = topk_indices(Tensor([[7.0, 7.0, 7.0]]), 2)
        assert_array_equal(got[0], [0, 1])

    def test_short_row_returns_all_candidates(self):
        mask = SparseMask([[1, 3]], 5)
        got = topk_indices(Tensor([[0.0, 2.0, 9.0, 1.0, 9.0]]), 4, within=mask)
        assert_array_equal(got[0], [1, 3])

    def test_within_mask(self):
        x = Tensor([[10.0, 0.0, 5.0, 7.0]])
        got = topk_indices(x, 2, within=SparseMask([[1, 2, 3]], 4))
        assert_array_equal(got[0], [3, 2])

    def test_matches_sort_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            n, m = rng.integers(1, 9, size=2)
            x = rng.integers(0, 4, size=(n, m)).astype(float)  # many ties
            k = int(rng.integers(1, m + 1))
            allowed = [rng.choice(m, size=rng.integers(1, m + 1), replace=False)
                       for _ in range(n)]
            got = topk_indices(Tensor(x), k, within=SparseMask(allowed, m))
            for i in range(n):
                assert_array_equal(got[i], topk_oracle(x[i], sorted(allowed[i]), k))

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            topk_indices(Tensor([[1.0]]), 0)

    def test_topk_mask_roundtrip(self):
        x = Tensor([[1.0, 3.0, 2.0]])
        m = topk_mask(x, 2)
        assert_array_equal(m.rows[0], [1, 2])
        assert m.ncols == 3


class TestGatherScatter:
    def test_gather_basic(self):
        src = Tensor(np.arange(12.0).reshape(4, 3))
        out = gather_rows(src, np.array([[0, 2], [1, 1]]))
        assert_array_equal(out.data[0, 0], [0, 1, 2])
        assert_array_equal(out.data[0, 1], [6, 7, 8])
        assert_array_equal(out.data[1, 0], [3, 4, 5])
        assert_array_equal(out.data[1, 1], [3, 4, 5])

    def test_gather_out_of_range(self):
        with pytest.raises(ValueError):
            gather_rows(Tensor(np.zeros((2, 3))), np.array([[0, 2]]))

    def test_scatter_mean_collision(self):
        vals = Tensor(np.array([[[2.0], [4.0]]]))  # both land on row 5
        out = scatter_mean(6, vals, np.array([[5, 5]]))
        assert out.data[5, 0] == 3.0
        assert_array_equal(out.data[:5, 0], np.zeros(5))

    def test_scatter_untouched_rows_zero(self):
        vals = Tensor(np.ones((2, 1, 3)))
        out = scatter_mean(4, vals, np.array([[0], [2]]))
        assert_array_equal(out.data[1], np.zeros(3))
        assert_array_equal(out.data[3], np.zeros(3))

    def test_gather_scatter_identity(self):
        # disjoint, complete index grid -> identity
        rng = np.random.default_rng(10)
        src = Tensor(rng.standard_normal((6, 2)))
        idx = rng.permutation(6).reshape(3, 2)
        back = scatter_mean(6, gather_rows(src, idx), idx)
        assert_allclose(back.data, src.data, rtol=1e-15)

    def test_scatter_matches_loop_oracle(self):
        rng = np.random.default_rng(11)
        m, k, c, n = 4, 3, 2, 5
        vals = rng.standard_normal((m, k, c))
        idx = rng.integers(0, n, size=(m, k))
        got = scatter_mean(n, Tensor(vals), idx).data
        sums = np.zeros((n, c))
        counts = np.zeros(n)
        for i in range(m):
            for j in range(k):
                sums[idx[i, j]] += vals[i, j]
                counts[idx[i, j]] += 1
        expect = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], 0.0)
        assert_allclose(got, expect, rtol=1e-14)


class TestLayerNorm:
    def test_normalises_channels(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((10, 8)) * 3 + 1
        y = layer_norm(Tensor(x), T.ones(8), T.zeros(8)).data
        assert_allclose(y.mean(axis=-1), np.zeros(10), atol=1e-12)
        assert_allclose(y.var(axis=-1), np.ones(10), rtol=1e-4)

    def test_constant_input_gives_beta(self):
        beta = Tensor(np.array([1.0, -2.0, 0.5]))
        y = layer_norm(Tensor(np.full((4, 3), 9.0)), T.ones(3), beta).data
        assert_allclose(y, np.broadcast_to(beta.data, (4, 3)), atol=1e-12)


class TestSpatialKernels:
    def test_patchify_layout(self):
        x = Tensor(np.arange(16.0).reshape(4, 4, 1))
        p = patchify(x, 2).data
        assert p.shape == (4, 4)
        assert_array_equal(p[0], [0, 1, 4, 5])     # top-left patch, row-major
        assert_array_equal(p[3], [10, 11, 14, 15])

    def test_avgpool_grid(self):
        x = Tensor(np.arange(16.0).reshape(4, 4, 1))
        out = avgpool_grid(x, 2).data
        assert_allclose(out[:, 0], [2.5, 4.5, 10.5, 12.5])

    def test_avgpool_requires_divisibility(self):
        with pytest.raises(ValueError):
            avgpool_grid(Tensor(np.zeros((5, 4, 1))), 2)

    def test_upsample_constant_preserved(self):
        x = Tensor(np.full((3, 5, 2), 1.75))
        y = upsample_x2(x).data
        assert y.shape == (6, 10, 2)
        assert_allclose(y, np.full((6, 10, 2), 1.75), rtol=1e-15)

    def test_upsample_known_values(self):
        x = Tensor(np.array([0.0, 1.0]).reshape(1, 2, 1))
        y = upsample_x2(x).data[0, :, 0]
        # half-pixel convention: [0, .25, .75, 1] along the doubled axis
        assert_allclose(y, [0.0, 0.25, 0.75, 1.0], atol=1e-15)

    def test_depthwise_delta_kernel_is_identity(self):
        rng = np.random.default_rng(13)
        x = Tensor(rng.standard_normal((6, 7, 3)))
        k = np.zeros((5, 5, 3))
        k[2, 2, :] = 1.0
        assert_allclose(depthwise_conv5x5(x, Tensor(k)).data, x.data, rtol=1e-15)

    def test_depthwise_zero_padding(self):
        x = Tensor(np.ones((6, 6, 1)))
        k = Tensor(np.ones((5, 5, 1)))
        out = depthwise_conv5x5(x, k).data[:, :, 0]
        assert out[2, 2] == 25.0    # interior sees the full 5x5 window
        assert out[0, 0] == 9.0     # corner overlaps a 3x3 patch (zero pad)
        assert out[0, 2] == 15.0    # edge overlaps 3x5


class TestTapeMechanics:
    def test_no_recording_without_requires_grad(self):
        tape = reset_tape()
        mul(Tensor([1.0]), Tensor([2.0]))
        assert len(tape) == 0

    def test_topological_order(self):
        tape = reset_tape()
        a = Tensor([1.0, 2.0], requires_grad=True)
        b = mul(a, a)
        c = sum_all(b)
        produced = {id(a): -1}
        for pos, entry in enumerate(tape.entries):
            for t in entry.inputs:
                assert id(t) in produced or not t.requires_grad
                if id(t) in produced:
                    assert produced[id(t)] < pos
            produced[id(entry.output)] = pos
        backward(c)
        assert_allclose(a.grad, [2.0, 4.0])

    def test_reuse_accumulates(self):
        reset_tape()
        x = Tensor([3.0], requires_grad=True)
        y = add(mul(x, x), x)        # x^2 + x -> grad 2x + 1
        backward(sum_all(y))
        assert_allclose(x.grad, [7.0])

    def test_loss_must_be_scalar(self):
        reset_tape()
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = mul(x, x)
        with pytest.raises(ValueError, match="scalar"):
            backward(y)

    def test_loss_not_on_tape(self):
        reset_tape()
        with pytest.raises(ValueError, match="tape"):
            backward(Tensor(1.0))

    def test_nested_tapes(self):
        reset_tape()
        x = Tensor([2.0], requires_grad=True)
        with Tape():
            y = mul(x, x)
            backward(sum_all(y))
        assert_allclose(x.grad, [4.0])

    def test_grad_not_leaked_to_non_requires(self):
        reset_tape()
        x = Tensor([2.0], requires_grad=True)
        c = Tensor([5.0])
        backward(sum_all(mul(x, c)))
        assert c.grad is None
        assert_allclose(x.grad, [5.0])


class TestBackwardRules:
    """Every differentiable kernel against central finite differences."""

    def setup_method(self):
        reset_tape()
        self.rng = np.random.default_rng(42)

    def rand(self, shape, scale=1.0):
        return Tensor(self.rng.standard_normal(shape) * scale, requires_grad=True)

    def test_elementwise_ops(self):
        a, b = self.rand((3, 4)), self.rand((3, 4))
        run_op_gradcheck(lambda: add(a, b), [a, b])
        run_op_gradcheck(lambda: sub(a, b), [a, b])
        run_op_gradcheck(lambda: mul(a, b), [a, b])
        c = Tensor(self.rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)
        run_op_gradcheck(lambda: div(a, c), [a, c])
        run_op_gradcheck(lambda: scale(a, -1.7), [a])

    def test_activations(self):
        x = self.rand((4, 5))
        run_op_gradcheck(lambda: sigmoid(x), [x])
        run_op_gradcheck(lambda: gelu(x), [x])
        p = Tensor(self.rng.uniform(0.1, 0.9, (4, 5)), requires_grad=True)
        run_op_gradcheck(lambda: log(p), [p])
        run_op_gradcheck(lambda: clamp(p, 0.05, 0.95), [p])

    def test_matmul_2d_and_batched(self):
        a, b = self.rand((3, 5)), self.rand((5, 2))
        run_op_gradcheck(lambda: matmul(a, b), [a, b])
        ab, bb = self.rand((4, 2, 3)), self.rand((4, 3, 2))
        run_op_gradcheck(lambda: matmul(ab, bb), [ab, bb])
        # batched lhs against a shared 2-D rhs
        bshared = self.rand((3, 4))
        run_op_gradcheck(lambda: matmul(ab, bshared), [ab, bshared])

    def test_softmaxes(self):
        x = self.rand((4, 6), scale=2.0)
        run_op_gradcheck(lambda: softmax(x, axis=1), [x])
        mask = SparseMask([[0, 2, 5], [1, 3], [0, 1, 2, 3, 4, 5], [4]], 6)
        run_op_gradcheck(lambda: masked_softmax(x, mask, axis=1), [x])

    def test_linear_and_layer_norm(self):
        x, w, b = self.rand((6, 3)), self.rand((3, 4)), self.rand((4,))
        run_op_gradcheck(lambda: linear(x, w, b), [x, w, b])
        g, be = self.rand((5,)), self.rand((5,))
        y = self.rand((7, 5))
        run_op_gradcheck(lambda: layer_norm(y, g, be), [y, g, be])

    def test_gather_scatter(self):
        src = self.rand((6, 3))
        idx = np.array([[0, 5, 2], [2, 2, 4]])
        run_op_gradcheck(lambda: gather_rows(src, idx), [src])
        vals = self.rand((2, 3, 4))
        run_op_gradcheck(lambda: scatter_mean(6, vals, idx), [vals])

    def test_shape_ops(self):
        x = self.rand((4, 6, 2))
        run_op_gradcheck(lambda: transpose(x), [x])
        run_op_gradcheck(lambda: permute(x, (2, 0, 1)), [x])
        run_op_gradcheck(lambda: reshape(x, (8, 6)), [x])
        a, b = self.rand((2, 3)), self.rand((4, 3))
        run_op_gradcheck(lambda: concat([a, b], axis=0), [a, b])
        run_op_gradcheck(lambda: mean_all(x), [x])

    def test_spatial_ops(self):
        x = self.rand((4, 6, 2))
        run_op_gradcheck(lambda: patchify(x, 2), [x])
        run_op_gradcheck(lambda: avgpool_grid(x, 2), [x])
        run_op_gradcheck(lambda: upsample_x2(x), [x])
        k = self.rand((5, 5, 2), scale=0.5)
        run_op_gradcheck(lambda: depthwise_conv5x5(x, k), [x, k])

    def test_composite_chain(self):
        x = self.rand((5, 4))
        w1, b1 = self.rand((4, 8)), self.rand((8,))
        w2, b2 = self.rand((8, 4)), self.rand((4,))

        def net():
            h = gelu(linear(x, w1, b1))
            return softmax(linear(h, w2, b2), axis=1)

        run_op_gradcheck(net, [x, w1, b1, w2, b2])


class TestParameterUtilities:
    def test_named_parameters_deterministic(self):
        rng = Rng(0)
        ff = T.FeedForward.init(rng, 4)
        names = [n for n, _ in T.named_parameters(ff)]
        assert names == ["fc1.w", "fc1.b", "fc2.w", "fc2.b"]

    def test_same_seed_same_weights(self):
        w1 = xavier_uniform(Rng(77), 8, 8)
        w2 = xavier_uniform(Rng(77), 8, 8)
        assert w1.data.tobytes() == w2.data.tobytes()

    def test_sgd_step(self):
        p = Tensor([1.0, 2.0], requires_grad=True)
        p.grad = np.array([0.5, -0.5])
        T.sgd_step(p, lr=0.1)
        assert_allclose(p.data, [0.95, 2.05])

    def test_is_finite(self):
        assert Tensor([1.0]).is_finite()
        bad = Tensor([np.nan])
        assert not bad.is_finite()
        with pytest.raises(ValueError):
            bad.require_finite("x")
