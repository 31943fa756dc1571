"""Tensor engine tests: forward oracles, gradient checks, tape semantics."""

import numpy as np
import pytest

from tfodom import diffcore as dc
from tfodom.diffcore import ops


def leaf(arr):
    return dc.Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


def run_backward(fn, *leaves):
    for t in leaves:
        t.zero_grad()
    with dc.Tape():
        out = fn(*leaves)
        dc.backward(out)
    return out


# ---------------------------------------------------------------------------
# oracles (independent reimplementations used only by tests)
# ---------------------------------------------------------------------------

def conv2d_loops(x, w, b, stride, padding):
    """Direct nested-loop cross-correlation."""
    B, C, H, W = x.shape
    Co, _, kh, kw = w.shape
    s, p = stride, padding
    xp = np.zeros((B, C, H + 2 * p, W + 2 * p))
    xp[:, :, p:p + H, p:p + W] = x
    Ho = (H + 2 * p - kh) // s + 1
    Wo = (W + 2 * p - kw) // s + 1
    out = np.zeros((B, Co, Ho, Wo))
    for bi in range(B):
        for o in range(Co):
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0
                    for c in range(C):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[bi, c, i * s + u, j * s + v] * w[o, c, u, v]
                    out[bi, o, i, j] = acc + (b[o] if b is not None else 0.0)
    return out


def adaptive_bins(n_in, n_out):
    return [(o * n_in // n_out, -(-(o + 1) * n_in // n_out)) for o in range(n_out)]


def bilinear_point(img, i, j, h2, w2):
    """Per-pixel half-pixel-center interpolation formula."""
    H, W = img.shape
    sy = min(max((i + 0.5) * H / h2 - 0.5, 0.0), H - 1.0)
    sx = min(max((j + 0.5) * W / w2 - 0.5, 0.0), W - 1.0)
    y0 = min(int(np.floor(sy)), H - 2) if H > 1 else 0
    x0 = min(int(np.floor(sx)), W - 2) if W > 1 else 0
    fy = sy - y0 if H > 1 else 0.0
    fx = sx - x0 if W > 1 else 0.0
    y1 = min(y0 + 1, H - 1)
    x1 = min(x0 + 1, W - 1)
    return ((1 - fy) * (1 - fx) * img[y0, x0] + (1 - fy) * fx * img[y0, x1]
            + fy * (1 - fx) * img[y1, x0] + fy * fx * img[y1, x1])


# ---------------------------------------------------------------------------
# conv2d
# ---------------------------------------------------------------------------

class TestConv2d:
    def test_all_ones_summation(self):
        x = dc.Tensor(np.ones((1, 1, 3, 3)))
        k = dc.Tensor(np.ones((1, 1, 3, 3)))
        out = dc.conv2d(x, k, stride=1, padding=0)
        assert out.shape == (1, 1, 1, 1)
        assert out.data[0, 0, 0, 0] == 9.0

    def test_identity_kernel(self):
        rng = np.random.default_rng(1)
        x = dc.Tensor(rng.normal(size=(2, 1, 5, 7)))
        k = np.zeros((1, 1, 3, 3))
        k[0, 0, 1, 1] = 1.0
        out = dc.conv2d(x, dc.Tensor(k), stride=1, padding=1)
        np.testing.assert_array_equal(out.data, x.data)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(1, 2, 5, 5))
        w = rng.normal(size=(3, 2, 3, 3))
        b = rng.normal(size=3)
        out = dc.conv2d(dc.Tensor(x), dc.Tensor(w), dc.Tensor(b), stride=2, padding=1)
        expect = conv2d_loops(x, w, b, stride=2, padding=1)
        np.testing.assert_allclose(out.data, expect, rtol=1e-12, atol=1e-12)

    def test_channel_mismatch_message(self):
        x = dc.Tensor(np.zeros((1, 3, 4, 4)))
        k = dc.Tensor(np.zeros((2, 4, 3, 3)))
        with pytest.raises(ValueError, match="channels 3.*4"):
            dc.conv2d(x, k)

    def test_grad_check(self):
        rng = np.random.default_rng(3)
        x = leaf(rng.normal(size=(1, 2, 5, 6)))
        w = leaf(rng.normal(size=(3, 2, 3, 3)))
        b = leaf(rng.normal(size=3))
        err = dc.grad_check(lambda x, w, b: dc.sum(dc.square(dc.conv2d(x, w, b, stride=2, padding=1))), [x, w, b])
        assert err < 1e-4


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------

class TestPooling:
    def test_adaptive_constant(self):
        x = dc.Tensor(np.full((1, 2, 6, 8), 3.25))
        for target in [(1, 1), (2, 3), (6, 8)]:
            out = dc.pool2d(x, "adaptive_avg", output_size=target)
            np.testing.assert_allclose(out.data, 3.25)

    def test_max_2x2(self):
        x = dc.Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        out = dc.pool2d(x, "max", kernel_size=2, stride=2)
        assert out.data.reshape(()) == 4.0

    def test_adaptive_ramp_bins(self):
        x = np.arange(36.0).reshape(1, 1, 6, 6)
        out = dc.adaptive_avg_pool2d(dc.Tensor(x), (2, 3))
        expect = np.zeros((2, 3))
        for oi, (r0, r1) in enumerate(adaptive_bins(6, 2)):
            for oj, (c0, c1) in enumerate(adaptive_bins(6, 3)):
                expect[oi, oj] = x[0, 0, r0:r1, c0:c1].mean()
        np.testing.assert_allclose(out.data[0, 0], expect, rtol=1e-12)

    def test_adaptive_target_too_large(self):
        x = dc.Tensor(np.zeros((1, 1, 2, 2)))
        with pytest.raises(ValueError, match="exceeds"):
            dc.adaptive_avg_pool2d(x, (3, 2))

    def test_max_tie_routes_to_first(self):
        x = leaf(np.array([[[[2.0, 2.0], [2.0, 2.0]]]]))
        run_backward(lambda t: dc.sum(dc.max_pool2d(t, 2, 2)), x)
        np.testing.assert_array_equal(x.grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])

    def test_grad_checks(self):
        rng = np.random.default_rng(4)
        x = leaf(rng.normal(size=(2, 2, 6, 7)))
        err = dc.grad_check(lambda t: dc.sum(dc.square(dc.adaptive_avg_pool2d(t, (3, 2)))), [x])
        assert err < 1e-4
        x2 = leaf(rng.normal(size=(1, 2, 6, 6)))
        err = dc.grad_check(lambda t: dc.sum(dc.square(dc.max_pool2d(t, 3, 2, 1))), [x2])
        assert err < 1e-4


# ---------------------------------------------------------------------------
# dense
# ---------------------------------------------------------------------------

class TestDense:
    def test_identity_weight(self):
        rng = np.random.default_rng(5)
        x = dc.Tensor(rng.normal(size=(4, 3)))
        out = dc.dense(x, dc.Tensor(np.eye(3)), dc.Tensor(np.zeros(3)))
        np.testing.assert_allclose(out.data, x.data)

    def test_zero_weight_bias_rows(self):
        x = dc.Tensor(np.ones((5, 3)))
        b = np.array([1.0, -2.0, 0.5, 9.0])
        out = dc.dense(x, dc.Tensor(np.zeros((3, 4))), dc.Tensor(b))
        np.testing.assert_allclose(out.data, np.tile(b, (5, 1)))

    def test_matches_loop_matmul(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(2, 3))
        w = rng.normal(size=(3, 4))
        expect = np.zeros((2, 4))
        for i in range(2):
            for j in range(4):
                for k in range(3):
                    expect[i, j] += x[i, k] * w[k, j]
        out = dc.dense(dc.Tensor(x), dc.Tensor(w))
        np.testing.assert_allclose(out.data, expect, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="feature dimension"):
            dc.dense(dc.Tensor(np.zeros((2, 3))), dc.Tensor(np.zeros((4, 2))))

    def test_grad_check(self):
        rng = np.random.default_rng(7)
        x = leaf(rng.normal(size=(2, 5, 3)))
        w = leaf(rng.normal(size=(3, 4)))
        b = leaf(rng.normal(size=4))
        err = dc.grad_check(lambda x, w, b: dc.sum(dc.square(dc.dense(x, w, b))), [x, w, b])
        assert err < 1e-4


# ---------------------------------------------------------------------------
# pointwise
# ---------------------------------------------------------------------------

class TestPointwise:
    def test_sigmoid_zero(self):
        assert dc.sigmoid(dc.Tensor(0.0)).item() == 0.5

    def test_relu_negative_value_and_grad(self):
        x = leaf(np.array([-3.0]))
        run_backward(lambda t: dc.sum(dc.relu(t)), x)
        assert dc.relu(dc.Tensor([-3.0])).data[0] == 0.0
        assert x.grad[0] == 0.0

    def test_sigmoid_grad_quarter(self):
        x = leaf(np.array([0.0]))
        run_backward(lambda t: dc.sum(dc.sigmoid(t)), x)
        assert abs(x.grad[0] - 0.25) < 1e-12
        err = dc.grad_check(lambda t: dc.sum(dc.sigmoid(t)), [leaf(np.array([0.0]))])
        assert err < 1e-6

    def test_log_rejects_nonpositive(self):
        with pytest.raises(ValueError, match="non-positive"):
            dc.log(dc.Tensor([1.0, 0.0]))

    def test_sigmoid_open_interval(self):
        x = np.linspace(-30, 30, 301)
        y = dc.sigmoid(dc.Tensor(x)).data
        assert np.all(y > 0.0) and np.all(y < 1.0)

    def test_binary_shape_rules(self):
        a = dc.Tensor(np.ones((2, 3)))
        assert dc.add(a, 1.5).data[0, 0] == 2.5
        with pytest.raises(ValueError, match="differ"):
            dc.add(a, dc.Tensor(np.ones((3, 2))))

    @pytest.mark.parametrize("fn", [
        lambda t: dc.sum(dc.sigmoid(t)),
        lambda t: dc.sum(dc.exp(t)),
        lambda t: dc.sum(dc.log(dc.add(dc.square(t), 1.0))),
        lambda t: dc.sum(dc.sqrt(dc.add(dc.square(t), 0.5))),
        lambda t: dc.sum(dc.sin(t)),
        lambda t: dc.sum(dc.cos(t)),
        lambda t: dc.sum(dc.absolute(t)),
        lambda t: dc.sum(dc.mul(t, t)),
        lambda t: dc.sum(dc.div(t, dc.Tensor(np.full((2, 3), 1.7)))),
        lambda t: dc.sum(dc.clamp(t, -0.5, 0.5)),
    ])
    def test_pointwise_grad_checks(self, fn):
        rng = np.random.default_rng(8)
        x = leaf(rng.normal(size=(2, 3)) + 0.05)
        assert dc.grad_check(fn, [x]) < 1e-4

    def test_atan2_grad(self):
        rng = np.random.default_rng(9)
        y = leaf(rng.normal(size=4) + 2.0)
        x = leaf(rng.normal(size=4) + 2.0)
        err = dc.grad_check(lambda y, x: dc.sum(dc.atan2(y, x)), [y, x])
        assert err < 1e-4

    def test_where_select(self):
        mask = np.array([True, False, True])
        a = leaf(np.array([1.0, 2.0, 3.0]))
        b = leaf(np.array([10.0, 20.0, 30.0]))
        np.testing.assert_array_equal(dc.where(mask, a, b).data, [1.0, 20.0, 3.0])
        run_backward(lambda a, b: dc.sum(dc.where(mask, a, b)), a, b)
        np.testing.assert_array_equal(a.grad, [1.0, 0.0, 1.0])
        np.testing.assert_array_equal(b.grad, [0.0, 1.0, 0.0])

    def test_pointwise_dispatch(self):
        x = dc.Tensor([1.0, 2.0])
        np.testing.assert_allclose(ops.pointwise(x, "neg").data, [-1.0, -2.0])
        np.testing.assert_allclose(ops.pointwise(x, "scale", 2.0).data, [2.0, 4.0])
        np.testing.assert_allclose(ops.pointwise(x, "add", x).data, [2.0, 4.0])
        with pytest.raises(ValueError, match="unknown kind"):
            ops.pointwise(x, "gelu")


# ---------------------------------------------------------------------------
# normalizations
# ---------------------------------------------------------------------------

class TestNormalize:
    def test_softmax_uniform(self):
        out = dc.softmax(dc.Tensor(np.full((3, 5), 2.0)), axis=-1)
        np.testing.assert_allclose(out.data, 1.0 / 5.0)

    def test_softmax_formula(self):
        x = np.array([1.0, 2.0, 3.0])
        e = np.exp(x)
        out = dc.softmax(dc.Tensor(x), axis=0)
        np.testing.assert_allclose(out.data, e / e.sum(), rtol=1e-12)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(10)
        x = rng.normal(scale=20.0, size=(8, 12))
        out = dc.softmax(dc.Tensor(x), axis=1)
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-6)

    def test_softmax_grad(self):
        rng = np.random.default_rng(11)
        x = leaf(rng.normal(size=(2, 4)))
        v = dc.Tensor(rng.normal(size=(2, 4)))
        err = dc.grad_check(lambda t: dc.sum(dc.mul(dc.softmax(t, axis=-1), v)), [x])
        assert err < 1e-4

    def test_batch_norm_constant_channel(self):
        x = dc.Tensor(np.full((2, 3, 4, 4), 7.0))
        rm, rv = np.zeros(3), np.ones(3)
        out = dc.batch_norm(x, dc.Tensor(np.ones(3)), dc.Tensor(np.zeros(3)), rm, rv, training=True)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-12)

    def test_batch_norm_running_stats_update(self):
        rng = np.random.default_rng(12)
        x = rng.normal(loc=2.0, size=(4, 2, 3, 3))
        rm, rv = np.zeros(2), np.ones(2)
        dc.batch_norm(dc.Tensor(x), dc.Tensor(np.ones(2)), dc.Tensor(np.zeros(2)), rm, rv,
                      training=True, momentum=0.1)
        np.testing.assert_allclose(rm, 0.1 * x.mean(axis=(0, 2, 3)), rtol=1e-12)
        np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(axis=(0, 2, 3)), rtol=1e-12)

    def test_batch_norm_eval_uses_running(self):
        x = np.ones((1, 1, 2, 2)) * 5.0
        rm, rv = np.array([3.0]), np.array([4.0])
        out = dc.batch_norm(dc.Tensor(x), dc.Tensor(np.ones(1)), dc.Tensor(np.zeros(1)), rm, rv,
                            training=False, eps=0.0)
        np.testing.assert_allclose(out.data, (5.0 - 3.0) / 2.0)

    def test_batch_norm_grad(self):
        rng = np.random.default_rng(13)
        x = leaf(rng.normal(size=(3, 2, 2, 2)))
        g = leaf(rng.normal(size=2))
        b = leaf(rng.normal(size=2))

        def fn(x, g, b):
            rm, rv = np.zeros(2), np.ones(2)
            return dc.sum(dc.square(dc.batch_norm(x, g, b, rm, rv, training=True)))

        assert dc.grad_check(fn, [x, g, b]) < 1e-4

    def test_layer_norm_grad(self):
        rng = np.random.default_rng(14)
        x = leaf(rng.normal(size=(3, 5)))
        g = leaf(rng.normal(size=5))
        b = leaf(rng.normal(size=5))
        err = dc.grad_check(lambda x, g, b: dc.sum(dc.square(dc.layer_norm(x, g, b))), [x, g, b])
        assert err < 1e-4

    def test_zero_variance_no_failure(self):
        x = dc.Tensor(np.full((2, 4), 1.0))
        out = dc.layer_norm(x, dc.Tensor(np.ones(4)), dc.Tensor(np.zeros(4)))
        assert np.isfinite(out.data).all()


# ---------------------------------------------------------------------------
# bilinear resize
# ---------------------------------------------------------------------------

class TestBilinearResize:
    def test_same_shape_identity(self):
        rng = np.random.default_rng(15)
        x = rng.normal(size=(1, 2, 4, 5))
        out = dc.bilinear_resize(dc.Tensor(x), (4, 5))
        np.testing.assert_array_equal(out.data, x)

    def test_constant_any_size(self):
        x = dc.Tensor(np.full((1, 1, 3, 3), 2.5))
        out = dc.bilinear_resize(x, (7, 2))
        np.testing.assert_allclose(out.data, 2.5, rtol=1e-12)

    def test_2x2_to_4x4_formula(self):
        img = np.array([[0.0, 1.0], [2.0, 3.0]])
        out = dc.bilinear_resize(dc.Tensor(img.reshape(1, 1, 2, 2)), (4, 4)).data[0, 0]
        expect = np.array([[bilinear_point(img, i, j, 4, 4) for j in range(4)] for i in range(4)])
        np.testing.assert_allclose(out, expect, rtol=1e-12)

    def test_down_up_constant_exact(self):
        x = np.full((1, 1, 4, 6), -1.75)
        down = dc.bilinear_resize(dc.Tensor(x), (2, 3))
        up = dc.bilinear_resize(down, (4, 6))
        np.testing.assert_array_equal(up.data, x)

    def test_grad(self):
        rng = np.random.default_rng(16)
        x = leaf(rng.normal(size=(1, 2, 3, 4)))
        err = dc.grad_check(lambda t: dc.sum(dc.square(dc.bilinear_resize(t, (5, 3)))), [x])
        assert err < 1e-4


# ---------------------------------------------------------------------------
# shape plumbing
# ---------------------------------------------------------------------------

class TestShapeOps:
    def test_reshape_transpose_concat_stack_getitem_grads(self):
        rng = np.random.default_rng(17)

        def fn(t):
            a = dc.reshape(t, (3, 4))
            b = dc.transpose(a, (1, 0))
            c = dc.concat([b, b], axis=1)
            d = dc.stack([c, c], axis=0)
            return dc.sum(dc.square(d[0, 1:3, :4]))

        x = leaf(rng.normal(size=12))
        assert dc.grad_check(fn, [x]) < 1e-4

    def test_expand_leading(self):
        x = leaf(np.array([1.0, 2.0]))
        out = run_backward(lambda t: dc.sum(dc.expand_leading(t, 3)), x)
        assert out.item() == 9.0
        np.testing.assert_array_equal(x.grad, [3.0, 3.0])

    def test_matmul_batched_grad(self):
        rng = np.random.default_rng(18)
        a = leaf(rng.normal(size=(2, 3, 4)))
        b = leaf(rng.normal(size=(4, 5)))
        err = dc.grad_check(lambda a, b: dc.sum(dc.square(dc.matmul(a, b))), [a, b])
        assert err < 1e-4
        c = leaf(rng.normal(size=(2, 3, 4)))
        d = leaf(rng.normal(size=(2, 4, 3)))
        err = dc.grad_check(lambda a, b: dc.sum(dc.square(dc.matmul(a, b))), [c, d])
        assert err < 1e-4


# ---------------------------------------------------------------------------
# backward semantics
# ---------------------------------------------------------------------------

class TestBackward:
    def test_sum_gives_ones(self):
        x = leaf(np.arange(5.0))
        run_backward(lambda t: dc.sum(t), x)
        np.testing.assert_array_equal(x.grad, np.ones(5))

    def test_zero_times_x(self):
        x = leaf(np.arange(4.0))
        run_backward(lambda t: dc.sum(dc.scale(t, 0.0)), x)
        np.testing.assert_array_equal(x.grad, np.zeros(4))

    def test_non_scalar_rejected(self):
        x = leaf(np.ones(3))
        with dc.Tape():
            y = dc.mul(x, x)
            with pytest.raises(ValueError, match="scalar"):
                dc.backward(y)

    def test_accumulation_without_reset(self):
        x = leaf(np.ones(3))
        with dc.Tape():
            y = dc.sum(x)
            dc.backward(y)
            dc.backward(y)
        np.testing.assert_array_equal(x.grad, np.full(3, 2.0))

    def test_composite_chain_matches_fd(self):
        rng = np.random.default_rng(19)
        x = leaf(rng.normal(size=(1, 2, 5, 5)))
        w = leaf(rng.normal(size=(3, 2, 3, 3)) * 0.5)
        wd = leaf(rng.normal(size=(3 * 3 * 3, 4)) * 0.5)
        target = rng.integers(0, 4)

        def fn(x, w, wd):
            h = dc.relu(dc.conv2d(x, w, stride=2, padding=1))
            h = dc.reshape(h, (1, -1))
            logits = dc.dense(h, wd)
            probs = dc.softmax(logits, axis=-1)
            return dc.neg(dc.log(probs[0, target]))

        assert dc.grad_check(fn, [x, w, wd], step=1e-3) < 1e-4


# ---------------------------------------------------------------------------
# grad_check itself
# ---------------------------------------------------------------------------

class TestGradCheck:
    def test_linear_function_near_machine_eps(self):
        x = leaf(np.array([1.0, -2.0, 3.0]))
        err = dc.grad_check(lambda t: dc.sum(dc.scale(t, 3.0)), [x])
        assert err < 1e-10

    def test_constant_function_zero(self):
        x = leaf(np.array([1.0, 2.0]))
        err = dc.grad_check(lambda t: dc.sum(dc.scale(t, 0.0)), [x])
        assert err == 0.0

    def test_nonfinite_flagged(self):
        x = leaf(np.array([0.0]))
        with np.errstate(invalid="ignore", divide="ignore"):
            with pytest.raises(FloatingPointError):
                dc.grad_check(lambda t: dc.sum(dc.div(t, t)), [x])

    def test_sampled_subset(self):
        rng = np.random.default_rng(20)
        x = leaf(rng.normal(size=100))
        err = dc.grad_check(lambda t: dc.sum(dc.square(t)), [x], sample_per_input=5)
        assert err < 1e-4


# ---------------------------------------------------------------------------
# determinism and checkpointing
# ---------------------------------------------------------------------------

class TestDeterminismAndCheckpoint:
    def test_bit_identical_replay(self):
        def run():
            rng = np.random.default_rng(77)
            x = dc.Tensor(rng.normal(size=(2, 3, 8, 8)))
            w = dc.Tensor(rng.normal(size=(4, 3, 3, 3)))
            h = dc.relu(dc.conv2d(x, w, stride=1, padding=1))
            h = dc.adaptive_avg_pool2d(h, (2, 2))
            return dc.softmax(dc.reshape(h, (2, -1)), axis=-1).data

        a, b = run(), run()
        assert a.tobytes() == b.tobytes()

    def test_no_tape_means_no_graph(self):
        x = leaf(np.ones(3))
        y = dc.mul(x, x)
        assert not y.requires_grad

    def test_checkpoint_round_trip(self, tmp_path):
        rng = np.random.default_rng(21)
        arrays = {
            "layer.weight": rng.normal(size=(3, 4)).astype(np.float32),
            "layer.bias": rng.normal(size=4),
            "scalar": np.float64(3.5).reshape(()),
        }
        path = tmp_path / "weights.tfok"
        dc.save_checkpoint(path, arrays)
        back = dc.load_checkpoint(path)
        assert list(back) == list(arrays)
        for name in arrays:
            assert back[name].dtype == np.asarray(arrays[name]).dtype
            np.testing.assert_array_equal(back[name], arrays[name])
        assert path.read_bytes()[:4] == b"TFOK"

    def test_checkpoint_bad_magic(self, tmp_path):
        path = tmp_path / "bad.tfok"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            dc.load_checkpoint(path)
