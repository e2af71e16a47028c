import numpy as np
import pytest

from fdclstm import tensor as T
from fdclstm.errors import (
    DoubleBackward,
    InvalidStride,
    NonScalarLoss,
    ShapeMismatch,
)
from oracles import conv1d_input_grad_oracle, conv1d_oracle, finite_difference, max_rel_err

RNG = np.random.default_rng(42)


def gradcheck(build, arrays, tol=1e-4, h=1e-5):
    """build() consumes the shared arrays (as leaf tensors) and returns scalar loss."""
    leaves = [T.Tensor(a, requires_grad=True) for a in arrays]
    loss = build(leaves)
    loss.backward()
    analytic = [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves]

    def f():
        vals = [T.Tensor(a) for a in arrays]
        return float(build(vals).data)

    numeric = finite_difference(f, arrays, h=h)
    for a, n in zip(analytic, numeric):
        assert max_rel_err(a, n) <= tol


class TestElementwise:
    def test_add_values_and_grad(self):
        for _ in range(50):
            a = RNG.standard_normal((3, 4))
            b = RNG.standard_normal((3, 4))
            gradcheck(lambda v: (v[0] + v[1]).sum(), [a.copy(), b.copy()])

    def test_broadcast_add_unbroadcasts_grad(self):
        a = RNG.standard_normal((3, 4))
        b = RNG.standard_normal((1, 4))
        gradcheck(lambda v: ((v[0] + v[1]) * (v[0] + v[1])).sum(), [a.copy(), b.copy()])

    def test_mul_sub_neg_grad(self):
        for _ in range(50):
            a = RNG.standard_normal((2, 5))
            b = RNG.standard_normal((2, 5))
            gradcheck(lambda v: ((v[0] * v[1]) - (-v[0])).sum(), [a.copy(), b.copy()])

    def test_fanout_accumulates(self):
        x = T.Tensor(np.array([1.0, 2.0]), requires_grad=True)
        y = x + x
        y.sum().backward()
        assert np.array_equal(x.grad, np.array([2.0, 2.0]))

    def test_sigmoid_tanh_relu_sqrt_values(self):
        assert T.sigmoid(T.Tensor(0.0)).item() == 0.5
        assert T.tanh(T.Tensor(0.0)).item() == 0.0
        assert T.relu(T.Tensor(-3.0)).item() == 0.0
        assert T.sqrt(T.Tensor(9.0)).item() == 3.0
        # extreme inputs stay finite
        s = T.sigmoid(T.Tensor(np.array([-1e4, 1e4]))).data
        assert np.all(np.isfinite(s))

    def test_activation_grads(self):
        for _ in range(50):
            a = RNG.standard_normal((4, 3)) * 2.0
            gradcheck(lambda v: (v[0].sigmoid() * v[0].tanh()).sum(), [a.copy()])
            b = np.abs(RNG.standard_normal(6)) + 0.5
            gradcheck(lambda v: v[0].sqrt().sum(), [b.copy()])

    def test_relu_grad_off_kink(self):
        a = RNG.standard_normal((5, 5))
        a[np.abs(a) < 1e-3] = 0.5  # keep away from the kink
        gradcheck(lambda v: (v[0].relu() * v[0]).sum(), [a.copy()])

    def test_mean_sum_reshape_slice_concat_grads(self):
        for _ in range(50):
            a = RNG.standard_normal((3, 4))
            b = RNG.standard_normal((3, 2))

            def build(v):
                joined = T.concat([v[0], v[1]], axis=1)
                part = T.slice_axis(joined, 1, 1, 5)
                return (part.reshape((2, 6)) * part.reshape((2, 6))).mean()

            gradcheck(build, [a.copy(), b.copy()])

    def test_concat_shape_algebra(self):
        a, b = T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((2, 5)))
        assert T.concat([a, b], axis=1).shape == (2, 8)
        with pytest.raises(ShapeMismatch):
            T.concat([T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((3, 3)))], axis=1)


class TestMatmul:
    def test_identity(self):
        x = np.arange(9.0).reshape(3, 3)
        out = T.matmul(T.Tensor(np.eye(3)), T.Tensor(x))
        assert np.array_equal(out.data, x)

    def test_hand_values(self):
        out = T.matmul(T.Tensor([[1.0, 2.0], [3.0, 4.0]]), T.Tensor([[5.0], [6.0]]))
        assert np.array_equal(out.data, np.array([[17.0], [39.0]]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            T.matmul(T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((2, 3))))

    def test_grad(self):
        for _ in range(50):
            a = RNG.standard_normal((3, 4))
            b = RNG.standard_normal((4, 2))
            gradcheck(lambda v: (T.matmul(v[0], v[1]) * T.matmul(v[0], v[1])).sum(), [a.copy(), b.copy()])


class TestConv1d:
    def test_identity_kernel(self):
        x = RNG.standard_normal((1, 7))
        out = T.conv1d(T.Tensor(x), T.Tensor(np.ones((1, 1, 1))), T.Tensor(np.zeros(1)))
        assert np.array_equal(out.data, x)

    def test_hand_sliding_sum(self):
        out = T.conv1d(
            T.Tensor([[1.0, 2.0, 3.0, 4.0]]),
            T.Tensor(np.ones((1, 1, 2))),
            T.Tensor(np.zeros(1)),
        )
        assert np.array_equal(out.data, np.array([[3.0, 5.0, 7.0]]))

    def test_zero_input_gives_bias(self):
        b = np.array([1.5, -2.0])
        out = T.conv1d(T.Tensor(np.zeros((3, 6))), T.Tensor(np.zeros((2, 3, 3))), T.Tensor(b))
        assert np.allclose(out.data, b[:, None])

    def test_matches_loop_oracle(self):
        for _ in range(25):
            stride = int(RNG.integers(1, 3))
            pad = int(RNG.integers(0, 3))
            c_in, c_out, k = (int(RNG.integers(1, 4)) for _ in range(3))
            length = int(RNG.integers(k, k + 6))
            x = RNG.standard_normal((c_in, length))
            w = RNG.standard_normal((c_out, c_in, k))
            b = RNG.standard_normal(c_out)
            out = T.conv1d(T.Tensor(x), T.Tensor(w), T.Tensor(b), stride, pad)
            assert np.allclose(out.data, conv1d_oracle(x, w, b, stride, pad), atol=1e-12)

    def test_input_grad_matches_transposed_conv_oracle(self):
        for _ in range(25):
            stride = int(RNG.integers(1, 3))
            pad = int(RNG.integers(0, 2))
            c_in, c_out, k = 2, 3, 3
            length = int(RNG.integers(k, k + 5))
            x = T.Tensor(RNG.standard_normal((c_in, length)), requires_grad=True)
            w = T.Tensor(RNG.standard_normal((c_out, c_in, k)))
            b = T.Tensor(RNG.standard_normal(c_out))
            out = T.conv1d(x, w, b, stride, pad)
            g = RNG.standard_normal(out.data.shape)
            (out * T.Tensor(g)).sum().backward()
            expected = conv1d_input_grad_oracle(g, w.data, length, stride, pad)
            assert np.allclose(x.grad, expected, atol=1e-12)

    def test_full_gradcheck(self):
        for _ in range(50):
            x = RNG.standard_normal((2, 8))
            w = RNG.standard_normal((3, 2, 3))
            b = RNG.standard_normal(3)
            gradcheck(
                lambda v: (T.conv1d(v[0], v[1], v[2], 2, 1) * T.conv1d(v[0], v[1], v[2], 2, 1)).sum(),
                [x.copy(), w.copy(), b.copy()],
            )

    def test_errors(self):
        with pytest.raises(InvalidStride):
            T.conv1d(T.Tensor(np.zeros((1, 5))), T.Tensor(np.zeros((1, 1, 2))), T.Tensor(np.zeros(1)), stride=0)
        with pytest.raises(ShapeMismatch):
            T.conv1d(T.Tensor(np.zeros((2, 5))), T.Tensor(np.zeros((1, 1, 2))), T.Tensor(np.zeros(1)))
        with pytest.raises(ShapeMismatch):
            T.conv1d(T.Tensor(np.zeros((1, 2))), T.Tensor(np.zeros((1, 1, 5))), T.Tensor(np.zeros(1)))


class TestMaxpool:
    def test_values_and_remainder(self):
        x = np.array([[1.0, 3.0, 2.0, 5.0, 9.0]])
        out = T.maxpool1d(T.Tensor(x), 2)
        assert np.array_equal(out.data, np.array([[3.0, 5.0]]))  # trailing 9 dropped

    def test_grad_routes_to_argmax(self):
        x = T.Tensor(np.array([[1.0, 3.0, 2.0, 5.0]]), requires_grad=True)
        T.maxpool1d(x, 2).sum().backward()
        assert np.array_equal(x.grad, np.array([[0.0, 1.0, 0.0, 1.0]]))

    def test_gradcheck(self):
        for _ in range(50):
            # well-separated values so finite differences never flip the argmax
            x = RNG.permutation(np.arange(18.0)).reshape(2, 9) * 0.5
            gradcheck(lambda v: (T.maxpool1d(v[0], 3) * T.maxpool1d(v[0], 3)).sum(), [x.copy()])


class TestDropout:
    def test_eval_mode_identity(self):
        x = T.Tensor(RNG.standard_normal((4, 4)))
        out = T.dropout(x, 0.5, key=(1,), training=False)
        assert out is x

    def test_bit_reproducible(self):
        x = T.Tensor(RNG.standard_normal((6, 6)))
        a = T.dropout(x, 0.5, key=(3, "in", 0)).data
        b = T.dropout(x, 0.5, key=(3, "in", 0)).data
        assert np.array_equal(a, b)

    def test_scaling(self):
        x = T.Tensor(np.ones((400, 400)))
        out = T.dropout(x, 0.25, key=(9,)).data
        kept = out != 0.0
        assert np.allclose(out[kept], 1.0 / 0.75)

    def test_gradcheck_with_fixed_key(self):
        a = RNG.standard_normal((4, 5))
        gradcheck(lambda v: (T.dropout(v[0], 0.4, key=(11,)) * v[0]).sum(), [a.copy()])


class TestBackwardMachinery:
    def test_linear_sum_grad(self):
        w = T.Tensor(np.zeros(4), requires_grad=True)
        w.sum().backward()
        assert np.array_equal(w.grad, np.ones(4))

    def test_quadratic_grad(self):
        w = T.Tensor(np.array([1.0, 2.0]), requires_grad=True)
        (w * w).sum().backward()
        assert np.array_equal(w.grad, np.array([2.0, 4.0]))

    def test_non_scalar_loss(self):
        w = T.Tensor(np.zeros((2, 2)), requires_grad=True)
        with pytest.raises(NonScalarLoss):
            (w + w).backward()

    def test_double_backward(self):
        w = T.Tensor(np.ones(3), requires_grad=True)
        loss = w.sum()
        loss.backward()
        with pytest.raises(DoubleBackward):
            loss.backward()

    def test_deep_chain_does_not_recurse(self):
        x = T.Tensor(np.array([1.0]), requires_grad=True)
        y = x
        for _ in range(5000):
            y = y + x
        y.sum().backward()
        assert x.grad[0] == 5001.0

    def test_no_grad_blocks_graph(self):
        x = T.Tensor(np.ones(3), requires_grad=True)
        with T.no_grad():
            y = (x * x).sum()
        assert not y.requires_grad
        assert y._backward_fn is None

    def test_constants_carry_no_grad(self):
        x = T.Tensor(np.ones(3))
        y = (x * x).sum()
        assert not y.requires_grad


class TestAdam:
    def test_zero_grad_fixed_point(self):
        p = T.Tensor(np.array([1.0, -2.0]), requires_grad=True)
        state = T.AdamState.for_params([p], lr=0.1)
        T.adam_step([p], [np.zeros(2)], state)
        assert np.array_equal(p.data, np.array([1.0, -2.0]))

    def test_first_step_magnitude(self):
        p = T.Tensor(np.array([0.5, -0.5]), requires_grad=True)
        before = p.data.copy()
        state = T.AdamState.for_params([p], lr=1e-3)
        g = np.array([0.3, -0.7])
        T.adam_step([p], [g], state)
        step = before - p.data
        # bias-corrected first step is lr * sign(g) up to eps
        assert np.allclose(step, 1e-3 * np.sign(g), atol=1e-6)

    def test_determinism(self):
        def run():
            p = T.Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
            state = T.AdamState.for_params([p], lr=0.01)
            for k in range(5):
                g = np.array([1.0, -1.0, 0.5]) * (k + 1)
                T.adam_step([p], [g], state)
            return p.data

        assert np.array_equal(run(), run())

    def test_shape_mismatch(self):
        p = T.Tensor(np.zeros(3), requires_grad=True)
        state = T.AdamState.for_params([p], lr=0.1)
        with pytest.raises(ShapeMismatch):
            T.adam_step([p], [np.zeros(4)], state)

    def test_clip_global_norm(self):
        g1 = np.array([3.0, 0.0])
        g2 = np.array([0.0, 4.0])
        norm = T.clip_global_norm([g1, g2], 1.0)
        assert norm == 5.0
        total = np.sqrt((g1**2).sum() + (g2**2).sum())
        assert abs(total - 1.0) < 1e-12
        g = np.array([0.1])
        assert T.clip_global_norm([g], 1.0) == pytest.approx(0.1)
        assert g[0] == 0.1  # under the cap: untouched


class TestCheckpoint:
    def test_roundtrip_and_hash_determinism(self, tmp_path):
        params = {
            "w": T.Tensor(RNG.standard_normal((3, 4)), requires_grad=True),
            "b": T.Tensor(RNG.standard_normal(4), requires_grad=True),
        }
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        T.save_checkpoint(p1, params, manifest={"note": "x"})
        T.save_checkpoint(p2, params, manifest={"note": "x"})
        assert p1.read_bytes() == p2.read_bytes()
        assert T.checkpoint_hash(p1) == T.checkpoint_hash(p2)
        arrays, manifest = T.load_checkpoint(p1)
        assert manifest == {"note": "x"}
        assert np.array_equal(arrays["w"], params["w"].data)
        assert np.array_equal(arrays["b"], params["b"].data)

    def test_hash_changes_with_params(self, tmp_path):
        a = {"w": T.Tensor(np.ones(3))}
        b = {"w": T.Tensor(np.ones(3) + 1e-12)}
        pa, pb = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        T.save_checkpoint(pa, a)
        T.save_checkpoint(pb, b)
        assert T.checkpoint_hash(pa) != T.checkpoint_hash(pb)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.ckpt"
        p.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
        with pytest.raises(ValueError):
            T.load_checkpoint(p)
