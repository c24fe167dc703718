"""Tensor core: forward semantics and gradients against finite differences."""

import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

import fluxlab.tensor as T
from fluxlab.exceptions import ConfigError, DomainError, ShapeError
from fluxlab.gradcheck import check_gradients, fd_gradients, tape_gradients
from fluxlab.tensor import Tape, Tensor


class TestMatmul:
    def test_identity(self):
        v = T.as_tensor([1.0, 2.0, 3.0])
        out = T.matmul(T.as_tensor(np.eye(3)), v)
        assert_allclose(out.data, [1.0, 2.0, 3.0])

    def test_hand_sum(self):
        a = T.as_tensor([[1.0, 2.0], [3.0, 4.0]])
        b = T.as_tensor([[1.0], [1.0]])
        assert_allclose(T.matmul(a, b).data, [[3.0], [7.0]])

    def test_gradient_oracle(self, rng):
        a = T.param(rng, (4, 5))
        b = T.param(rng, (5, 3))
        w = T.as_tensor(rng.standard_normal((4, 3)))
        err = check_gradients(lambda: (T.matmul(a, b) * w).sum(), [a, b])
        assert err <= 1e-6

    def test_batched_gradient(self, rng):
        a = T.param(rng, (2, 3, 4))
        b = T.param(rng, (2, 4, 5))
        w = T.as_tensor(rng.standard_normal((2, 3, 5)))
        assert check_gradients(lambda: (T.matmul(a, b) * w).sum(), [a, b]) <= 1e-6

    def test_shape_error_names_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(T.as_tensor(np.ones((2, 3))), T.as_tensor(np.ones((2, 3))))


class TestPointwise:
    def test_sigmoid_zero(self):
        assert T.sigmoid(T.as_tensor([0.0])).data[0] == 0.5

    def test_gelu_zero(self):
        assert T.gelu(T.as_tensor([0.0])).data[0] == 0.0

    def test_x_sigmoid_gradient(self):
        x = Tensor(np.array([1.3]), requires_grad=True)
        err = check_gradients(lambda: (x * T.sigmoid(x)).sum(), [x])
        assert err <= 1e-6

    def test_sqrt_negative_domain_error(self):
        with pytest.raises(DomainError):
            T.sqrt(T.as_tensor([-1.0]))

    def test_log_nonpositive_domain_error(self):
        with pytest.raises(DomainError):
            T.log(T.as_tensor([0.0]))

    def test_broadcast_add_mul_grads(self, rng):
        a = T.param(rng, (3, 1, 4))
        b = T.param(rng, (5, 1))
        w = T.as_tensor(rng.standard_normal((3, 5, 4)))
        assert check_gradients(lambda: ((a + b) * w).sum(), [a, b]) <= 1e-6
        assert check_gradients(lambda: ((a * b) * w).sum(), [a, b]) <= 1e-6

    @pytest.mark.parametrize("op", ["add", "mul", "sigmoid", "gelu", "sqrt", "power",
                                    "exp", "div", "sub"])
    def test_fd_oracle_random_shapes(self, op, rng):
        shape = (2, 3)
        x = Tensor(rng.uniform(0.5, 2.0, shape), requires_grad=True)
        y = Tensor(rng.uniform(0.5, 2.0, shape), requires_grad=True)
        w = T.as_tensor(rng.standard_normal(shape))
        fns = {
            "add": lambda: ((x + y) * w).sum(),
            "sub": lambda: ((x - y) * w).sum(),
            "mul": lambda: ((x * y) * w).sum(),
            "div": lambda: ((x / y) * w).sum(),
            "sigmoid": lambda: (T.sigmoid(x) * w).sum(),
            "gelu": lambda: (T.gelu(x) * w).sum(),
            "sqrt": lambda: (T.sqrt(x) * w).sum(),
            "exp": lambda: (T.exp(x) * w).sum(),
            "power": lambda: (T.power(x, 3.0) * w).sum(),
        }
        assert check_gradients(fns[op], [x, y]) <= 1e-5


class TestLayerNorm:
    def test_constant_vector(self):
        x = T.as_tensor(np.full((4,), 2.5))
        out = T.layer_norm(x, T.as_tensor(np.ones(4)), T.as_tensor(np.zeros(4)), 1e-6)
        assert_allclose(out.data, np.zeros(4), atol=1e-12)

    def test_already_normalized(self):
        x = T.as_tensor([1.0, -1.0])
        out = T.layer_norm(x, T.as_tensor(np.ones(2)), T.as_tensor(np.zeros(2)), 1e-12)
        assert_allclose(out.data, [1.0, -1.0], atol=1e-6)

    def test_gradient_oracle(self, rng):
        x = T.param(rng, (2, 3, 8))
        gain = T.param(rng, (8,))
        bias = T.param(rng, (8,))
        w = T.as_tensor(rng.standard_normal((2, 3, 8)))
        err = check_gradients(
            lambda: (T.layer_norm(x, gain, bias, 1e-6) * w).sum(), [x, gain, bias]
        )
        assert err <= 1e-6

    def test_eps_positive_required(self):
        x = T.as_tensor([1.0, 2.0])
        with pytest.raises(DomainError):
            T.layer_norm(x, T.as_tensor(np.ones(2)), T.as_tensor(np.zeros(2)), 0.0)


class TestSoftmaxAttention:
    def test_single_token_returns_values(self, rng):
        q = T.as_tensor(rng.standard_normal((2, 1, 4)))
        k = T.as_tensor(rng.standard_normal((2, 1, 4)))
        v = T.as_tensor(rng.standard_normal((2, 1, 4)))
        assert_allclose(T.softmax_attention(q, k, v).data, v.data, atol=1e-14)

    def test_identical_keys_average_values(self, rng):
        q = T.as_tensor(rng.standard_normal((1, 3, 4)))
        k = T.as_tensor(np.tile(rng.standard_normal((1, 1, 4)), (1, 3, 1)))
        v = T.as_tensor(rng.standard_normal((1, 3, 4)))
        out = T.softmax_attention(q, k, v)
        assert_allclose(out.data, np.tile(v.data.mean(axis=1), (3, 1))[None], atol=1e-12)

    def test_rows_sum_to_one(self, rng):
        q = T.as_tensor(rng.standard_normal((2, 3, 4)))
        scores = T.matmul(q, T.swap_last2(q))
        attn = T.softmax(scores, axis=-1)
        assert_allclose(attn.data.sum(axis=-1), np.ones((2, 3)), atol=1e-14)

    def test_gradient_oracle(self, rng):
        q = T.param(rng, (2, 3, 4))
        k = T.param(rng, (2, 3, 4))
        v = T.param(rng, (2, 3, 4))
        w = T.as_tensor(rng.standard_normal((2, 3, 4)))
        err = check_gradients(
            lambda: (T.softmax_attention(q, k, v) * w).sum(), [q, k, v]
        )
        assert err <= 1e-5


def _circulant_oracle(z, modes_data, n):
    """Brute-force O(N^2) circulant matrices built from the mode spectrum."""
    w_out, w_in, m = modes_data.shape[1:]
    full = np.zeros((w_out, w_in, n // 2 + 1), dtype=complex)
    full[..., :m] = modes_data[0] + 1j * modes_data[1]
    kern = np.fft.irfft(full, n=n, axis=-1)  # spatial kernels [w_out, w_in, N]
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    out = np.zeros((w_out, n))
    for o in range(w_out):
        for i in range(w_in):
            out[o] += kern[o, i][idx] @ z[i]
    return out


class TestSpectralConv:
    def test_zero_modes(self, rng):
        z = T.as_tensor(rng.standard_normal((3, 16)))
        modes = T.as_tensor(np.zeros((2, 2, 3, 5)))
        assert_allclose(T.circular_spectral_conv(z, modes).data, np.zeros((2, 16)))

    def test_dc_projection(self, rng):
        z = T.as_tensor(rng.standard_normal((1, 16)))
        modes = np.zeros((2, 1, 1, 3))
        modes[0, 0, 0, 0] = 1.0  # unit weight on the mean mode only
        out = T.circular_spectral_conv(z, T.as_tensor(modes))
        assert_allclose(out.data, np.full((1, 16), z.data.mean()), atol=1e-14)

    def test_shift_equivariance(self, rng):
        z = T.as_tensor(rng.standard_normal((3, 32)))
        modes = T.as_tensor(rng.standard_normal((2, 2, 3, 9)))
        out = T.circular_spectral_conv(z, modes)
        rolled = T.circular_spectral_conv(T.roll(z, 5, axis=-1), modes)
        assert np.abs(rolled.data - np.roll(out.data, 5, axis=-1)).max() <= 1e-12

    @pytest.mark.parametrize("n", [8, 16, 32])
    def test_circulant_matrix_oracle(self, n, rng):
        z = rng.standard_normal((3, n))
        modes = rng.standard_normal((2, 2, 3, n // 2))
        out = T.circular_spectral_conv(T.as_tensor(z), T.as_tensor(modes))
        expected = _circulant_oracle(z, modes, n)
        assert np.abs(out.data - expected).max() <= 1e-10

    def test_modes_out_of_range(self, rng):
        z = T.as_tensor(rng.standard_normal((1, 8)))
        with pytest.raises(ConfigError):
            T.circular_spectral_conv(z, T.as_tensor(np.zeros((2, 1, 1, 6))))

    def test_odd_grid_rejected(self, rng):
        z = T.as_tensor(rng.standard_normal((1, 9)))
        with pytest.raises(DomainError):
            T.circular_spectral_conv(z, T.as_tensor(np.zeros((2, 1, 1, 3))))

    def test_gradient_oracle(self, rng):
        z = T.param(rng, (2, 12))
        modes = T.param(rng, (2, 3, 2, 4))
        w = T.as_tensor(rng.standard_normal((3, 12)))
        err = check_gradients(
            lambda: (T.circular_spectral_conv(z, modes) * w).sum(), [z, modes]
        )
        assert err <= 1e-6

    def test_nyquist_mode_gradient(self, rng):
        # M = N//2 + 1 exercises the half-scale adjoint at both band edges.
        z = T.param(rng, (1, 8))
        modes = T.param(rng, (2, 1, 1, 5))
        w = T.as_tensor(rng.standard_normal((1, 8)))
        err = check_gradients(
            lambda: (T.circular_spectral_conv(z, modes) * w).sum(), [z, modes]
        )
        assert err <= 1e-6


class TestCausalConv:
    def test_identity_kernel(self, rng):
        x = T.as_tensor(rng.standard_normal((6, 4)))
        kernel = np.zeros((4, 3))
        kernel[:, -1] = 1.0
        out = T.causal_depthwise_conv1d(x, T.as_tensor(kernel))
        assert np.array_equal(out.data, x.data)

    def test_causality_bit_exact(self, rng):
        x1 = rng.standard_normal((8, 4))
        x2 = x1.copy()
        x2[3] += 1.0
        kernel = T.as_tensor(rng.standard_normal((4, 3)))
        o1 = T.causal_depthwise_conv1d(T.as_tensor(x1), kernel)
        o2 = T.causal_depthwise_conv1d(T.as_tensor(x2), kernel)
        assert np.array_equal(o1.data[:3], o2.data[:3])
        assert not np.array_equal(o1.data[3:], o2.data[3:])

    def test_gradient_oracle(self, rng):
        x = T.param(rng, (5, 4))
        kernel = T.param(rng, (4, 3))
        w = T.as_tensor(rng.standard_normal((5, 4)))
        err = check_gradients(
            lambda: (T.causal_depthwise_conv1d(x, kernel) * w).sum(), [x, kernel]
        )
        assert err <= 1e-6


class TestTape:
    def test_backward_populates_exactly_leaves(self, rng):
        a = T.param(rng, (3,))
        b = T.param(rng, (3,))
        const = T.as_tensor(rng.standard_normal(3))
        with Tape():
            mid = a * const
            loss = (mid + b).sum()
        loss.backward()
        assert a.grad is not None and b.grad is not None
        assert const.grad is None
        assert mid.grad is None  # intermediate, not a leaf

    def test_ops_without_tape_are_detached(self, rng):
        a = T.param(rng, (3,))
        out = a * 2.0
        assert not out.requires_grad
        with pytest.raises(ShapeError):
            out.sum().backward()

    def test_grad_accumulates_over_shared_use(self, rng):
        a = T.param(rng, (3,))
        with Tape():
            loss = (a * a + a).sum()
        loss.backward()
        assert_allclose(a.grad, 2 * a.data + 1)

    def test_parallel_tapes_on_threads(self, rng):
        results = {}

        def work(key, scale):
            x = Tensor(np.full(4, scale), requires_grad=True)
            with Tape():
                loss = (x * x).sum()
            loss.backward()
            results[key] = x.grad.copy()

        threads = [threading.Thread(target=work, args=(i, float(i + 1)))
                   for i in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for i in range(4):
            assert_allclose(results[i], np.full(4, 2.0 * (i + 1)))

    def test_debug_finite_check(self, rng):
        T.set_debug_finite(True)
        try:
            x = T.as_tensor([1e308])
            with np.errstate(over="ignore"), pytest.raises(FloatingPointError):
                x * 10.0  # overflows to inf
        finally:
            T.set_debug_finite(False)


class TestShapeOps:
    @given(
        shift=st.integers(min_value=-6, max_value=6),
        n=st.integers(min_value=2, max_value=8),
    )
    @settings(max_examples=25, deadline=None)
    def test_roll_adjoint_is_inverse_roll(self, shift, n):
        rng = np.random.default_rng(0)
        x = Tensor(rng.standard_normal(n), requires_grad=True)
        w = rng.standard_normal(n)
        with Tape():
            loss = (T.roll(x, shift, axis=0) * T.as_tensor(w)).sum()
        loss.backward()
        assert_allclose(x.grad, np.roll(w, -shift))

    def test_getitem_concat_stack_grads(self, rng):
        a = T.param(rng, (4, 6))
        b = T.param(rng, (4, 2))
        w = T.as_tensor(rng.standard_normal((4, 8)))
        err = check_gradients(lambda: (T.concat([a, b], axis=1) * w).sum(), [a, b])
        assert err <= 1e-6
        w2 = T.as_tensor(rng.standard_normal((2, 3)))
        err = check_gradients(lambda: (a[1:3, :3] * w2).sum(), [a])
        assert err <= 1e-6
        c = T.param(rng, (5,))
        d = T.param(rng, (5,))
        w3 = T.as_tensor(rng.standard_normal((5, 2)))
        err = check_gradients(lambda: (T.stack([c, d], axis=1) * w3).sum(), [c, d])
        assert err <= 1e-6

    def test_reshape_transpose_roundtrip(self, rng):
        x = T.param(rng, (2, 3, 4))
        w = T.as_tensor(rng.standard_normal((4, 3, 2)))
        err = check_gradients(
            lambda: (T.transpose(x, (2, 1, 0)) * w).sum(), [x]
        )
        assert err <= 1e-6

    def test_mean_sum_keepdims(self, rng):
        x = T.param(rng, (3, 4))
        w = T.as_tensor(rng.standard_normal((3, 1)))
        err = check_gradients(
            lambda: (T.tmean(x, axis=-1, keepdims=True) * w).sum(), [x]
        )
        assert err <= 1e-6


class TestFdHelpers:
    def test_fd_matches_analytic(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        (g,) = fd_gradients(lambda: float(x.data[0] ** 2), [x])
        assert_allclose(g, [4.0], rtol=1e-8)

    def test_tape_gradients_zero_for_unused(self, rng):
        a = T.param(rng, (2,))
        b = T.param(rng, (2,))
        ga, gb = tape_gradients(lambda: (a * a).sum(), [a, b])
        assert_allclose(ga, 2 * a.data)
        assert_allclose(gb, np.zeros(2))
