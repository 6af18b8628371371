import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import legan.autodiff as ad
from legan.autodiff import ConvConfig, Tensor, finite_diff_check
from reference import naive_conv2d, naive_transposed_conv2d


def rand(shape, seed=0):
    return np.random.default_rng(seed).normal(size=shape)


# --- conv2d ---------------------------------------------------------------


def test_conv_all_ones_kernel_sums_patch():
    x = Tensor(np.ones((1, 1, 3, 3)))
    k = Tensor(np.ones((1, 1, 2, 2)))
    out = ad.conv2d(x, k, Tensor(np.zeros(1)), ConvConfig(1, 0, 2, 2))
    assert out.shape == (1, 1, 2, 2)
    np.testing.assert_array_equal(out.data, 4.0)


def test_conv_table_layer_shape():
    x = Tensor(rand((1, 3, 32, 32)))
    k = Tensor(rand((64, 3, 4, 4)))
    out = ad.conv2d(x, k, Tensor(np.zeros(64)), ConvConfig(2, 1, 4, 4))
    assert out.shape == (1, 64, 16, 16)


def test_discriminator_shape_chain():
    # 3x32x32 -> 64x16x16 -> 128x8x8 -> 256x5x5 -> 1x2x2
    layers = [
        (64, 3, 4, 2, 1),
        (128, 64, 4, 2, 1),
        (256, 128, 2, 2, 1),
        (1, 256, 4, 2, 1),
    ]
    x = Tensor(rand((2, 3, 32, 32)))
    expected = [(2, 64, 16, 16), (2, 128, 8, 8), (2, 256, 5, 5), (2, 1, 2, 2)]
    for (f, c, k, s, p), shape in zip(layers, expected):
        x = ad.conv2d(x, Tensor(rand((f, c, k, k), seed=f)), Tensor(np.zeros(f)), ConvConfig(s, p, k, k))
        assert x.shape == shape


def test_generator_shape_chain():
    # 100x1x1 -> 256x4x4 -> 128x8x8 -> 64x16x16 -> 3x32x32
    layers = [
        (100, 256, 4, 1, 0),
        (256, 128, 4, 2, 1),
        (128, 64, 4, 2, 1),
        (64, 3, 4, 2, 1),
    ]
    x = Tensor(rand((2, 100, 1, 1)))
    expected = [(2, 256, 4, 4), (2, 128, 8, 8), (2, 64, 16, 16), (2, 3, 32, 32)]
    for (c, f, k, s, cr), shape in zip(layers, expected):
        x = ad.transposed_conv2d(
            x, Tensor(rand((c, f, k, k), seed=c)), Tensor(np.zeros(f)), ConvConfig(s, cr, k, k)
        )
        assert x.shape == shape


def test_conv_channel_mismatch_names_dimension():
    x = Tensor(rand((1, 3, 8, 8)))
    k = Tensor(rand((4, 5, 3, 3)))
    with pytest.raises(ValueError, match="3 channels but kernel expects 5"):
        ad.conv2d(x, k, Tensor(np.zeros(4)), ConvConfig(1, 0, 3, 3))


def test_conv_output_too_small_rejected():
    x = Tensor(rand((1, 1, 2, 2)))
    k = Tensor(rand((1, 1, 4, 4)))
    with pytest.raises(ValueError, match="output size"):
        ad.conv2d(x, k, Tensor(np.zeros(1)), ConvConfig(1, 0, 4, 4))


def test_conv_matches_naive_on_1x2x5x5():
    rng = np.random.default_rng(19)
    x = rng.normal(size=(1, 2, 5, 5))
    kernel = rng.normal(size=(3, 2, 3, 3))
    bias = rng.normal(size=(3,))
    for stride, pad in ((1, 0), (1, 1), (2, 1)):
        got = ad.conv2d(Tensor(x), Tensor(kernel), Tensor(bias), ConvConfig(stride, pad, 3, 3))
        want = naive_conv2d(x, kernel, bias, stride, pad)
        assert np.abs(got.data - want).max() < 1e-10


def test_conv_matches_naive_reference():
    rng = np.random.default_rng(7)
    for _ in range(10):
        n, c, f = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
        k = rng.integers(1, 4)
        s = rng.integers(1, 3)
        p = rng.integers(0, 2)
        h = rng.integers(k, k + 5)
        x = rng.normal(size=(n, c, h, h))
        kernel = rng.normal(size=(f, c, k, k))
        bias = rng.normal(size=(f,))
        got = ad.conv2d(Tensor(x), Tensor(kernel), Tensor(bias), ConvConfig(int(s), int(p), int(k), int(k)))
        want = naive_conv2d(x, kernel, bias, int(s), int(p))
        assert np.abs(got.data - want).max() < 1e-10


# --- transposed conv ------------------------------------------------------


def test_transposed_conv_broadcasts_single_cell():
    v = 2.5
    x = Tensor(np.full((1, 1, 1, 1), v))
    k = Tensor(np.ones((1, 1, 4, 4)))
    out = ad.transposed_conv2d(x, k, Tensor(np.zeros(1)), ConvConfig(1, 0, 4, 4))
    assert out.shape == (1, 1, 4, 4)
    np.testing.assert_allclose(out.data, v)


def test_transposed_conv_matches_naive_reference():
    rng = np.random.default_rng(11)
    for _ in range(10):
        n, c, f = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
        k = int(rng.integers(2, 5))
        s = int(rng.integers(1, 3))
        cr = int(rng.integers(0, min(2, (k - 1) // 2 + 1)))
        h = int(rng.integers(1, 5))
        x = rng.normal(size=(n, c, h, h))
        kernel = rng.normal(size=(c, f, k, k))
        bias = rng.normal(size=(f,))
        got = ad.transposed_conv2d(Tensor(x), Tensor(kernel), Tensor(bias), ConvConfig(s, cr, k, k))
        want = naive_transposed_conv2d(x, kernel, bias, s, cr)
        assert got.data.shape == want.shape
        assert np.abs(got.data - want).max() < 1e-10


def test_transposed_conv_invalid_crop_rejected():
    x = Tensor(rand((1, 1, 1, 1)))
    k = Tensor(rand((1, 1, 2, 2)))
    with pytest.raises(ValueError, match="output size"):
        ad.transposed_conv2d(x, k, Tensor(np.zeros(1)), ConvConfig(1, 1, 2, 2))


def test_adjointness_of_conv_and_transpose():
    rng = np.random.default_rng(5)
    for _ in range(10):
        c, f = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        s = int(rng.integers(1, 3))
        p = int(rng.integers(0, 2))
        ho = int(rng.integers(1, 4))
        h = (ho - 1) * s + k - 2 * p  # conv consumes the input exactly
        if h < 1:
            continue
        x = rng.normal(size=(2, c, h, h))
        kernel = rng.normal(size=(f, c, k, k))
        y = rng.normal(size=(2, f, ho, ho))
        cfg = ConvConfig(s, p, k, k)
        lhs = float(
            (ad.conv2d(Tensor(x), Tensor(kernel), Tensor(np.zeros(f)), cfg).data * y).sum()
        )
        rhs = float(
            (ad.transposed_conv2d(Tensor(y), Tensor(kernel), Tensor(np.zeros(c)), cfg).data * x).sum()
        )
        assert abs(lhs - rhs) < 1e-9


# --- batch norm -----------------------------------------------------------


def test_batch_norm_constant_input_is_zero():
    x = Tensor(np.full((2, 3, 2, 2), 4.2))
    out = ad.batch_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(3)), eps=1e-5)
    np.testing.assert_array_equal(out.data, 0.0)


def test_batch_norm_two_point_channel():
    x = Tensor(np.array([-1.0, 1.0]).reshape(2, 1, 1, 1))
    out = ad.batch_norm(x, Tensor(np.ones(1)), Tensor(np.zeros(1)), eps=1e-5)
    np.testing.assert_allclose(out.data.ravel(), [-1.0, 1.0], atol=1e-4)


def test_batch_norm_output_moments():
    x = Tensor(rand((4, 3, 5, 5), seed=3) * 2.0 + 1.0)
    out = ad.batch_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(3)), eps=1e-5)
    np.testing.assert_allclose(out.data.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.data.var(axis=(0, 2, 3)), 1.0, atol=1e-4)


def test_batch_norm_single_value_channel_rejected():
    x = Tensor(rand((1, 3, 1, 1)))
    with pytest.raises(ValueError, match="single value"):
        ad.batch_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(3)))


# --- activations ----------------------------------------------------------


def test_leaky_relu_values():
    x = Tensor(np.array([1.0, -1.0, 0.0]))
    out = ad.leaky_relu(x, 0.2)
    np.testing.assert_allclose(out.data, [1.0, -0.2, 0.0])


def test_leaky_relu_gradient_at_zero_uses_nonnegative_branch():
    x = Tensor(np.array([0.0]), requires_grad=True)
    ad.reduce_sum(ad.leaky_relu(x, 0.2)).backward()
    np.testing.assert_array_equal(x.grad, [1.0])


def test_leaky_relu_slope_validation():
    with pytest.raises(ValueError):
        ad.leaky_relu(Tensor([1.0]), slope=1.0)


def test_sigmoid_at_zero():
    assert ad.sigmoid(Tensor([0.0])).data[0] == 0.5


def test_sigmoid_saturation_no_overflow():
    out = ad.sigmoid(Tensor([100.0, -100.0, 500.0, -500.0]))
    assert abs(out.data[0] - 1.0) < 1e-12
    assert np.all(np.isfinite(out.data))


@settings(max_examples=50)
@given(st.floats(min_value=-50, max_value=50))
def test_sigmoid_symmetry(x):
    left = ad.sigmoid(Tensor([-x])).data[0]
    right = 1.0 - ad.sigmoid(Tensor([x])).data[0]
    assert abs(left - right) < 1e-12


def test_log_sigmoid_stable_and_consistent():
    x = np.array([-500.0, -5.0, 0.0, 5.0, 500.0])
    out = ad.log_sigmoid(Tensor(x)).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out[1:4], np.log(1.0 / (1.0 + np.exp(-x[1:4]))), rtol=1e-12)


# --- reductions -----------------------------------------------------------


def test_reduce_mean_values():
    assert ad.reduce_mean(Tensor([1.0, 2.0, 3.0])).item() == 2.0
    const = ad.reduce_mean(Tensor(np.full((3, 3), 7.0)))
    assert const.item() == 7.0


def test_reduce_mean_gradient_distributes():
    x = Tensor(rand((5,)), requires_grad=True)
    ad.reduce_mean(x).backward()
    np.testing.assert_allclose(x.grad, 0.2)


def test_reduce_mean_axis_validation():
    x = Tensor(rand((2, 3)))
    with pytest.raises(ValueError):
        ad.reduce_mean(x, axes=())
    with pytest.raises(ValueError):
        ad.reduce_mean(x, axes=(0, 0))
    with pytest.raises(ValueError):
        ad.reduce_mean(x, axes=(5,))


# --- backward mechanics ---------------------------------------------------


def test_backward_sum_of_sigmoid_at_zero():
    x = Tensor(np.zeros(6), requires_grad=True)
    ad.reduce_sum(ad.sigmoid(x)).backward()
    np.testing.assert_allclose(x.grad, 0.25)


def test_backward_product_rule():
    a = Tensor([3.0], requires_grad=True)
    b = Tensor([4.0], requires_grad=True)
    ad.reduce_mean(a * b).backward()
    np.testing.assert_allclose(a.grad, [4.0])
    np.testing.assert_allclose(b.grad, [3.0])


def test_backward_rejects_non_scalar():
    x = Tensor(rand((3,)), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        (x * x).backward()


def test_untouched_parameter_keeps_zero_gradient():
    used = Tensor([2.0], requires_grad=True)
    unused = Tensor([5.0], requires_grad=True)
    ad.zero_grads([used, unused])
    ad.reduce_sum(used * used).backward()
    np.testing.assert_allclose(used.grad, [4.0])
    np.testing.assert_array_equal(unused.grad, [0.0])


def test_shared_node_gradient_accumulates_once_per_path():
    x = Tensor([3.0], requires_grad=True)
    y = x * x  # dy/dx = 2x, reached via two parent slots of mul
    ad.reduce_sum(y + y).backward()
    np.testing.assert_allclose(x.grad, [12.0])


def test_no_grad_blocks_recording():
    x = Tensor([1.0], requires_grad=True)
    with ad.no_grad():
        y = ad.sigmoid(x)
    assert not y.requires_grad


def test_forward_determinism_bitwise():
    x = rand((2, 3, 9, 9), seed=13)
    k = rand((4, 3, 3, 3), seed=14)
    cfg = ConvConfig(2, 1, 3, 3)
    a = ad.conv2d(Tensor(x), Tensor(k), Tensor(np.zeros(4)), cfg).data
    b = ad.conv2d(Tensor(x), Tensor(k), Tensor(np.zeros(4)), cfg).data
    assert np.array_equal(a, b)


# --- finite-difference checking -------------------------------------------


def test_finite_diff_sigmoid_tight():
    report = finite_diff_check(ad.sigmoid, [(4, 4)], tolerance=1e-6, seed=1)
    assert report.passed, report


def test_finite_diff_conv2d():
    cfg = ConvConfig(2, 1, 3, 3)
    report = finite_diff_check(
        lambda x, k, b: ad.conv2d(x, k, b, cfg),
        [(2, 3, 5, 5), (4, 3, 3, 3), (4,)],
        tolerance=1e-4,
        seed=1,
        name="conv2d",
    )
    assert report.passed, report


def test_finite_diff_composite_layer():
    cfg = ConvConfig(2, 1, 3, 3)

    def layer(x, k, b, g, be):
        return ad.leaky_relu(ad.batch_norm(ad.conv2d(x, k, b, cfg), g, be), 0.2)

    report = finite_diff_check(
        layer, [(2, 3, 5, 5), (4, 3, 3, 3), (4,), (4,), (4,)], tolerance=1e-4, seed=2, name="layer"
    )
    assert report.passed, report


def test_gradcheck_suite_passes_on_five_seeds():
    from legan.gradcheck import run_all

    for seed in range(5):
        failed = [r.name for r in run_all(tolerance=1e-4, seed=seed) if not r.passed]
        assert not failed, f"seed {seed}: {failed}"


def test_finite_diff_catches_corrupted_gradient():
    from legan.autodiff import _make

    def bad_sigmoid(x):
        inner = ad.sigmoid(x)

        def backward(g):
            # rule deliberately scaled by 2
            ad._accumulate(x, 2.0 * g * inner.data * (1.0 - inner.data))

        return _make(inner.data, (x,), backward)

    report = finite_diff_check(bad_sigmoid, [(4, 4)], tolerance=1e-4, seed=1, name="bad")
    assert not report.passed
