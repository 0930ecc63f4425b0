import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from met2net import diffcore as dc
from met2net.diffcore import Adam, Parameter, ShapeError, Tensor, adam_step
from met2net.diffcore.gradcheck import check_gradients


def naive_conv(x, w, b, stride, padding, dilation, groups):
    """Seven nested loops, no vectorization."""
    B, cin, H, W = x.shape
    cout, cin_g, kh, kw = w.shape
    xp = np.zeros((B, cin, H + 2 * padding, W + 2 * padding))
    xp[:, :, padding:padding + H, padding:padding + W] = x
    ho = (H + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    wo = (W + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    out = np.zeros((B, cout, ho, wo))
    cout_g = cout // groups
    for n in range(B):
        for o in range(cout):
            g = o // cout_g
            for y in range(ho):
                for xx in range(wo):
                    acc = 0.0 if b is None else b[o]
                    for ci in range(cin_g):
                        for i in range(kh):
                            for j in range(kw):
                                acc += w[o, ci, i, j] * xp[n, g * cin_g + ci, y * stride + i * dilation,
                                                           xx * stride + j * dilation]
                    out[n, o, y, xx] = acc
    return out


def leaf(rng, *shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


# conv2d ----------------------------------------------------------------------------------------

def test_conv_sum_of_ones():
    out = dc.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
    assert out.data.tolist() == [[[[9.0]]]]


def test_conv_identity_kernel(rng):
    x = rng.standard_normal((2, 1, 5, 4)).astype(np.float32)
    out = dc.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1), np.float32)), Tensor(np.zeros(1, np.float32)))
    assert np.array_equal(out.data, x)


def test_conv_stride2_matches_loops(rng):
    x = rng.standard_normal((2, 3, 8, 8))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    out = dc.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, padding=1)
    assert out.shape == (2, 4, 4, 4)
    assert np.max(np.abs(out.data - naive_conv(x, w, b, 2, 1, 1, 1))) < 1e-6


@pytest.mark.parametrize("stride,padding,dilation,groups,k", [
    (1, 0, 1, 1, 3), (1, 2, 1, 1, 5), (3, 1, 1, 1, 3), (1, 3, 3, 2, 3), (2, 1, 1, 4, 3), (2, 0, 2, 2, 2),
])
def test_conv_geometries_match_loops(rng, stride, padding, dilation, groups, k):
    x = rng.standard_normal((2, 4, 9, 7))
    w = rng.standard_normal((4, 4 // groups, k, k))
    out = dc.conv2d(Tensor(x), Tensor(w), stride=stride, padding=padding, dilation=dilation, groups=groups)
    ref = naive_conv(x, w, None, stride, padding, dilation, groups)
    assert out.shape == ref.shape
    assert np.max(np.abs(out.data - ref)) < 1e-6


@pytest.mark.parametrize("stride,padding,dilation,groups", [(1, 1, 1, 1), (2, 1, 1, 1), (1, 2, 2, 2),
                                                            (3, 1, 1, 1), (1, 0, 1, 2)])
def test_conv_gradients(rng, stride, padding, dilation, groups):
    x = leaf(rng, 2, 2, 8, 8)
    w = leaf(rng, 2, 2 // groups, 3, 3)
    b = leaf(rng, 2)
    err = check_gradients(lambda: dc.conv2d(x, w, b, stride, padding, dilation, groups), [x, w, b])
    assert err < 1e-4


def test_conv_pointwise_gradients(rng):
    x, w, b = leaf(rng, 2, 3, 4, 4), leaf(rng, 2, 3, 1, 1), leaf(rng, 2)
    assert check_gradients(lambda: dc.conv2d(x, w, b), [x, w, b]) < 1e-4


def test_conv_errors(rng):
    x = Tensor(rng.standard_normal((1, 3, 4, 4)))
    with pytest.raises(ShapeError, match="groups"):
        dc.conv2d(x, Tensor(np.ones((2, 1, 3, 3))), groups=2)
    with pytest.raises(ShapeError, match="channel"):
        dc.conv2d(x, Tensor(np.ones((2, 2, 3, 3))))
    with pytest.raises(ShapeError, match="empty"):
        dc.conv2d(x, Tensor(np.ones((2, 3, 5, 5))))


def test_conv_output_size_formula():
    assert dc.conv_output_size(64, 3, 2, 1, 1) == 32
    assert dc.conv_output_size(16, 7, 1, 9, 3) == 16


# upsample and group_norm -------------------------------------------------------------------------

def test_upsample_blocks_and_backward():
    x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), requires_grad=True)
    up = dc.upsample_nearest(x, 2)
    expect = np.array([[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]], float)
    assert np.array_equal(up.data[0, 0], expect)
    dc.backward(up.sum())
    assert np.array_equal(x.grad, np.full((1, 1, 2, 2), 4.0))
    assert dc.upsample_nearest(x, 1) is x


def test_upsample_gradient(rng):
    x = leaf(rng, 2, 2, 3, 3)
    assert check_gradients(lambda: dc.upsample_nearest(x, 3), [x]) < 1e-4


def test_group_norm_constant_input():
    out = dc.group_norm(Tensor(np.full((2, 4, 3, 3), 5.0)), 2, Parameter(np.ones(4)), Parameter(np.zeros(4)))
    assert np.array_equal(out.data, np.zeros((2, 4, 3, 3)))


def test_group_norm_single_group_standardizes(rng):
    x = rng.standard_normal((3, 4, 5, 5)) * 3 + 2
    out = dc.group_norm(Tensor(x), 1).data
    assert np.all(np.abs(out.reshape(3, -1).mean(axis=1)) < 1e-6)
    assert np.allclose(out.reshape(3, -1).var(axis=1), 1.0, atol=1e-4)


def test_group_norm_gradient(rng):
    x, g, b = leaf(rng, 2, 4, 3, 3), leaf(rng, 4), leaf(rng, 4)
    assert check_gradients(lambda: dc.group_norm(x, 2, g, b), [x, g, b]) < 1e-4


def test_group_norm_errors():
    with pytest.raises(ShapeError, match="groups"):
        dc.group_norm(Tensor(np.ones((1, 3, 2, 2))), 2)
    with pytest.raises(ValueError):
        dc.group_norm(Tensor(np.ones((1, 2, 2, 2))), 1, eps=0)


# elementwise suite ------------------------------------------------------------------------------

UNARY = {
    "silu": dc.silu, "sigmoid": dc.sigmoid, "leaky_relu": lambda t: dc.leaky_relu(t, 0.1), "exp": dc.exp,
    "softmax0": lambda t: dc.softmax(t, 0), "softmax-1": lambda t: dc.softmax(t, -1),
    "reshape": lambda t: dc.reshape(t, (4, 6)), "permute": lambda t: dc.permute(t, (2, 0, 1)),
    "slice": lambda t: dc.slice_axis(t, 2, 1, 3), "getitem": lambda t: t[:, 1],
    "sum": lambda t: dc.sum(t, axis=1), "mean": lambda t: dc.mean(t, axis=(0, 2), keepdims=True),
    "neg": lambda t: -t,
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(rng, name):
    x = leaf(rng, 2, 3, 4)
    assert check_gradients(lambda: UNARY[name](x), [x]) < 1e-4


BINARY = {
    "add": (dc.add, (2, 3, 4), (3, 1)), "sub": (dc.sub, (2, 3, 4), (2, 3, 4)),
    "mul": (dc.mul, (2, 3, 4), (1, 4)), "div": (dc.div, (2, 3, 4), (2, 3, 4)),
    "matmul": (dc.matmul, (2, 3, 4), (4, 5)), "mse": (dc.mse, (2, 3, 4), (2, 3, 4)),
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_gradients(rng, name):
    fn, sa, sb = BINARY[name]
    a, b = leaf(rng, *sa), leaf(rng, *sb)
    if name == "div":
        b.data = np.abs(b.data) + 1.0
    assert check_gradients(lambda: fn(a, b), [a, b]) < 1e-4


def test_concat_stack_gradients(rng):
    a, b = leaf(rng, 2, 3), leaf(rng, 2, 5)
    assert check_gradients(lambda: dc.concat([a, b], axis=1), [a, b]) < 1e-4
    c, d = leaf(rng, 2, 3), leaf(rng, 2, 3)
    assert check_gradients(lambda: dc.stack([c, d], axis=1), [c, d]) < 1e-4


def test_mse_values():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    assert dc.mse(x, x).item() == 0.0
    loss = dc.mse(x, Tensor(np.zeros(2)))
    dc.backward(loss)
    assert np.allclose(x.grad, [1.0, 2.0])


def test_softmax_uniform():
    assert np.allclose(dc.softmax(Tensor(np.zeros(3))).data, [1 / 3] * 3)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12), st.integers(1, 4))
def test_softmax_rows_stochastic(values, rows):
    x = np.tile(np.array(values), (rows, 1)) + np.arange(rows)[:, None]
    s = dc.softmax(Tensor(x), axis=-1).data
    assert np.all(s >= 0)
    assert np.allclose(s.sum(axis=-1), 1.0, atol=1e-6)


def test_shape_errors():
    with pytest.raises(ShapeError):
        dc.add(Tensor(np.ones(3)), Tensor(np.ones(4)))
    with pytest.raises(ShapeError):
        dc.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
    with pytest.raises(ShapeError):
        dc.softmax(Tensor(np.ones(3)), axis=2)
    with pytest.raises(ShapeError):
        dc.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))], axis=1)


# backward and tape -------------------------------------------------------------------------------

def test_backward_linear_sum():
    p = Parameter(np.array([0.5, -1.0, 2.0]))
    dc.backward(p.sum())
    assert p.grad.tolist() == [1.0, 1.0, 1.0]


def test_frozen_parameter_gets_no_gradient(rng):
    p = Parameter(rng.standard_normal(3), trainable=False)
    q = Parameter(rng.standard_normal(3))
    dc.backward((p * q).sum())
    assert np.array_equal(p.grad, np.zeros(3))
    assert np.array_equal(q.grad, p.data)


def test_backward_requires_scalar():
    with pytest.raises(ShapeError):
        dc.backward(Parameter(np.ones(2)) * 2.0)


def test_gradients_accumulate_until_zeroed():
    p = Parameter(np.array([1.0, 2.0]))
    dc.backward((p * p).sum())
    dc.backward((p * p).sum())
    assert p.grad.tolist() == [4.0, 8.0]
    p.zero_grad()
    assert p.grad.tolist() == [0.0, 0.0]


def test_no_grad_builds_no_tape():
    p = Parameter(np.ones(2))
    with dc.no_grad():
        out = p * 3.0
    assert not out.requires_grad and out._parents == ()


def test_two_layer_conv_net_gradient(rng):
    x = Tensor(rng.standard_normal((2, 2, 8, 8)))
    w1, b1 = Parameter(rng.standard_normal((3, 2, 3, 3)) * 0.3), Parameter(rng.standard_normal(3))
    w2 = Parameter(rng.standard_normal((2, 3, 3, 3)) * 0.3)

    def net():
        h = dc.silu(dc.conv2d(x, w1, b1, stride=2, padding=1))
        return dc.conv2d(dc.upsample_nearest(h, 2), w2, padding=1)

    assert check_gradients(net, [w1, b1, w2]) < 1e-4


def test_same_computation_bitwise_repeatable(rng):
    x = rng.standard_normal((2, 4, 8, 8)).astype(np.float32)
    w = rng.standard_normal((4, 1, 7, 7)).astype(np.float32)
    a = dc.conv2d(Tensor(x), Tensor(w), padding=9, dilation=3, groups=4).data
    b = dc.conv2d(Tensor(x), Tensor(w), padding=9, dilation=3, groups=4).data
    assert np.array_equal(a, b)


# Adam ------------------------------------------------------------------------------------------

def test_adam_zero_gradient_is_noop():
    p = Parameter(np.array([0.3, -0.7]), path="p")
    adam_step([p], 0.1, 0.9, 0.999, 1e-8, 1)
    assert p.data.tolist() == [0.3, -0.7]


def test_adam_first_step_is_lr_sign():
    p = Parameter(np.array([0.0]), path="p")
    p.grad[:] = 1.0
    adam_step([p], 0.1, 0.9, 0.999, 1e-8, 1)
    assert abs(p.data[0] + 0.1) < 1e-8
    assert p.grad[0] == 0.0


def test_adam_quadratic_bowl():
    p = Parameter(np.array([1.0]), path="p")
    opt = Adam([p], lr=0.05)
    for _ in range(200):
        dc.backward((p * p).sum())
        opt.step()
    assert abs(p.data[0]) < 1e-2


def test_adam_skips_frozen():
    p = Parameter(np.array([1.0]), trainable=False, path="p")
    p.grad[:] = 5.0
    adam_step([p], 0.1, 0.9, 0.999, 1e-8, 1)
    assert p.data[0] == 1.0


def test_adam_rejects_step_zero():
    with pytest.raises(ValueError):
        adam_step([], 0.1, 0.9, 0.999, 1e-8, 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 2), st.integers(1, 3), st.integers(3, 8), st.integers(3, 8), st.integers(1, 3),
       st.integers(1, 2), st.integers(0, 2), st.integers(1, 2))
def test_conv_property_matches_loops(b, cin, h, w, k, stride, padding, dilation):
    rng = np.random.default_rng(b * 1000 + cin * 100 + h * 10 + w)
    if (h + 2 * padding - dilation * (k - 1) - 1) < 0 or (w + 2 * padding - dilation * (k - 1) - 1) < 0:
        return
    x = rng.standard_normal((b, cin, h, w))
    wt = rng.standard_normal((2, cin, k, k))
    out = dc.conv2d(Tensor(x), Tensor(wt), stride=stride, padding=padding, dilation=dilation)
    assert np.max(np.abs(out.data - naive_conv(x, wt, None, stride, padding, dilation, 1))) < 1e-6
