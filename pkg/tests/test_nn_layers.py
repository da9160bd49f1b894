"""Finite-difference gradient verification for every layer type."""

import numpy as np
import pytest

from rhomap import nn


def numeric_grad(loss_fn, arr, h=1e-5):
    num = np.zeros_like(arr)
    flat, nflat = arr.ravel(), num.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        lp = loss_fn()
        flat[i] = orig - h
        lm = loss_fn()
        flat[i] = orig
        nflat[i] = (lp - lm) / (2 * h)
    return num


def max_rel_err(analytic, numeric, floor=1e-6):
    return float(np.max(np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + floor)))


def check_layer(layer, xs, rng, train=True, rtol=1e-4):
    """Analytic vs central finite-difference grads for inputs and params."""
    out = layer.forward(*xs, train=train)
    proj = rng.standard_normal(out.shape)
    dxs = layer.backward(proj)
    param_grads = [(p, p.grad.copy()) for p in layer.params()]

    def loss():
        return float(np.sum(layer.forward(*xs, train=train) * proj))

    for x, dx in zip(xs, dxs):
        err = max_rel_err(dx, numeric_grad(loss, x))
        assert err < rtol, f"{layer.kind} input grad err {err}"
    for p, analytic in param_grads:
        err = max_rel_err(analytic, numeric_grad(loss, p.data))
        assert err < rtol, f"{layer.kind} param {p.name} grad err {err}"


N_TRIALS = 20


def rand_shape(rng, min_hw=2):
    n = int(rng.integers(1, 3))
    c = int(rng.integers(1, 4))
    h = int(rng.integers(min_hw // 2, 4)) * 2
    w = int(rng.integers(min_hw // 2, 4)) * 2
    return n, c, h, w


def test_conv2d_3x3_gradients():
    rng = np.random.default_rng(10)
    for _ in range(N_TRIALS):
        n, c, h, w = rand_shape(rng)
        layer = nn.Conv2d(c, int(rng.integers(1, 4)), k=3, rng=rng)
        check_layer(layer, [rng.standard_normal((n, c, h, w))], rng)


def test_conv2d_1x1_gradients():
    rng = np.random.default_rng(11)
    for _ in range(N_TRIALS):
        n, c, h, w = rand_shape(rng)
        layer = nn.Conv2d(c, int(rng.integers(1, 4)), k=1, rng=rng)
        check_layer(layer, [rng.standard_normal((n, c, h, w))], rng)


def test_max_pool_gradients():
    rng = np.random.default_rng(12)
    for _ in range(N_TRIALS):
        n, c, h, w = rand_shape(rng)
        x = rng.standard_normal((n, c, h, w)) * 5.0  # wide spread avoids FD ties
        check_layer(nn.MaxPool2(), [x], rng)


def test_upsample_gradients():
    rng = np.random.default_rng(13)
    for _ in range(N_TRIALS):
        check_layer(nn.NearestUpsample2(), [rng.standard_normal(rand_shape(rng))], rng)


def test_concat_skip_gradients():
    rng = np.random.default_rng(14)
    for _ in range(N_TRIALS):
        n, c, h, w = rand_shape(rng)
        a = rng.standard_normal((n, c, h, w))
        b = rng.standard_normal((n, int(rng.integers(1, 4)), h, w))
        check_layer(nn.ConcatSkip(), [a, b], rng)


def test_add_skip_gradients():
    rng = np.random.default_rng(15)
    for _ in range(N_TRIALS):
        shape = rand_shape(rng)
        check_layer(nn.AddSkip(), [rng.standard_normal(shape), rng.standard_normal(shape)], rng)


def test_fully_connected_gradients():
    rng = np.random.default_rng(16)
    for _ in range(N_TRIALS):
        n = int(rng.integers(1, 6))
        fin, fout = int(rng.integers(1, 8)), int(rng.integers(1, 8))
        layer = nn.FullyConnected(fin, fout, rng=rng)
        check_layer(layer, [rng.standard_normal((n, fin))], rng)


def test_batch_norm_gradients_4d_and_2d():
    rng = np.random.default_rng(17)
    for trial in range(N_TRIALS):
        if trial % 2 == 0:
            n, c, h, w = rand_shape(rng)
            n = max(n, 2)
            x = rng.standard_normal((n, c, h, w)) * 2.0 + rng.standard_normal()
            layer = nn.BatchNorm(c)
        else:
            n, f = int(rng.integers(2, 7)), int(rng.integers(1, 6))
            x = rng.standard_normal((n, f)) * 2.0
            layer = nn.BatchNorm(f)
        layer.gamma.data = rng.uniform(0.5, 1.5, layer.gamma.data.shape)
        layer.beta.data = rng.uniform(-0.5, 0.5, layer.beta.data.shape)
        check_layer(layer, [x], rng, train=True)
        check_layer(layer, [x], rng, train=False)


def test_relu_gradients():
    rng = np.random.default_rng(18)
    for _ in range(N_TRIALS):
        shape = rand_shape(rng)
        x = rng.uniform(0.2, 2.0, shape) * rng.choice([-1.0, 1.0], shape)
        check_layer(nn.ReLU(), [x], rng)


def limiter_safe_inputs(rng, shape, span):
    """Pre-activations clear of the kinks at 0 and span."""
    region = rng.integers(0, 3, size=shape)
    x = np.where(
        region == 0,
        rng.uniform(-40.0, -0.5, shape),
        np.where(
            region == 1,
            rng.uniform(0.5, span - 0.5, shape),
            rng.uniform(span + 0.5, span + 40.0, shape),
        ),
    )
    return x


def test_limiter_gradients():
    rng = np.random.default_rng(19)
    for _ in range(N_TRIALS):
        shape = rand_shape(rng)
        layer = nn.Limiter(10.0, 100.0)
        check_layer(layer, [limiter_safe_inputs(rng, shape, 90.0)], rng)


def test_l1_loss_gradient():
    rng = np.random.default_rng(20)
    for _ in range(N_TRIALS):
        shape = (int(rng.integers(1, 4)), int(rng.integers(1, 6)))
        target = rng.standard_normal(shape)
        pred = target + rng.uniform(0.2, 2.0, shape) * rng.choice([-1.0, 1.0], shape)
        mask = None if rng.random() < 0.5 else (rng.random(shape) < 0.7).astype(float)
        if mask is not None and mask.sum() == 0:
            mask[0, 0] = 1.0
        analytic = nn.l1_loss_grad(pred, target, mask)

        def loss():
            return nn.l1_loss(pred, target, mask)

        err = max_rel_err(analytic, numeric_grad(loss, pred))
        assert err < 1e-4


# --- behavioural contracts ---


def test_limiter_forward_examples():
    layer = nn.Limiter(10.0, 100.0)
    x = np.array([[-5.0, 95.0, 50.0]])
    out = layer.forward(x)
    assert out[0, 0] == 10.0
    assert out[0, 1] == 100.0
    assert out[0, 2] == 60.0


def test_limiter_saturated_gradient_zero():
    layer = nn.Limiter(10.0, 100.0)
    layer.forward(np.array([[-5.0, 120.0, 40.0]]))
    (dx,) = layer.backward(np.ones((1, 3)))
    assert dx[0, 0] == 0.0
    assert dx[0, 1] == 0.0
    assert dx[0, 2] == 1.0


def test_limiter_monotone_and_bounded():
    rng = np.random.default_rng(21)
    layer = nn.Limiter(10.0, 100.0)
    x = np.sort(rng.uniform(-200, 300, size=(1, 1000)))
    out = layer.forward(x)
    assert np.all(np.diff(out[0]) >= 0)
    assert out.min() >= 10.0 and out.max() <= 100.0
    assert np.all(layer.forward(np.array([[-3.0, 0.0]])) == 10.0)


def test_scalar_chain_rule_example():
    # y = w*x with x=3, w=2: L1(y, 0) -> dL/dw = sign(6)*3 = 3
    layer = nn.FullyConnected(1, 1)
    layer.weight.data[:] = 2.0
    layer.bias.data[:] = 0.0
    x = np.array([[3.0]])
    y = layer.forward(x)
    assert y[0, 0] == 6.0
    dy = nn.l1_loss_grad(y, np.zeros_like(y))
    layer.backward(dy)
    assert layer.weight.grad[0, 0] == 3.0


def test_backward_without_forward_raises():
    layer = nn.ReLU()
    with pytest.raises(RuntimeError, match="without a prior forward"):
        layer.backward(np.ones((1, 1)))


def test_random_small_conv_net_gradients():
    # full DAG: conv-bn-relu, pool, conv, upsample, concat, conv1x1, add
    rng = np.random.default_rng(22)
    net = nn.Network()
    i_conv = net.add(nn.Conv2d(2, 3, k=3, rng=rng), inputs=(-1,))
    i_bn = net.add(nn.BatchNorm(3))
    i_relu = net.add(nn.ReLU())
    # pool reads the pre-ReLU maps: ReLU zeros would tie inside pool windows
    # and break the finite-difference probe at the kink
    i_pool = net.add(nn.MaxPool2(), inputs=(i_bn,))
    i_conv2 = net.add(nn.Conv2d(3, 3, k=3, rng=rng))
    i_up = net.add(nn.NearestUpsample2())
    i_cat = net.add(nn.ConcatSkip(), inputs=(i_up, i_relu))
    i_c1 = net.add(nn.Conv2d(6, 3, k=1, rng=rng))
    net.add(nn.AddSkip(), inputs=(i_c1, i_relu))

    x = rng.standard_normal((2, 2, 4, 4)) * 3.0
    out = net.forward(x, train=True)
    proj = rng.standard_normal(out.shape)
    net.backward(proj)
    analytic = [(p, p.grad.copy()) for p in net.params()]

    def loss():
        return float(np.sum(net.forward(x, train=True).data * proj))

    worst = 0.0
    for p, grad in analytic:
        # floor 1e-5: a conv bias feeding straight into BN has an exactly-zero
        # gradient, where the FD probe only produces roundoff noise
        worst = max(worst, max_rel_err(grad, numeric_grad(loss, p.data), floor=1e-5))
    assert worst < 1e-4
