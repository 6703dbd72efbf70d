import numpy as np
import pytest

from mmsched.neural import Adam, Mlp, ReplayBuffer, adam_step


def numeric_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)


def test_zero_net_outputs_zero():
    net = Mlp([3, 4, 2], rng=0)
    net.flat[:] = 0.0
    assert np.all(net(np.array([1.0, -2.0, 3.0])) == 0.0)


def test_affine_single_layer():
    net = Mlp([1, 1], rng=0)
    net.set_params([np.array([[2.5]]), np.array([-1.0])])
    assert net(np.array([3.0]))[0] == 6.5


def test_relu_blocks_negative_preactivation():
    net = Mlp([1, 1, 1], rng=0)
    net.set_params([np.array([[1.0]]), np.array([-10.0]), np.array([[5.0]]), np.array([0.25])])
    assert net(np.array([2.0]))[0] == 0.25


def test_forward_rejects_wrong_width():
    with pytest.raises(ValueError):
        Mlp([3, 4, 2], rng=0).forward(np.zeros(4))


def test_forward_is_deterministic_and_batched():
    net = Mlp([4, 8, 8, 3], rng=1)
    x = np.random.default_rng(0).standard_normal((5, 4))
    a = net(x)
    assert np.array_equal(a, net(x))
    assert np.allclose(a[2], net(x[2]), rtol=0, atol=1e-14)


@pytest.mark.parametrize("dims", [[3, 5, 5, 6], [6, 7, 7, 1], [2, 4, 1]])
def test_backward_matches_finite_differences(dims):
    rng = np.random.default_rng(42)
    net = Mlp(dims, rng)
    x = rng.standard_normal((4, dims[0]))
    c = rng.standard_normal((4, dims[-1]))

    def loss():
        return float(np.sum(net.forward(x)[0] * c))

    _, cache = net.forward(x)
    grads, gx = net.backward(cache, c)
    for p, g in zip(net.params(), grads):
        assert rel_err(g, numeric_grad(loss, p)) < 1e-4
    assert rel_err(gx, numeric_grad(loss, x)) < 1e-4


def test_backward_zero_and_linearity():
    rng = np.random.default_rng(3)
    net = Mlp([3, 6, 2], rng)
    x = rng.standard_normal((5, 3))
    _, cache = net.forward(x)
    g0, _ = net.backward(cache, np.zeros((5, 2)))
    assert all(np.all(g == 0) for g in g0)
    c = rng.standard_normal((5, 2))
    g1, _ = net.backward(cache, c)
    g3, _ = net.backward(cache, 3.0 * c)
    for a, b in zip(g1, g3):
        assert np.allclose(3.0 * a, b, rtol=1e-13, atol=1e-15)


def test_backward_rejects_stale_cache():
    net = Mlp([2, 3, 1], rng=0)
    other = Mlp([2, 3, 1], rng=0)
    _, cache = net.forward(np.ones(2))
    with pytest.raises(ValueError):
        other.backward(cache, np.ones(1))
    opt = Adam([net.flat])
    grads, _ = net.backward(cache, np.ones(1))
    adam_step(opt, net, grads)
    with pytest.raises(ValueError):
        net.backward(cache, np.ones(1))


def test_adam_zero_gradient_keeps_params():
    p = np.array([1.0, -2.0])
    opt = Adam([p])
    opt.step([p], [np.zeros(2)])
    assert np.array_equal(p, [1.0, -2.0]) and opt.t == 1


def test_adam_first_step_is_lr_times_sign():
    p = np.array([0.0, 0.0])
    opt = Adam([p], lr=3e-4)
    opt.step([p], [np.array([0.7, -12.0])])
    assert np.allclose(p, [-3e-4, 3e-4], rtol=1e-6)


def test_adam_two_step_trace():
    lr, b1, b2, eps, g = 1e-2, 0.9, 0.999, 1e-8, 0.5
    p = np.array([1.0])
    opt = Adam([p], lr, b1, b2, eps)
    expected, m, v = 1.0, 0.0, 0.0
    for t in (1, 2):
        opt.step([p], [np.array([g])])
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        expected -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    assert np.isclose(opt.m[0][0], g * (1 - b1**2))
    assert p[0] == pytest.approx(expected, rel=1e-12)


def test_adam_zero_lr_and_errors():
    p = np.array([1.0, 2.0])
    opt = Adam([p], lr=0.0)
    opt.step([p], [np.array([3.0, -4.0])])
    assert np.array_equal(p, [1.0, 2.0])
    with pytest.raises(FloatingPointError):
        opt.step([p], [np.array([np.nan, 0.0])])
    with pytest.raises(ValueError):
        opt.step([p], [np.zeros(3)])


def test_buffer_ring_semantics():
    buf = ReplayBuffer(1, 1, capacity=5)
    for i in range(6):
        buf.push([i], [i], 0.0, [i + 1], False)
    assert len(buf) == 5
    assert 0.0 not in buf.states[:5, 0]
    assert buf.states[0, 0] == 5.0


def test_buffer_grows_past_initial_block():
    buf = ReplayBuffer(2, 2, capacity=5000)
    for i in range(3000):
        buf.push([i, 0], [0, 0], 1.0, [0, 0], i % 2 == 0)
    assert len(buf) == 3000
    assert buf.states[2999, 0] == 2999 and buf.terminals[2998] == 1.0


def test_buffer_sampling_is_seeded_and_guarded():
    buf = ReplayBuffer(1, 1, capacity=100)
    for i in range(40):
        buf.push([i], [0], 0.0, [0], False)
    a = buf.sample(32, np.random.default_rng(8))
    b = buf.sample(32, np.random.default_rng(8))
    assert np.array_equal(a["states"], b["states"])
    empty = ReplayBuffer(1, 1, capacity=100)
    with pytest.raises(ValueError):
        empty.sample(32, np.random.default_rng(0))


def test_buffer_sampling_is_uniform():
    buf = ReplayBuffer(1, 1, capacity=32)
    for i in range(32):
        buf.push([i], [0], 0.0, [0], False)
    rng = np.random.default_rng(0)
    draws = 100_000 // 32 + 1
    counts = np.zeros(32)
    for _ in range(draws):
        counts += np.bincount(buf.sample(32, rng)["states"][:, 0].astype(int), minlength=32)
    n = counts.sum()
    p = 1 / 32
    assert np.all(np.abs(counts / n - p) < 3 * np.sqrt(p * (1 - p) / n))
