import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import rel_err
from magpann.pnn import PNN, inverse_softplus, sigmoid, softplus

weights = st.floats(-3.0, 3.0, allow_nan=False)


def random_net(rng, sizes=(4, 5, 3, 1)):
    layers = [(rng.normal(size=(o, i)), rng.normal(size=o)) for i, o in zip(sizes[:-1], sizes[1:])]
    return PNN(sizes, layers)


def test_softplus_stable_and_inverse():
    z = np.array([-800.0, -30.0, 0.0, 1e-3, 30.0, 800.0])
    y = softplus(z)
    assert np.all(np.isfinite(y)) and np.all(y >= 0)
    assert y[-1] == 800.0 and y[2] == pytest.approx(np.log(2.0))
    x = np.array([1e-6, 0.1, 1.0, 20.0])
    np.testing.assert_allclose(softplus(inverse_softplus(x)), x, rtol=1e-12)
    np.testing.assert_allclose(sigmoid(z[1:-1]), 1 / (1 + np.exp(-z[1:-1])), rtol=1e-14)


def test_complex_softplus_matches_derivative():
    z = np.linspace(-5, 5, 11)
    h = 1e-30
    np.testing.assert_allclose(softplus(z + 1j * h).imag / h, sigmoid(z), rtol=1e-14)


def test_zero_network():
    net = PNN((3, 4, 1))
    net.layers[-1] = (np.full((1, 4), -np.inf), np.array([-np.inf]))
    x = np.random.default_rng(0).normal(size=(5, 3))
    y, g = net.value_and_grad(x)
    np.testing.assert_array_equal(y, 0.0)
    np.testing.assert_array_equal(g, 0.0)


def test_single_neuron():
    w, b, theta = np.array([[0.7, -0.2]]), np.array([0.1]), np.array([[0.3]])
    net = PNN((2, 1, 1), [(w, b), (theta, np.array([-50.0]))])
    x = np.array([[0.4, 2.0]])
    expected = softplus(x @ w.T + b)[0, 0] * softplus(0.3) + softplus(-50.0)
    assert net.value(x)[0] == pytest.approx(expected, rel=1e-14)


@given(arrays(np.float64, 60, elements=weights), arrays(np.float64, (6, 4), elements=st.floats(-50, 50)))
def test_output_non_negative(theta, x):
    net = PNN((4, 5, 3, 1))
    net.set_flat(np.resize(theta, net.n_params))
    assert np.all(net.value(x) >= 0.0)


def test_flat_roundtrip_and_shapes(rng):
    net = random_net(rng)
    assert net.n_params == 4 * 5 + 5 + 5 * 3 + 3 + 3 + 1
    theta = rng.normal(size=net.n_params)
    net.set_flat(theta)
    np.testing.assert_array_equal(net.get_flat(), theta)
    assert PNN.from_dict(net.to_dict()).get_flat().tolist() == theta.tolist()
    with pytest.raises(ValueError):
        net.set_flat(theta[:-1])
    with pytest.raises(ValueError):
        PNN((3, 2))


def test_default_sizes_total_276():
    assert PNN((5, 6, 1)).n_params + PNN((10, 10, 10, 1)).n_params + 2 == 276


def test_input_gradient_vs_finite_differences(rng):
    net = random_net(rng)
    x = rng.normal(size=(6, 4))
    _, g = net.value_and_grad(x)
    h = 1e-6
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        fd = (net.value(x + e) - net.value(x - e)) / (2 * h)
        assert rel_err(g[:, k], fd) < 1e-6


def test_hvp_vs_complex_step(rng):
    net = random_net(rng)
    x = rng.normal(size=(6, 4))
    u = rng.normal(size=(6, 4))
    h = 1e-30
    _, g = net.value_and_grad(x + 1j * h * u)
    assert rel_err(net.hvp(x, u), g.imag / h) < 1e-12


def test_hessian_is_symmetric(rng):
    net = random_net(rng)
    x = rng.normal(size=(1, 4))
    Hm = np.stack([net.hvp(x, np.eye(4)[k][None])[0] for k in range(4)])
    np.testing.assert_allclose(Hm, Hm.T, atol=1e-13 * np.abs(Hm).max())


def test_directional_param_grad_vs_finite_differences(rng):
    net = random_net(rng)
    x = rng.normal(size=(6, 4))
    u = rng.normal(size=(6, 4))
    theta = net.get_flat()
    g = net.directional_param_grad(x, u)

    def f(t):
        net.set_flat(t)
        return float(np.sum(net.value_and_grad(x)[1] * u))

    h = 1e-6
    fd = np.array([(f(theta + h * e) - f(theta - h * e)) / (2 * h) for e in np.eye(theta.size)])
    net.set_flat(theta)
    assert rel_err(g, fd) < 1e-6


def test_value_param_grad_vs_finite_differences(rng):
    net = random_net(rng)
    x = rng.normal(size=(6, 4))
    theta = net.get_flat()
    g = net.value_param_grad(x)

    def f(t):
        net.set_flat(t)
        return float(np.sum(net.value(x)))

    h = 1e-6
    fd = np.array([(f(theta + h * e) - f(theta - h * e)) / (2 * h) for e in np.eye(theta.size)])
    net.set_flat(theta)
    assert rel_err(g, fd) < 1e-6


def test_initialize_is_seeded():
    a = PNN.initialize((10, 10, 10, 1), np.random.default_rng(3))
    b = PNN.initialize((10, 10, 10, 1), np.random.default_rng(3))
    np.testing.assert_array_equal(a.get_flat(), b.get_flat())
    w, b0 = a.output_layer()
    assert np.all(w > 0) and b0 > 0
