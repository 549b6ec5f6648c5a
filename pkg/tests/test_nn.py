import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shorttopics import nn
from shorttopics.errors import DegenerateBatch, InvalidProbability, ShapeMismatch


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
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def test_linear_identity():
    x = np.array([[1.0, -2.0, 3.0]])
    assert np.array_equal(nn.linear_forward(np.eye(3), np.zeros(3), x), x)


def test_linear_scalar_chain_rule():
    W = np.array([[2.0]])
    assert nn.linear_forward(W, None, np.array([3.0])).tolist() == [6.0]
    _, gw, gb = nn.linear_backward(W, None, np.array([3.0]), np.array([1.0]))
    assert gw.tolist() == [[3.0]] and gb is None


def test_linear_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        nn.linear_forward(np.ones((2, 3)), None, np.ones((1, 4)))


def test_linear_gradients_match_finite_differences(rng):
    layer = nn.Linear(3, 4, rng=rng)
    layer.bias[...] = rng.normal(size=4)
    x = rng.normal(size=(5, 3))
    up = rng.normal(size=(5, 4))

    def f():
        return float(np.sum(layer.forward(x) * up))

    layer.zero_grad()
    layer.forward(x)
    gx = layer.backward(up)
    assert rel_err(gx, numeric_grad(f, x)) < 1e-6
    assert rel_err(layer.grads["weight"], numeric_grad(f, layer.weight)) < 1e-6
    assert rel_err(layer.grads["bias"], numeric_grad(f, layer.bias)) < 1e-6


def test_softplus_values_and_gradient():
    assert nn.softplus(np.array(0.0)) == pytest.approx(np.log(2), abs=1e-15)
    assert abs(nn.softplus(np.array(50.0)) - 50.0) < 1e-12
    assert nn.softplus_backward(np.array(0.0), np.array(1.0)) == 0.5
    assert np.all(np.isfinite(nn.softplus(np.array([-1e4, 1e4]))))


def test_softplus_backward_matches_fd(rng):
    x = rng.normal(size=(3, 4))
    up = rng.normal(size=(3, 4))
    g = nn.softplus_backward(x, up)
    assert rel_err(g, numeric_grad(lambda: float(np.sum(nn.softplus(x) * up)), x)) < 1e-6


def test_softmax_examples():
    assert np.allclose(nn.softmax(np.array([0.0, 0.0])), [0.5, 0.5])
    assert np.allclose(nn.softmax(np.log([1.0, 2.0, 3.0])), [1 / 6, 2 / 6, 3 / 6], atol=1e-15)
    x = np.array([0.3, -1.2, 2.0])
    assert np.allclose(nn.softmax(x + 1000.0), nn.softmax(x), atol=1e-15)


@given(arrays(np.float64, (2, 5), elements=st.floats(-50, 50)))
def test_softmax_is_simplex(x):
    y = nn.softmax(x)
    assert np.all(y >= 0) and np.allclose(y.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(nn.log_softmax(x), np.log(np.maximum(y, 1e-300)), atol=1e-9)


def test_softmax_backward_matches_fd(rng):
    x = rng.normal(size=(3, 4))
    up = rng.normal(size=(3, 4))
    g = nn.softmax_backward(nn.softmax(x), up)
    assert rel_err(g, numeric_grad(lambda: float(np.sum(nn.softmax(x) * up)), x)) < 1e-6


def test_batchnorm_eval_identity():
    bn = nn.BatchNorm(3, epsilon=1e-300).eval()
    x = np.array([[1.0, -2.0, 0.5]])
    assert np.allclose(bn.forward(x), x, atol=1e-12)


def test_batchnorm_train_standardizes(rng):
    bn = nn.BatchNorm(4, epsilon=1e-12)
    y = bn.forward(rng.normal(3.0, 2.0, size=(50, 4)))
    assert np.allclose(y.mean(axis=0), 0, atol=1e-9)
    assert np.allclose(y.var(axis=0), 1, atol=1e-9)


def test_batchnorm_running_stats(rng):
    bn = nn.BatchNorm(2, momentum=1.0)
    x = rng.normal(size=(6, 2))
    bn.forward(x)
    assert np.allclose(bn.running_mean, x.mean(axis=0))
    assert np.allclose(bn.running_var, x.var(axis=0, ddof=1))


def test_batchnorm_degenerate_batch():
    with pytest.raises(DegenerateBatch):
        nn.BatchNorm(2).forward(np.ones((1, 2)))
    nn.BatchNorm(2).eval().forward(np.ones((1, 2)))


@pytest.mark.parametrize("affine", [True, False])
@pytest.mark.parametrize("training", [True, False])
def test_batchnorm_backward_matches_fd(rng, affine, training):
    bn = nn.BatchNorm(3, learn_gain=affine, learn_shift=affine)
    bn.gain[...] = rng.uniform(0.5, 2.0, size=3)
    bn.running_mean[...] = rng.normal(size=3)
    bn.running_var[...] = rng.uniform(0.5, 2, size=3)
    bn.train(training)
    x = rng.normal(size=(6, 3))
    up = rng.normal(size=(6, 3))

    def f():
        saved = bn.running_mean.copy(), bn.running_var.copy()
        out = float(np.sum(bn.forward(x) * up))
        bn.running_mean[...], bn.running_var[...] = saved
        return out

    bn.zero_grad()
    f()
    gx = bn.backward(up)
    assert rel_err(gx, numeric_grad(f, x)) < 1e-5
    if affine:
        assert rel_err(bn.grads["gain"], numeric_grad(f, bn.gain)) < 1e-5
        assert rel_err(bn.grads["shift"], numeric_grad(f, bn.shift)) < 1e-5
    else:
        assert bn.parameters() == {}


def test_dropout_modes(rng):
    x = rng.normal(size=(4, 4))
    assert nn.dropout(x, 0.0, True, rng)[0] is x
    assert nn.dropout(x, 0.7, False, rng)[0] is x
    y, mask = nn.dropout(np.ones(100_000), 0.5, True, rng)
    assert abs(y.mean() - 1.0) < 0.01
    assert set(np.unique(mask)) <= {0.0, 2.0}
    with pytest.raises(InvalidProbability):
        nn.dropout(x, 1.0, True, rng)
    with pytest.raises(InvalidProbability):
        nn.Dropout(-0.1)


def test_dropout_layer_backward_uses_mask(rng):
    layer = nn.Dropout(0.5, rng=rng)
    y = layer.forward(np.ones((3, 3)))
    assert np.array_equal(layer.backward(np.ones((3, 3))), y)


def test_adam_first_step():
    p = np.array([0.0])
    state = nn.AdamState([p], lr=0.001)
    nn.adam_step(state, [p], [np.array([1.0])])
    assert p[0] == pytest.approx(-0.001 / (1 + 1e-8), abs=1e-15)


def test_adam_zero_gradient_keeps_params():
    p = np.array([1.5, -2.0])
    state = nn.AdamState([p])
    for _ in range(10):
        nn.adam_step(state, [p], [np.zeros(2)])
    assert p.tolist() == [1.5, -2.0]


def test_adam_minimizes_quadratic():
    x = np.array([1.0])
    state = nn.AdamState([x], lr=0.01)
    for _ in range(2000):
        nn.adam_step(state, [x], [2 * x])
    assert abs(x[0]) < 1e-3


def test_adam_shape_checks():
    p = np.zeros(2)
    state = nn.AdamState([p])
    with pytest.raises(ShapeMismatch):
        nn.adam_step(state, [p], [np.zeros(3)])
    with pytest.raises(ShapeMismatch):
        nn.adam_step(state, [p, p], [np.zeros(2)])
