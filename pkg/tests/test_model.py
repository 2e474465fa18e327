import math

import numpy as np
import pytest

from fedecgr.data import Dataset
from fedecgr.errors import DimensionError
from fedecgr.linalg import RngStream
from fedecgr.model import ModelSpec, evaluate, init_params, loss_and_grad

H = 1e-5


def fd_grad(spec, w, X, y):
    """Central finite differences of the mean loss."""
    g = np.empty_like(w)
    for j in range(len(w)):
        e = np.zeros_like(w)
        e[j] = H
        g[j] = (loss_and_grad(spec, w + e, X, y).loss
                - loss_and_grad(spec, w - e, X, y).loss) / (2 * H)
    return g


def random_case(gen, kind):
    d, c = gen.integers(1, 5), gen.integers(2, 5)
    h = gen.integers(1, 6) if kind == "mlp" else 0
    spec = ModelSpec(kind, int(d), int(c), int(h), "tanh")
    n = int(gen.integers(1, 9))
    w = gen.standard_normal(spec.num_params)
    X = gen.standard_normal((n, d))
    y = gen.integers(0, c, n)
    return spec, w, X, y


def test_param_counts():
    assert len(init_params(ModelSpec("logistic", 2, 2), RngStream(0))) == 6
    assert len(init_params(ModelSpec("mlp", 4, 3, 8), RngStream(0))) == 67


def test_init_is_deterministic_and_biases_zero():
    spec = ModelSpec("mlp", 4, 3, 8)
    a, b = init_params(spec, RngStream(3, (2,))), init_params(spec, RngStream(3, (2,)))
    assert a.tobytes() == b.tobytes()
    W1, b1, W2, b2 = spec.unpack(a)
    assert not b1.any() and not b2.any()
    assert np.abs(W1).max() <= 0.5 and np.abs(W2).max() <= 1 / math.sqrt(8)


def test_zero_params_balanced_binary():
    spec = ModelSpec("logistic", 3, 2)
    X = np.array([[1.0, 2, 3], [-1, 0, 2], [0.5, 0.5, 0.5], [2, 2, 2]])
    y = np.array([0, 1, 0, 1])
    lg = loss_and_grad(spec, np.zeros(spec.num_params), X, y)
    assert math.isclose(lg.loss, math.log(2), rel_tol=1e-15)
    # softmax residual p - onehot, averaged: 0.5 - 0.5 per class
    np.testing.assert_allclose(lg.grad[-2:], [0.0, 0.0], atol=1e-15)


@pytest.mark.parametrize("kind", ["logistic", "mlp"])
def test_gradient_matches_finite_differences(kind):
    gen = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        spec, w, X, y = random_case(gen, kind)
        diff = np.abs(loss_and_grad(spec, w, X, y).grad - fd_grad(spec, w, X, y)).max()
        worst = max(worst, diff)
    assert worst <= 1e-6


def test_relu_gradient_away_from_kinks():
    gen = np.random.default_rng(5)
    spec = ModelSpec("mlp", 3, 3, 4, "relu")
    for _ in range(20):
        w = gen.standard_normal(spec.num_params)
        X = gen.standard_normal((5, 3))
        y = gen.integers(0, 3, 5)
        W1, b1, *_ = spec.unpack(w)
        if np.abs(X @ W1 + b1).min() < 1e-3:
            continue
        assert np.abs(loss_and_grad(spec, w, X, y).grad - fd_grad(spec, w, X, y)).max() <= 1e-6


def test_duplicated_batch_unchanged():
    gen = np.random.default_rng(1)
    spec, w, X, y = random_case(gen, "mlp")
    a = loss_and_grad(spec, w, X, y)
    b = loss_and_grad(spec, w, np.vstack([X, X]), np.concatenate([y, y]))
    assert math.isclose(a.loss, b.loss, rel_tol=1e-13)
    np.testing.assert_allclose(a.grad, b.grad, rtol=1e-12, atol=1e-15)


def test_sample_order_invariance_is_exact():
    gen = np.random.default_rng(9)
    spec = ModelSpec("mlp", 6, 4, 7)
    w = gen.standard_normal(spec.num_params)
    X, y = gen.standard_normal((40, 6)), gen.integers(0, 4, 40)
    perm = gen.permutation(40)
    a, b = loss_and_grad(spec, w, X, y), loss_and_grad(spec, w, X[perm], y[perm])
    assert a.loss == b.loss and a.grad.tobytes() == b.grad.tobytes()


def test_dimension_mismatch():
    spec = ModelSpec("logistic", 3, 2)
    with pytest.raises(DimensionError):
        loss_and_grad(spec, np.zeros(5), np.zeros((1, 3)), [0])
    with pytest.raises(DimensionError):
        loss_and_grad(spec, np.zeros(8), np.zeros((1, 4)), [0])


def test_evaluate_perfect_predictor():
    spec = ModelSpec("logistic", 2, 2)
    X = np.vstack([np.full((5, 2), -1.0), np.full((5, 2), 1.0)])
    ds = Dataset(X, [0] * 5 + [1] * 5, 2)
    w = np.concatenate([np.array([[-1.0, 1.0], [-1.0, 1.0]]).ravel(), [0, 0]])
    assert evaluate(spec, w, ds)[0] == 1.0


def test_evaluate_zero_params_balanced():
    spec = ModelSpec("logistic", 2, 2)
    ds = Dataset(np.random.default_rng(0).standard_normal((10, 2)), [0, 1] * 5, 2)
    acc, loss = evaluate(spec, np.zeros(6), ds)
    assert acc == 0.5 and math.isclose(loss, math.log(2))


def test_evaluate_matches_per_sample_recount():
    gen = np.random.default_rng(3)
    spec = ModelSpec("mlp", 3, 4, 5)
    w = gen.standard_normal(spec.num_params)
    ds = Dataset(gen.standard_normal((60, 3)), gen.integers(0, 4, 60), 4)
    correct = 0
    for x, label in zip(ds.X, ds.y):
        # independent forward pass written out per sample
        W1, b1, W2, b2 = spec.unpack(w)
        z = np.tanh(x @ W1 + b1) @ W2 + b2
        best = max(range(4), key=lambda k: (z[k], -k))
        correct += best == label
    assert evaluate(spec, w, ds)[0] == correct / 60
