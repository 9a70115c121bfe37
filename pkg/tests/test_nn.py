import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from robotkit import nn
from robotkit.errors import ArgumentError, ConfigError, ShapeError

from oracles import dense_forward, gradient_check, random_mlp, softmax_hp


def identity_model(n=2):
    return nn.MlpModel((nn.DenseLayer(np.eye(n), np.zeros(n), nn.IDENTITY),))


def test_forward_identity():
    out = nn.forward(identity_model(), np.array([0.3, 0.7], np.float32))
    np.testing.assert_array_equal(out, np.array([0.3, 0.7], np.float32))


def test_forward_relu_clamps_negatives():
    model = nn.MlpModel((
        nn.DenseLayer(np.eye(2), [-1.0, -1.0], nn.RELU),
        nn.DenseLayer(np.eye(2), [0.0, 0.0], nn.IDENTITY),
    ))
    np.testing.assert_allclose(nn.forward(model, [0.5, 2.0]), [0.0, 1.0])


def test_forward_matches_dense_oracle():
    rng = np.random.default_rng(3)
    model = random_mlp(rng, [12, 9, 4])
    for _ in range(10):
        x = rng.uniform(size=12).astype(np.float32)
        np.testing.assert_allclose(nn.forward(model, x), dense_forward(model, x), atol=1e-5)


def test_forward_rejects_wrong_dim():
    with pytest.raises(ShapeError):
        nn.forward(identity_model(), np.zeros(3))


def test_model_layer_chain_checked():
    with pytest.raises(ShapeError):
        nn.MlpModel((nn.DenseLayer(np.zeros((3, 2)), np.zeros(3), nn.RELU),
                     nn.DenseLayer(np.zeros((2, 4)), np.zeros(2), nn.IDENTITY)))
    with pytest.raises(ShapeError):
        nn.MlpModel((nn.DenseLayer(np.zeros((3, 2)), np.zeros(3), nn.RELU),))


def test_softmax_examples():
    np.testing.assert_allclose(nn.softmax([0.0, 0.0]), [0.5, 0.5])
    big = nn.softmax([1000.0, 0.0])
    assert np.all(np.isfinite(big))
    assert big[0] == pytest.approx(1.0) and big[1] == pytest.approx(0.0, abs=1e-30)
    np.testing.assert_allclose(nn.softmax([1.0, 2.0, 3.0]), softmax_hp([1.0, 2.0, 3.0]), atol=1e-6)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 12), elements=st.floats(-1e3, 1e3)))
def test_softmax_normalised(z):
    p = nn.softmax(z)
    assert abs(float(p.astype(np.float64).sum()) - 1.0) <= 1e-6
    assert np.all(p >= 0) and np.all(p <= 1)


def test_cross_entropy_examples():
    assert nn.cross_entropy([1.0, 0.0], 0) == pytest.approx(0.0, abs=1e-11)
    assert nn.cross_entropy([0.5, 0.5], 1) == pytest.approx(math.log(2), abs=1e-9)
    assert nn.cross_entropy([0.1, 0.2, 0.7], 0) == pytest.approx(-math.log(0.1), abs=1e-9)
    with pytest.raises(IndexError):
        nn.cross_entropy([0.5, 0.5], 2)


def test_input_gradient_symmetric_point():
    g = nn.input_gradient(identity_model(), np.zeros(2, np.float32), 0)
    np.testing.assert_allclose(g, [-0.5, 0.5])


def test_input_gradient_zero_first_layer():
    rng = np.random.default_rng(0)
    model = random_mlp(rng, [6, 5, 3])
    zeroed = nn.MlpModel((nn.DenseLayer(np.zeros((5, 6)), model.layers[0].bias, nn.RELU), model.layers[1]))
    np.testing.assert_array_equal(nn.input_gradient(zeroed, rng.uniform(size=6), 1), np.zeros(6))


def test_input_gradient_finite_differences():
    rng = np.random.default_rng(11)
    model = random_mlp(rng, [30, 16, 8, 5])
    x = rng.uniform(size=30)
    g = nn.input_gradient64(model, x, 2)
    worst, checked, _ = gradient_check(model, x, 2, g, rng.choice(30, 20, replace=False))
    assert checked >= 18
    assert worst <= 1e-4


def test_input_gradient_batch_rows_are_per_sample():
    rng = np.random.default_rng(1)
    model = random_mlp(rng, [7, 6, 3])
    x = rng.uniform(size=(4, 7))
    y = np.array([0, 1, 2, 1])
    batch = nn.input_gradient(model, x, y)
    for i in range(4):
        np.testing.assert_allclose(batch[i], nn.input_gradient(model, x[i], y[i]), rtol=1e-6)


def test_grad_objective_margin_value():
    # logits log(p) reproduce p through softmax
    p = np.array([0.7, 0.2, 0.1])
    model = nn.MlpModel((nn.DenseLayer(np.zeros((3, 2)), np.log(p), nn.IDENTITY),))
    obj, grad = nn.grad_objective(model, np.zeros(2), 0, k=3, lam=0.0)
    assert obj == pytest.approx(0.3 - 0.7, abs=1e-6)
    np.testing.assert_array_equal(grad, np.zeros(2))


def _margin_value(model, x, ranked):
    p = softmax_hp(dense_forward(model, x))
    return sum(p[c] for c in ranked[1:]) - p[ranked[0]]


def test_grad_objective_margin_gradient_fd():
    rng = np.random.default_rng(5)
    model = random_mlp(rng, [10, 12, 6])
    x = rng.uniform(size=10)
    k = 4
    ranked = list(np.argsort(-softmax_hp(dense_forward(model, x)), kind="stable")[:k])
    _, grad = nn.grad_objective(model, x, 0, k=k, lam=0.0)
    h = 1e-3
    for i in range(10):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        num = (_margin_value(model, xp, ranked) - _margin_value(model, xm, ranked)) / (2 * h)
        a = float(grad[i])
        if abs(a) < 1e-8:
            assert abs(num) < 1e-6
        else:
            assert abs(a - num) / max(abs(a), abs(num)) <= 1e-4


def test_grad_objective_with_fol_term_matches_metrics():
    from robotkit import metrics

    rng = np.random.default_rng(8)
    model = random_mlp(rng, [10, 12, 6])
    x = rng.uniform(size=10)
    margin, _ = nn.grad_objective(model, x, 1, k=3, lam=0.0)
    for norm in ("l2", "linf"):
        total, _ = nn.grad_objective(model, x, 1, k=3, lam=1.0, norm=norm, epsilon=0.3)
        fol = metrics.fol(model, x, x, 1, 0.3, norm)
        assert total == pytest.approx(margin + fol, abs=1e-6)


def test_grad_objective_fol_gradient_direction():
    # forward-difference HVP is an approximation; check it against central differences of the objective
    rng = np.random.default_rng(9)
    model = random_mlp(rng, [8, 10, 5])
    x = rng.uniform(size=8)
    obj0, grad = nn.grad_objective(model, x, 2, k=3, lam=1.0, norm="l2", epsilon=0.3)
    h = 1e-5
    num = np.array([
        (nn.grad_objective(model, x + h * e, 2, k=3, lam=1.0, norm="l2", epsilon=0.3)[0]
         - nn.grad_objective(model, x - h * e, 2, k=3, lam=1.0, norm="l2", epsilon=0.3)[0]) / (2 * h)
        for e in np.eye(8)
    ])
    cos = float(num @ grad / (np.linalg.norm(num) * np.linalg.norm(grad)))
    assert cos > 0.99


def test_grad_objective_rejects_bad_k():
    with pytest.raises(ConfigError):
        nn.grad_objective(identity_model(), np.zeros(2), 0, k=3, lam=0.0)
    with pytest.raises(ConfigError):
        nn.grad_objective(identity_model(), np.zeros(2), 0, k=1, lam=0.0)


XOR = nn.LabeledDataset(np.array([[0, 0], [0, 1], [1, 0], [1, 1]], np.float32), np.array([0, 1, 1, 0]))


def test_train_xor():
    model = nn.train(nn.init_mlp([2, 8, 2], 7), XOR, nn.TrainConfig(500, 4, 0.5, 7))
    assert nn.accuracy(model, XOR) == 1.0


def test_train_zero_epochs_is_identity():
    model = nn.init_mlp([2, 8, 2], 1)
    assert nn.train(model, XOR, nn.TrainConfig(0, 2, 0.1, 3)).equals(model)


def test_train_deterministic():
    model = nn.init_mlp([2, 8, 2], 1)
    cfg = nn.TrainConfig(20, 2, 0.3, 99)
    assert nn.train(model, XOR, cfg).equals(nn.train(model, XOR, cfg))
    assert not nn.train(model, XOR, cfg).equals(nn.train(model, XOR, nn.TrainConfig(20, 2, 0.3, 98)))


def test_train_decreases_loss_on_separable_set():
    rng = np.random.default_rng(4)
    x = rng.uniform(size=(200, 5)).astype(np.float32)
    y = (x[:, 0] + x[:, 1] > 1.0).astype(int)
    data = nn.LabeledDataset(x, y)
    model = nn.init_mlp([5, 16, 2], 0)
    before = nn.mean_loss(model, data)
    after = nn.mean_loss(nn.train(model, data, nn.TrainConfig(50, 16, 0.1, 0)), data)
    assert after < before


def test_train_does_not_mutate_input_model():
    model = nn.init_mlp([2, 8, 2], 1)
    snapshot = [p.copy() for p in model.parameters()]
    nn.train(model, XOR, nn.TrainConfig(5, 2, 0.3, 0))
    for a, b in zip(snapshot, model.parameters()):
        np.testing.assert_array_equal(a, b)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        nn.TrainConfig(1, 1, 0.0, 0)
    with pytest.raises(ConfigError):
        nn.train(nn.init_mlp([2, 3, 2]), XOR, nn.TrainConfig(1, 10, 0.1, 0))


def test_predict_tie_breaks_low():
    model = nn.MlpModel((nn.DenseLayer(np.zeros((3, 1)), [3.0, 1.0, 3.0], nn.IDENTITY),))
    assert nn.predict(model, [0.5]) == 0


def test_accuracy_hand_count():
    # logits equal the input, so predictions are the argmax of each row
    model = identity_model(3)
    x = np.eye(3, dtype=np.float32)[[0, 1, 2, 0, 1, 2, 0, 1, 2, 0]]
    y = np.array([0, 1, 2, 1, 1, 0, 0, 2, 2, 0])
    assert nn.accuracy(model, nn.LabeledDataset(x, y)) == pytest.approx(7 / 10)


def test_accuracy_memorised_set_is_perfect():
    model = nn.train(nn.init_mlp([2, 8, 2], 7), XOR, nn.TrainConfig(500, 4, 0.5, 7))
    assert nn.accuracy(model, XOR) == 1.0


def test_accuracy_empty_rejected():
    with pytest.raises(ArgumentError):
        nn.accuracy(identity_model(), None)


def test_dataset_range_checked():
    with pytest.raises(ArgumentError):
        nn.LabeledDataset(np.array([[1.5]]), np.array([0]))
