import numpy as np
import pytest

from dualnet import tensor as T
from dualnet.config import ArchitectureConfig, TrainConfig
from dualnet.exceptions import DataError, NonFiniteError, ShapeError
from dualnet.network import Network
from dualnet.tensor import Tape, Tensor
from dualnet.training import (PROB_FLOOR, Adam, History, adam_step, batch_slices, predict, predict_proba,
                              sparse_ce_loss, train)


def test_cross_entropy_value():
    p = Tensor(np.array([[0.7, 0.3], [0.2, 0.8]]), requires_grad=True)
    loss = sparse_ce_loss(p, np.array([0, 1]))
    assert loss.item() == pytest.approx(-(np.log(0.7) + np.log(0.8)) / 2)


def test_cross_entropy_floor_and_gradient():
    p = Tensor(np.array([[1.0, 0.0], [0.5, 0.5]]), requires_grad=True)
    with Tape() as tape:
        loss = sparse_ce_loss(p, np.array([1, 0]))
    assert loss.item() == pytest.approx(-(np.log(PROB_FLOOR) + np.log(0.5)) / 2)
    g = T.backward(loss, tape)[p.id]
    np.testing.assert_allclose(g, [[0, 0], [-1.0, 0]])


def test_cross_entropy_label_errors():
    p = Tensor(np.full((2, 2), 0.5))
    with pytest.raises(DataError):
        sparse_ce_loss(p, np.array([0, 2]))
    with pytest.raises(ShapeError):
        sparse_ce_loss(p, np.array([0]))


def test_adam_matches_hand_computation():
    w = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = Adam({"w": w}, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    g1, g2 = np.array([0.5, -1.0]), np.array([0.1, 0.3])
    opt.step({"w": g1})
    # first step: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps)
    w1 = np.array([1.0, -2.0]) - 0.1 * g1 / (np.abs(g1) + 1e-8)
    np.testing.assert_allclose(w.data, w1, rtol=1e-12)
    np.testing.assert_allclose(w.data, [0.9, -1.9], rtol=1e-6)
    opt.step({"w": g2})
    m = 0.9 * (0.1 * g1) + 0.1 * g2
    v = 0.999 * (0.001 * g1 ** 2) + 0.001 * g2 ** 2
    m_hat, v_hat = m / (1 - 0.9 ** 2), v / (1 - 0.999 ** 2)
    expected = w1 - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8)
    np.testing.assert_allclose(w.data, expected, rtol=1e-12)
    assert opt.t == 2


def test_adam_step_functional_matches_class():
    cfg = TrainConfig(learning_rate=0.01)
    a, b = Tensor(np.ones(3), requires_grad=True), Tensor(np.ones(3), requires_grad=True)
    state = None
    opt = Adam.from_config({"p": b}, cfg)
    for g in (np.array([1.0, 2.0, 3.0]), np.array([-1.0, 0.5, 0.0])):
        state = adam_step({"p": a}, {"p": g}, state, cfg)
        opt.step({"p": g})
    np.testing.assert_array_equal(a.data, b.data)


def test_adam_shape_check():
    w = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        Adam({"w": w}).step({"w": np.ones(2)})


def test_batch_slices():
    sizes = [len(b) for b in batch_slices(10, 4)]
    assert sizes == [4, 4, 2]
    assert [len(b) for b in batch_slices(9, 4)] == [4, 5]  # a lone trailing row joins the last batch
    assert [len(b) for b in batch_slices(3, 8)] == [3]
    idx = np.concatenate(batch_slices(23, 5, np.random.default_rng(0)))
    assert sorted(idx) == list(range(23))


def test_training_reduces_loss(small_blobs):
    model = Network(ArchitectureConfig.tiny(n_features=12))
    hist = train(model, small_blobs.X, small_blobs.y, TrainConfig(epochs=8, batch_size=16))
    assert hist.loss[-1] < hist.loss[0]
    assert abs(hist.loss[0] - np.log(2)) < 0.2


def test_same_seed_identical_history(small_blobs):
    cfg, tc = ArchitectureConfig.tiny(n_features=12), TrainConfig(epochs=3, batch_size=16, seed=4)
    h1 = train(Network(cfg), small_blobs.X, small_blobs.y, tc)
    h2 = train(Network(cfg), small_blobs.X, small_blobs.y, tc)
    assert h1.to_dict() == h2.to_dict()
    h3 = train(Network(cfg), small_blobs.X, small_blobs.y, TrainConfig(epochs=3, batch_size=16, seed=5))
    assert h3.to_dict() != h1.to_dict()


def test_predictions_invariant_to_batch_partition(small_blobs):
    model = Network(ArchitectureConfig.tiny(n_features=12))
    train(model, small_blobs.X, small_blobs.y, TrainConfig(epochs=2, batch_size=16))
    full = predict_proba(model, small_blobs.X, batch_size=len(small_blobs.X))
    for bs in (1, 7, 50):
        np.testing.assert_allclose(predict_proba(model, small_blobs.X, batch_size=bs), full, rtol=0, atol=1e-12)


def test_single_precision_training(small_blobs):
    with T.precision("single"):
        model = Network(ArchitectureConfig.tiny(n_features=12))
    hist = train(model, small_blobs.X, small_blobs.y, TrainConfig(epochs=2, batch_size=16, precision="single"))
    assert all(p.dtype == np.float32 for p in model.parameters())
    assert np.isfinite(hist.loss).all()
    assert predict_proba(model, small_blobs.X).dtype == np.float32


def test_check_finite_catches_nan_inputs(small_blobs):
    model = Network(ArchitectureConfig.tiny(n_features=12))
    X = small_blobs.X.copy()
    X[0, 0] = np.nan
    with pytest.raises(NonFiniteError):
        train(model, X, small_blobs.y, TrainConfig(epochs=1, batch_size=16, check_finite=True))


def test_input_validation(small_blobs):
    model = Network(ArchitectureConfig.tiny(n_features=12))
    with pytest.raises(ShapeError, match="12"):
        train(model, small_blobs.X[:, :10], small_blobs.y, TrainConfig(epochs=1))
    with pytest.raises(DataError):
        train(model, small_blobs.X, small_blobs.y + 5, TrainConfig(epochs=1))
    with pytest.raises(ShapeError):
        train(model, small_blobs.X, small_blobs.y[:-1], TrainConfig(epochs=1))


def test_predict_returns_argmax(small_blobs):
    model = Network(ArchitectureConfig.tiny(n_features=12))
    cls, probs = predict(model, small_blobs.X[:10])
    np.testing.assert_array_equal(cls, probs.argmax(axis=1))
    assert predict_proba(model, small_blobs.X[:0]).shape == (0, 2)


def test_history_round_trip():
    h = History([0.5, 0.25], [0.6, 0.9])
    assert History.from_dict(h.to_dict()) == h
