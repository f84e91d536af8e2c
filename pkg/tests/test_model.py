from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import sigmoid
from patchclust.encoding import CharacterVector
from patchclust.errors import (
    DimensionMismatch,
    EmptyDataset,
    IdOutOfRange,
    InvalidConfig,
    UnknownCharacter,
)
from patchclust.match_data import MatchRecord
from patchclust.model import (
    HIDDEN_WIDTHS,
    CharacterIndex,
    FeatureSpec,
    MlpModel,
    TrainConfig,
    Variant,
    build_feature_matrix,
    build_features,
    check_encodable,
    fit_feature_spec,
    forward,
    init_mlp,
    load_mlp,
    loss_and_grad,
    n_parameters,
    predict_kills,
    predict_rounded,
    profile_widths,
    save_mlp,
    shuffle_order,
    target_matrix,
    train,
)


def _match(i=0, patch="7.31", heroes=tuple(range(1, 11)), duration=2400, kr=20, kd=10):
    return MatchRecord(i, patch, duration, kr, kd, tuple(heroes), kr > kd)


def _index(k=3, patches=("7.31",), ids=range(1, 12)):
    vectors = []
    hero_ids = {}
    for h in ids:
        hero_ids[f"h{h}"] = h
        for p in patches:
            vectors.append(CharacterVector(tuple((h * (j + 1)) % 3 for j in range(k)), f"h{h}", p))
    return CharacterIndex(vectors, hero_ids)


# --- features ------------------------------------------------------------------


def test_nn1_features_length_one():
    spec = FeatureSpec(Variant.NN1, 2400.0, 600.0)
    x = build_features(spec, _match(duration=3000))
    assert x.shape == (1,) and x[0] == pytest.approx(1.0)
    assert spec.input_dim == 1


def test_nn2_out_of_range_then_extended():
    train_recs = [_match(i, heroes=range(1 + i % 2, 11 + i % 2)) for i in range(4)]
    spec = fit_feature_spec("nn2", train_recs)
    assert spec.max_id == 11
    new = _match(99, patch="7.32", heroes=(12, 1, 2, 3, 4, 5, 6, 7, 8, 9))
    with pytest.raises(IdOutOfRange) as info:
        build_features(spec, new)
    assert "12" in str(info.value)
    with pytest.raises(IdOutOfRange):
        check_encodable(spec, [new])
    extended = fit_feature_spec("nn2", train_recs, max_id=12)
    x = build_features(extended, new)
    assert x.shape == (1 + 2 * 13,)
    X_train = build_feature_matrix(extended, train_recs)
    assert np.all(X_train[:, 1 + 12] == 0) and np.all(X_train[:, 1 + 13 + 12] == 0)
    assert x[1 + 12] == 1.0


def test_nn3_new_patch_uses_frozen_vectors():
    index = _index(k=4, patches=("7.31", "7.32"), ids=range(1, 13))
    spec = fit_feature_spec("nn3", [_match()], k=4)
    x = build_features(spec, _match(patch="7.32", heroes=(12, 1, 2, 3, 4, 5, 6, 7, 8, 9)), index)
    assert x.shape == (1 + 2 * 4,) == (spec.input_dim,)
    radiant = sum(np.array(index.lookup("7.32", h).counts) for h in (12, 1, 2, 3, 4))
    assert np.array_equal(x[1:5], radiant)
    with pytest.raises(UnknownCharacter):
        build_features(spec, _match(patch="7.33"), index)
    with pytest.raises(UnknownCharacter):
        build_features(spec, _match(), None)


def test_feature_spec_validation_and_round_trip():
    with pytest.raises(InvalidConfig):
        FeatureSpec(Variant.NN2, 0.0, 1.0)
    with pytest.raises(InvalidConfig):
        FeatureSpec(Variant.NN3, 0.0, 1.0)
    with pytest.raises(EmptyDataset):
        fit_feature_spec("nn1", [])
    spec = FeatureSpec(Variant.NN3, 2000.0, 500.0, k=68)
    assert FeatureSpec.from_dict(spec.to_dict()) == spec
    assert spec.input_dim == 137


def test_targets_scaled():
    spec = FeatureSpec(Variant.NN1, 0.0, 1.0)
    assert np.array_equal(target_matrix(spec, [_match(kr=20, kd=35)]), [[0.2, 0.35]])


# --- architecture --------------------------------------------------------------


def test_first_layer_shape_and_chain():
    net = init_mlp(1, seed=0)
    assert net.layers[0][0].shape == (1, 1024)
    net = init_mlp(137, seed=0)
    shapes = [W.shape for W, _ in net.layers]
    assert shapes == [(137, 1024), (1024, 512), (512, 128), (128, 64), (64, 32), (32, 8), (8, 2)]
    assert all(np.all(b == 0) for _, b in net.layers)


def test_init_is_seeded_and_glorot_bounded():
    a, b = init_mlp(9, seed=3, hidden=(7, 5)), init_mlp(9, seed=3, hidden=(7, 5))
    assert np.array_equal(a.params, b.params)
    assert not np.array_equal(a.params, init_mlp(9, seed=4, hidden=(7, 5)).params)
    for W, _ in a.layers:
        assert np.all(np.abs(W) <= math.sqrt(6.0 / sum(W.shape)))


def test_profile_widths():
    assert profile_widths(1) == HIDDEN_WIDTHS
    assert profile_widths(8) == (128, 64, 16, 8, 4, 2)
    assert all(w >= 2 for w in profile_widths(1000))
    with pytest.raises(ValueError):
        profile_widths(0)


# --- forward -------------------------------------------------------------------


def test_zero_network_outputs_zero():
    net = MlpModel(3, (4, 4), np.zeros(n_parameters(3, (4, 4))))
    assert np.array_equal(forward(net, [1.0, -2.0, 3.0]), [0.0, 0.0])


def test_hand_computed_two_two_two():
    W1 = np.array([[0.5, -1.0], [0.25, 2.0]])
    b1 = np.array([0.1, -0.3])
    W2 = np.array([[1.5, -0.5], [-2.0, 0.75]])
    b2 = np.array([0.2, 0.4])
    params = np.concatenate([W1.ravel(), b1, W2.ravel(), b2])
    net = MlpModel(2, (2,), params)
    x = (0.7, -1.2)
    h0 = sigmoid(0.7 * 0.5 + -1.2 * 0.25 + 0.1)
    h1 = sigmoid(0.7 * -1.0 + -1.2 * 2.0 - 0.3)
    expected = (h0 * 1.5 + h1 * -2.0 + 0.2, h0 * -0.5 + h1 * 0.75 + 0.4)
    out = forward(net, x)
    assert out[0] == pytest.approx(expected[0], abs=1e-12)
    assert out[1] == pytest.approx(expected[1], abs=1e-12)
    assert np.array_equal(forward(net, x), out)


def test_forward_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        forward(init_mlp(3, hidden=(2,)), [1.0, 2.0])


# --- gradients -----------------------------------------------------------------


def _finite_difference(net, X, Y, h=1e-5):
    grad = np.zeros_like(net.params)
    for i in range(len(net.params)):
        orig = net.params[i]
        net.params[i] = orig + h
        up, _ = loss_and_grad(net, X, Y)
        net.params[i] = orig - h
        down, _ = loss_and_grad(net, X, Y)
        net.params[i] = orig
        grad[i] = (up - down) / (2 * h)
    return grad


def _relative_error(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


@pytest.mark.parametrize("hidden", [(4,), (5, 3), (6, 4, 3)])
def test_backprop_matches_finite_differences(hidden):
    rng = np.random.default_rng(len(hidden))
    X = rng.normal(size=(5, 3))
    Y = rng.normal(size=(5, 2))
    net = init_mlp(3, seed=1, hidden=hidden)
    net.params += rng.normal(0, 0.1, size=net.params.shape)  # non-zero biases too
    _, grad = loss_and_grad(net, X, Y)
    fd = _finite_difference(net, X, Y)
    assert np.max(_relative_error(grad, fd)) < 1e-4


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_backprop_property(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(4, 2))
    Y = rng.normal(size=(4, 2))
    net = init_mlp(2, seed=seed, hidden=(3, 3))
    _, grad = loss_and_grad(net, X, Y)
    fd = _finite_difference(net, X, Y)
    assert np.allclose(grad, fd, rtol=1e-4, atol=1e-9)


# --- training ------------------------------------------------------------------


def _reference_adam(net, X, Y, order, lr, b1=0.9, b2=0.999, eps=1e-8):
    p = net.params.copy()
    m = [0.0] * len(p)
    v = [0.0] * len(p)
    t = 0
    probe = net.copy()
    for i in order:
        probe.params[:] = p
        _, g = loss_and_grad(probe, X[i:i + 1], Y[i:i + 1])
        t += 1
        for j in range(len(p)):
            m[j] = b1 * m[j] + (1 - b1) * g[j]
            v[j] = b2 * v[j] + (1 - b2) * g[j] ** 2
            mh = m[j] / (1 - b1 ** t)
            vh = v[j] / (1 - b2 ** t)
            p[j] -= lr * mh / (math.sqrt(vh) + eps)
    return p


def test_adam_matches_textbook_loop():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(6, 2))
    Y = rng.normal(size=(6, 2))
    net = init_mlp(2, seed=0, hidden=(3,))
    cfg = TrainConfig(epochs=2, learning_rate=1e-2, seed=5)
    trained, _ = train(net, (X, Y), (X, Y), cfg)
    order = np.concatenate([shuffle_order(5, 0, 6), shuffle_order(5, 1, 6)])
    expected = _reference_adam(net, X, Y, order, 1e-2)
    assert np.allclose(trained.params, expected, rtol=1e-10, atol=1e-13)
    assert not np.array_equal(trained.params, net.params)  # input untouched, output moved
    assert np.array_equal(net.params, init_mlp(2, seed=0, hidden=(3,)).params)


def test_constant_target_learned():
    X = np.linspace(-1, 1, 32).reshape(-1, 1)
    Y = np.tile([0.25, 0.30], (32, 1))
    net = init_mlp(1, seed=0, hidden=(8, 4))
    trained, hist = train(net, (X, Y), (X, Y), TrainConfig(epochs=40, learning_rate=1e-2))
    assert hist.train_loss[-1] < hist.train_loss[0]
    assert hist.train_loss[-1] < 1e-4
    assert np.allclose(forward(trained, X), Y, atol=0.02)


def test_training_is_deterministic():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(20, 3))
    Y = np.abs(rng.normal(size=(20, 2)))
    net = init_mlp(3, seed=2, hidden=(5, 3))
    cfg = TrainConfig(epochs=3, learning_rate=1e-3, seed=9)
    a = train(net, (X, Y), (X[:5], Y[:5]), cfg)
    b = train(net, (X, Y), (X[:5], Y[:5]), cfg)
    assert np.array_equal(a[0].params, b[0].params)
    assert a[1] == b[1]
    assert len(a[1]) == 3


def test_train_rejects_empty_and_mismatched():
    net = init_mlp(2, hidden=(2,))
    with pytest.raises(EmptyDataset):
        train(net, (np.zeros((0, 2)), np.zeros((0, 2))), (np.zeros((0, 2)), np.zeros((0, 2))), TrainConfig(epochs=1))
    with pytest.raises(DimensionMismatch):
        train(net, (np.zeros((3, 3)), np.zeros((3, 2))), (np.zeros((0, 3)), np.zeros((0, 2))), TrainConfig(epochs=1))
    with pytest.raises(InvalidConfig):
        TrainConfig(epochs=0)


# --- prediction ----------------------------------------------------------------


def _bias_only(out):
    params = np.zeros(n_parameters(1, (2,)))
    params[-2:] = out
    return MlpModel(1, (2,), params)


def test_predictions_unscaled_and_clamped():
    spec = FeatureSpec(Variant.NN1, 0.0, 1.0)
    assert np.allclose(predict_kills(_bias_only([0.2, 0.2]), spec, [[0.0]]), [[20.0, 20.0]])
    assert np.array_equal(predict_kills(_bias_only([-0.1, 0.3]), spec, [[0.0]])[0], [0.0, 30.0])
    assert np.array_equal(predict_rounded(_bias_only([0.195, 0.204]), spec, [[0.0]])[0], [20.0, 20.0])


# --- persistence ---------------------------------------------------------------


def test_model_file_round_trip(tmp_path):
    net = init_mlp(5, seed=4, hidden=(6, 3))
    net.params += 1e-3 / 3.0
    spec = FeatureSpec(Variant.NN2, 2400.0, 612.5, max_id=1)
    save_mlp(tmp_path / "m.txt", net, spec, TrainConfig(epochs=2), extra={"split_seed": 7})
    loaded, spec2, header = load_mlp(tmp_path / "m.txt")
    assert np.array_equal(loaded.params, net.params)
    assert loaded.hidden == (6, 3)
    assert spec2 == spec
    assert header["extra"]["split_seed"] == 7
    assert header["train_config"]["epochs"] == 2
