"""Model layer: init, forward, training determinism, checkpoints."""

import numpy as np
import pytest

from botuq.datasets import Dataset
from botuq.errors import BadIndex, FeatureLengthMismatch, IoError
from botuq.models import (
    INIT_SCALE,
    ArchConfig,
    ModelParams,
    TrainConfig,
    forward,
    grad,
    init_params,
    kernel_for,
    load_checkpoint,
    loss,
    loss_batch,
    predict_proba,
    save_checkpoint,
    train,
    weight_shapes,
)


def test_init_is_uniform_and_seeded(lstm_arch):
    a = init_params(lstm_arch, seed=42)
    b = init_params(lstm_arch, seed=42)
    c = init_params(lstm_arch, seed=43)
    for name, _ in weight_shapes(lstm_arch):
        assert np.array_equal(a.weights[name], b.weights[name])
        assert np.abs(a.weights[name]).max() <= INIT_SCALE
    assert any(
        not np.array_equal(a.weights[n], c.weights[n]) for n, _ in weight_shapes(lstm_arch)
    )


def test_weight_shapes_lstm(lstm_arch):
    shapes = dict(weight_shapes(lstm_arch))
    h, e = lstm_arch.hidden_size, lstm_arch.embed_dim
    assert shapes["lstm_wx"] == (4 * h, e)
    assert shapes["lstm_wh"] == (4 * h, h)
    assert shapes["lstm_b"] == (4 * h,)
    assert shapes["out_w"] == (2, h)
    assert shapes["out_b"] == (2,)


def test_weight_shapes_cnn(cnn_arch):
    shapes = dict(weight_shapes(cnn_arch))
    # conv features feed the LSTM instead of the raw embedding
    assert shapes["conv_w"] == (cnn_arch.conv_filters, cnn_arch.conv_kernel, cnn_arch.embed_dim)
    assert shapes["conv_b"] == (cnn_arch.conv_filters,)
    assert shapes["lstm_wx"] == (4 * cnn_arch.hidden_size, cnn_arch.conv_filters)


def test_zero_weights_predict_uniform(lstm_arch):
    zeros = {name: np.zeros(s) for name, s in weight_shapes(lstm_arch)}
    p = ModelParams(lstm_arch, zeros, n_features=5)
    dist = forward(p, np.array([0.3, -1.0, 2.0, 0.0, 0.7]))
    assert np.array_equal(dist.probs, [0.5, 0.5])


def test_forward_is_a_distribution(lstm_arch, cnn_arch):
    x = np.linspace(-1, 1, 7)
    for arch in (lstm_arch, cnn_arch):
        dist = forward(init_params(arch, 0, 7), x)
        assert dist.probs.shape == (2,)
        assert abs(dist.probs.sum() - 1.0) < 1e-12
        assert (dist.probs >= 0).all()


def test_forward_checks_feature_count(lstm_arch):
    p = init_params(lstm_arch, 0, n_features=5)
    with pytest.raises(FeatureLengthMismatch):
        forward(p, np.zeros(6))


def test_train_mode_needs_rng_when_dropout_on(lstm_arch):
    p = init_params(lstm_arch, 0, n_features=4)
    with pytest.raises(ValueError):
        forward(p, np.zeros(4), mode="train")
    # rate 0 works without one
    p0 = init_params(ArchConfig(kind="lstm", hidden_size=4, embed_dim=3, dropout_rate=0.0), 0, 4)
    forward(p0, np.zeros(4), mode="train")


def test_loss_and_grad_validate_label(lstm_arch):
    p = init_params(lstm_arch, 0, n_features=3)
    with pytest.raises(BadIndex):
        loss(p, np.zeros(3), 2)
    with pytest.raises(BadIndex):
        grad(p, np.zeros(3), -1)


def test_loss_is_positive_and_matches_forward(lstm_arch):
    p = init_params(lstm_arch, 1, n_features=3)
    x = np.array([0.1, 0.5, 0.9])
    for y in (0, 1):
        val = loss(p, x, y)
        assert val > 0
        assert abs(val + np.log(forward(p, x).probs[y])) < 1e-12


def test_epochs_zero_is_identity(tiny_train, lstm_arch):
    p0 = init_params(lstm_arch, 7, tiny_train.n_features)
    p1 = train(p0, tiny_train, TrainConfig(epochs=0, seed=0))
    for name in p0.weights:
        assert np.array_equal(p0.weights[name], p1.weights[name])


def test_training_is_bit_deterministic(tiny_train, lstm_arch, fast_tcfg):
    p0 = init_params(lstm_arch, 7, tiny_train.n_features)
    a = train(p0, tiny_train, fast_tcfg)
    b = train(p0, tiny_train, fast_tcfg)
    for name in a.weights:
        assert np.array_equal(a.weights[name], b.weights[name])


def test_training_seed_changes_trajectory(tiny_train, lstm_arch, fast_tcfg):
    p0 = init_params(lstm_arch, 7, tiny_train.n_features)
    a = train(p0, tiny_train, fast_tcfg)
    b = train(p0, tiny_train, TrainConfig(learning_rate=0.05, epochs=2, seed=4))
    assert any(not np.array_equal(a.weights[n], b.weights[n]) for n in a.weights)


def test_training_reduces_loss(tiny_train, lstm_arch):
    p0 = init_params(lstm_arch, 7, tiny_train.n_features)
    p1 = train(p0, tiny_train, TrainConfig(learning_rate=0.05, epochs=25, seed=3))
    assert loss_batch(p1, tiny_train).mean() < loss_batch(p0, tiny_train).mean()


def test_minibatch_granularity_runs(tiny_train, lstm_arch):
    p0 = init_params(lstm_arch, 7, tiny_train.n_features)
    cfg = TrainConfig(learning_rate=0.05, epochs=1, seed=3, update_granularity="minibatch", batch_size=4)
    p1 = train(p0, tiny_train, cfg)
    assert any(not np.array_equal(p0.weights[n], p1.weights[n]) for n in p0.weights)


def test_predict_proba_shape_and_argmax(tiny_data, lstm_arch, fast_tcfg):
    tr, te = tiny_data
    p = train(init_params(lstm_arch, 7, tr.n_features), tr, fast_tcfg)
    probs = predict_proba(p, te)
    assert probs.shape == (te.n_samples, 2)
    assert np.allclose(probs.sum(axis=1), 1.0)


def test_predict_proba_checks_width(lstm_arch):
    p = init_params(lstm_arch, 0, n_features=4)
    d = Dataset("w", np.zeros((2, 3)), np.array([0, 1]), ("a", "b", "c"))
    with pytest.raises(FeatureLengthMismatch):
        predict_proba(p, d)


def test_cnn_needs_enough_steps_to_pool(cnn_arch):
    p = init_params(cnn_arch, 0)
    with pytest.raises(FeatureLengthMismatch):
        kernel_for(p, 1)  # one timestep pools to nothing


def test_checkpoint_round_trip(tmp_path, cnn_arch, tiny_train, fast_tcfg):
    p = train(init_params(cnn_arch, 9, tiny_train.n_features), tiny_train, fast_tcfg)
    path = tmp_path / "model.npz"
    save_checkpoint(p, path)
    back = load_checkpoint(path)
    assert back.arch == p.arch
    assert back.n_features == p.n_features
    for name in p.weights:
        assert np.array_equal(back.weights[name], p.weights[name])


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "junk.npz"
    np.savez(path, foo=np.zeros(3))
    with pytest.raises(IoError):
        load_checkpoint(path)


def test_arch_config_validation():
    with pytest.raises(ValueError):
        ArchConfig(kind="transformer")
    with pytest.raises(ValueError):
        ArchConfig(dropout_rate=1.0)
    with pytest.raises(ValueError):
        ArchConfig(n_classes=3)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(update_granularity="minibatch")  # missing batch_size
