"""Finite-difference gradients and the Adam training loop."""
import numpy as np
import pytest

from rsma_unfold.batch import make_batch, loss_batch
from rsma_unfold.training import (
    TrainConfig,
    flatten_params,
    param_gradient,
    train,
    unflatten_params,
)
from rsma_unfold.unfold import init_model

from conftest import random_sample


@pytest.fixture(scope="module")
def samples():
    return [random_sample(seed=8000 + i) for i in range(6)]


@pytest.fixture(scope="module")
def model(samples):
    return init_model(samples[0].config, 2, penalty=2.0, seed=6, init_step=0.05)


def naive_fd(model, samples, rel_step=1e-4):
    """Per-parameter central-difference loop (the reference the vectorized
    implementation must reproduce exactly)."""
    batch = make_batch(samples)
    theta = flatten_params(model)
    grad = np.empty_like(theta)
    steps = rel_step * (1.0 + np.abs(theta))
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += steps[i]
        tm[i] -= steps[i]
        fp = loss_batch(batch, unflatten_params(tp, model))
        fm = loss_batch(batch, unflatten_params(tm, model))
        grad[i] = (fp - fm) / (2 * steps[i])
    return grad


class TestFlatten:
    def test_round_trip(self, model):
        theta = flatten_params(model)
        assert theta.shape == (2 * 28,)  # (U+1)(2U+1) = 28 per layer at U=3
        back = unflatten_params(theta, model)
        for la, lb in zip(model.layers, back.layers):
            assert np.array_equal(la.w0, lb.w0)
            assert np.array_equal(la.w_k, lb.w_k)
            assert np.array_equal(la.eta_k, lb.eta_k)


class TestParamGradient:
    def test_vectorized_matches_naive_loop(self, samples, model):
        got = param_gradient(model, samples)
        ref = naive_fd(model, samples)
        assert np.allclose(got, ref, rtol=1e-12, atol=1e-15)

    def test_duplicate_batch_same_gradient(self, samples, model):
        g1 = param_gradient(model, samples)
        g2 = param_gradient(model, samples + samples)
        assert np.allclose(g1, g2, rtol=1e-10, atol=1e-14)

    def test_unknown_method_rejected(self, samples, model):
        with pytest.raises(ValueError):
            param_gradient(model, samples, method="adjoint")


class TestTrain:
    def test_lr_zero_keeps_params(self, samples):
        cfg = TrainConfig(epochs=3, batch_size=4, lr=0.0, seed=1, n_layers=2)
        model0 = init_model(samples[0].config, 2, penalty=cfg.penalty,
                            seed=cfg.seed, init_step=cfg.init_step)
        model, history = train(samples, cfg)
        assert len(history) == 3
        assert np.array_equal(flatten_params(model), flatten_params(model0))

    def test_epochs_zero_is_initialization(self, samples):
        cfg = TrainConfig(epochs=0, batch_size=4, lr=0.01, seed=1, n_layers=2)
        model, history = train(samples, cfg)
        model0 = init_model(samples[0].config, 2, penalty=cfg.penalty,
                            seed=cfg.seed, init_step=cfg.init_step)
        assert history == []
        assert np.array_equal(flatten_params(model), flatten_params(model0))

    def test_deterministic(self, samples):
        cfg = TrainConfig(epochs=2, batch_size=4, lr=0.005, seed=3, n_layers=1)
        m1, h1 = train(samples, cfg)
        m2, h2 = train(samples, cfg)
        assert np.array_equal(flatten_params(m1), flatten_params(m2))
        for r1, r2 in zip(h1, h2):
            for key in r1:
                np.testing.assert_equal(r1[key], r2[key])  # nan-safe

    def test_history_fields(self, samples):
        cfg = TrainConfig(epochs=1, batch_size=6, lr=0.005, seed=3, n_layers=1)
        _, history = train(samples, cfg)
        row = history[0]
        for key in ("loss", "twsr", "lwsr", "tpfv", "lpfv", "train_asr",
                    "train_violation_rate", "epoch"):
            assert key in row

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train([], TrainConfig(epochs=1))

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(grad_method="adjoint")
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
