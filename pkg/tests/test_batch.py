"""Vectorized batch forward pass must agree with the per-sample pipeline."""
import numpy as np
import pytest

from rsma_unfold.batch import (
    SampleBatch,
    forward_batch,
    loss_batch,
    loss_batch_elements,
    make_batch,
    tile_batch,
)
from rsma_unfold.unfold import forward, init_model, loss

from conftest import default_config, random_sample


@pytest.fixture(scope="module")
def samples():
    return [random_sample(seed=7000 + i) for i in range(12)]


@pytest.fixture(scope="module")
def model(samples):
    return init_model(samples[0].config, 4, penalty=2.0, seed=2, init_step=0.05)


class TestMakeBatch:
    def test_shapes(self, samples):
        b = make_batch(samples)
        assert b.h.shape == (12, 3, 12)
        assert b.size == 12

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            make_batch([])

    def test_mixed_dimensions_rejected(self, samples):
        odd = random_sample(seed=1, U=2, M=12)
        with pytest.raises(ValueError):
            make_batch(samples + [odd])


class TestForwardBatch:
    def test_matches_per_sample(self, samples, model):
        wsr_mat, viol_mat, (v0, vk, rc) = forward_batch(make_batch(samples), model)
        for i, s in enumerate(samples):
            tr = forward(s, model)
            assert np.allclose(tr.wsr, wsr_mat[i], atol=1e-10)
            assert np.allclose(tr.violation, viol_mat[i], atol=1e-10)
            assert np.allclose(tr.states[-1].v0, v0[i], atol=1e-10)
            assert np.allclose(tr.states[-1].v_k, vk[i], atol=1e-10)
            assert np.allclose(tr.states[-1].r_common, rc[i], atol=1e-10)

    def test_loss_matches_per_sample(self, samples, model):
        traces = [forward(s, model) for s in samples]
        assert loss_batch(make_batch(samples), model) == pytest.approx(
            loss(traces), rel=1e-12)

    def test_loss_elements_mean(self, samples, model):
        batch = make_batch(samples)
        elems = loss_batch_elements(batch, model)
        assert elems.shape == (12,)
        assert np.mean(elems) == pytest.approx(loss_batch(batch, model), rel=1e-12)


class TestTileBatch:
    def test_probe_major_layout(self, samples, model):
        batch = make_batch(samples[:3])
        tiled = tile_batch(batch, 2)
        assert tiled.size == 6
        assert np.array_equal(tiled.h[3], batch.h[0])
        # per-sample losses repeat across the probe axis for a fixed model
        elems = loss_batch_elements(tiled, model)
        assert np.allclose(elems[:3], elems[3:])


class TestBatchedLayerParams:
    def test_per_sample_params_match_uniform(self, samples, model):
        """A model whose parameter arrays carry a leading sample axis with
        identical rows must reproduce the shared-parameter forward."""
        import dataclasses
        from rsma_unfold.unfold import LayerParams, ModelParams
        q = len(samples)
        layers = tuple(
            LayerParams(w0=np.tile(l.w0, (q, 1)),
                        w_k=np.tile(l.w_k, (q, 1, 1)),
                        eta_k=np.tile(l.eta_k, (q, 1, 1)))
            for l in model.layers)
        batched_model = ModelParams(layers=layers, penalty=model.penalty,
                                    num_users=3, num_antennas=12)
        batch = make_batch(samples)
        ref_wsr, ref_viol, _ = forward_batch(batch, model)
        got_wsr, got_viol, _ = forward_batch(batch, batched_model)
        assert np.allclose(got_wsr, ref_wsr, atol=1e-12)
        assert np.allclose(got_viol, ref_viol, atol=1e-12)
