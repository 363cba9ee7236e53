"""Unfolded network: init, layer updates, forward trace, violation, loss."""
import numpy as np
import pytest

from rsma_unfold.model import BeamState, ChannelSample, ScenarioConfig, wsr
from rsma_unfold.pgd import PgdConfig, pgd_step, update_aux
from rsma_unfold.projection import project
from rsma_unfold.unfold import (
    RC_STEP,
    LayerParams,
    ModelParams,
    env_vector,
    forward,
    init_model,
    init_state,
    layer_forward,
    loss,
    pgd_equivalent_layer,
    violation_factor,
)

from conftest import P_MAX_W, default_config, random_sample, random_state


def zero_layer(U):
    return LayerParams(w0=np.zeros(U + 1), w_k=np.zeros((U, U + 1)),
                       eta_k=np.ones((U, U + 1)))


class TestInitState:
    def test_conjugate_direction(self):
        cfg = ScenarioConfig(num_users=1, num_antennas=1, p_max=2.0, p_c=0.0,
                             noise_var=1.0, weights=np.ones(1), qos_sinr=np.zeros(1))
        s = ChannelSample(channels=np.array([[1j]]), config=cfg)
        st = init_state(s)
        assert st.v_k[0, 0].imag < 0  # conj(i) = -i direction

    def test_total_power_right(self, sample):
        st = init_state(sample)
        assert st.total_power() == pytest.approx(
            0.9 * sample.config.power_budget, rel=1e-12)

    def test_deterministic(self, sample):
        a, b = init_state(sample), init_state(sample)
        assert np.array_equal(a.v_k, b.v_k)
        assert np.allclose(a.r_common, 0.0)


class TestEnvVector:
    def test_ordering(self, sample):
        env = env_vector(sample)
        assert np.allclose(env[:3], sample.config.weights)
        assert env[3] == pytest.approx(P_MAX_W)


class TestLayerForward:
    def test_zero_params_equal_projection(self, sample, rng):
        st = random_state(rng, 3, 12)
        out = layer_forward(sample, st, zero_layer(3), penalty=2.0, rc_step=0.0)
        ref = project(sample, st)
        assert np.allclose(out.v0, ref.v0)
        assert np.allclose(out.v_k, ref.v_k)

    def test_pgd_equivalence(self):
        """[DERIVED] constructed LayerParams reproduce pgd_step to 1e-10."""
        for i in range(20):
            s = random_sample(seed=4000 + i)
            st = project(s, random_state(np.random.default_rng(i), 3, 12))
            l2, l3, lam = 0.05, 0.05, 2.0
            layer = pgd_equivalent_layer(s.config, l2=l2, l3=l3, penalty=lam)
            got = layer_forward(s, st, layer, penalty=lam, rc_step=0.05)
            cfg = PgdConfig(l1=0.05, l2=l2, l3=l3, penalty=lam)
            ref = pgd_step(s, st, update_aux(s, st), cfg)
            assert np.max(np.abs(got.v0 - ref.v0)) <= 1e-10
            assert np.max(np.abs(got.v_k - ref.v_k)) <= 1e-10
            assert np.max(np.abs(got.r_common - ref.r_common)) <= 1e-10

    def test_power_invariant(self, sample, rng):
        layer = LayerParams(w0=rng.standard_normal(4) * 0.1,
                            w_k=rng.standard_normal((3, 4)) * 0.1,
                            eta_k=rng.standard_normal((3, 4)))
        st = random_state(rng, 3, 12)
        out = layer_forward(sample, st, layer, penalty=2.0)
        assert out.total_power() <= sample.config.power_budget + 1e-9


class TestForward:
    def test_zero_layer_model_trace(self, sample):
        model = ModelParams(layers=(), penalty=2.0, num_users=3, num_antennas=12)
        tr = forward(sample, model)
        assert tr.num_layers == 0
        assert len(tr.states) == 1
        ref = project(sample, init_state(sample))
        assert np.allclose(tr.states[0].v_k, ref.v_k)

    def test_deterministic(self, sample):
        model = init_model(sample.config, 3, penalty=2.0, seed=0)
        a, b = forward(sample, model), forward(sample, model)
        assert np.array_equal(a.wsr, b.wsr)
        assert np.array_equal(a.states[-1].v_k, b.states[-1].v_k)

    def test_dimension_mismatch_rejected(self, sample):
        model = init_model(default_config(U=2, M=12), 2, penalty=2.0, seed=0)
        with pytest.raises(ValueError):
            forward(sample, model)


class TestViolationFactor:
    def test_all_feasible_zero(self):
        s = random_sample(seed=71, qos=np.zeros(3))
        st = BeamState(v0=np.zeros(12), v_k=np.zeros((3, 12)), r_common=np.zeros(3))
        assert violation_factor([st], [s]) == 0.0

    def test_power_excess_hinge(self):
        # state exceeding power by ~0.5 W with SINR satisfied
        s = random_sample(seed=73, qos=np.zeros(3))
        budget = s.config.power_budget
        v0 = np.zeros(12, dtype=complex)
        v0[0] = np.sqrt(budget + 0.5)
        st = BeamState(v0=v0, v_k=np.zeros((3, 12)), r_common=np.zeros(3))
        assert violation_factor([st], [s]) == pytest.approx(0.5, abs=1e-9)

    def test_matches_scalar_oracle(self, rng):
        from rsma_unfold.model import sinr
        samples = [random_sample(seed=5000 + i) for i in range(8)]
        states = [random_state(np.random.default_rng(i), 3, 12) for i in range(8)]
        total = 0.0
        for s, st in zip(samples, states):
            term = max(0.0, st.total_power() - s.config.power_budget)
            for k in range(3):
                term += max(0.0, s.config.qos_sinr[k] - sinr(s, st, k))
            total += term
        assert violation_factor(states, samples) == pytest.approx(
            total / 8, rel=1e-12)


class TestLoss:
    def test_single_layer_feasible(self):
        # N=1, zero violation: loss = -(1/Q) sum WSR
        samples = [random_sample(seed=6000 + i, qos=np.zeros(3)) for i in range(4)]
        model = init_model(samples[0].config, 1, penalty=2.0, seed=3)
        traces = [forward(s, model) for s in samples]
        if all(t.violation[1] == 0 for t in traces):
            expected = -float(np.mean([t.wsr[1] for t in traces]))
            assert loss(traces) == pytest.approx(expected, rel=1e-12)

    def test_matches_scalar_oracle(self):
        samples = [random_sample(seed=6100 + i) for i in range(5)]
        model = init_model(samples[0].config, 3, penalty=2.0, seed=4)
        traces = [forward(s, model) for s in samples]
        n, q = 3, 5
        total = 0.0
        for nn in range(1, n + 1):
            w = np.log2(nn + 1)
            total -= w * sum(t.wsr[nn] for t in traces) / (q * n)
            total += w * sum(t.violation[nn] for t in traces) / q
        assert loss(traces) == pytest.approx(total, rel=1e-10)

    def test_monotone_in_wsr(self):
        # raising any layer WSR with violations fixed lowers the loss
        samples = [random_sample(seed=6200 + i) for i in range(3)]
        model = init_model(samples[0].config, 2, penalty=2.0, seed=5)
        traces = [forward(s, model) for s in samples]
        base = loss(traces)
        import dataclasses
        bumped = dataclasses.replace(traces[0], wsr=traces[0].wsr + 0.1)
        assert loss([bumped] + traces[1:]) < base

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            loss([])


class TestInitModel:
    def test_near_pgd_start(self, cfg):
        model = init_model(cfg, 4, penalty=2.0, seed=0, init_step=0.05)
        env = np.concatenate([cfg.weights, [cfg.p_max]])
        from rsma_unfold.model import LN2
        for layer in model.layers:
            step0 = LN2 * float(env @ layer.w0) / 2.0
            assert 0.0 < step0 < 0.2
            assert np.allclose(layer.eta_k, 1.0)

    def test_deterministic(self, cfg):
        a = init_model(cfg, 2, penalty=2.0, seed=9)
        b = init_model(cfg, 2, penalty=2.0, seed=9)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.w0, lb.w0)
