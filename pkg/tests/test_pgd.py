"""Penalty objective, FP auxiliaries, analytic gradients, plain PGD."""
import numpy as np
import pytest

from rsma_unfold.model import BeamState, ChannelSample, ScenarioConfig, wsr
from rsma_unfold.pgd import (
    PgdConfig,
    default_pgd_config,
    gradients,
    penalty_objective,
    pgd_solve,
    pgd_step,
    phi,
    update_aux,
)
from rsma_unfold import projection

from conftest import default_config, random_sample, random_state


def one_user_sample(v=2.0):
    cfg = ScenarioConfig(num_users=1, num_antennas=1, p_max=10.0, p_c=0.0,
                         noise_var=1.0, weights=np.ones(1), qos_sinr=np.zeros(1))
    s = ChannelSample(channels=np.array([[1.0 + 0j]]), config=cfg)
    st = BeamState(v0=np.zeros(1), v_k=np.array([[v + 0j]]), r_common=np.zeros(1))
    return s, st


def scalar_penalty_objective(sample, state, aux, lam):
    """Independent scalar-loop oracle for the penalty objective."""
    cfg = sample.config
    U, M = cfg.num_users, cfg.num_antennas
    total = 0.0
    for k in range(U):
        h = sample.channels[k]
        hv = sum(h[m].conjugate() * state.v_k[k][m] for m in range(M))
        interf = cfg.noise_var
        for j in range(U):
            if j != k:
                hvj = sum(h[m].conjugate() * state.v_k[j][m] for m in range(M))
                interf += abs(hvj) ** 2
        ph = 1 + 2 * (aux.z_k[k].conjugate() * hv).real - abs(aux.z_k[k]) ** 2 * interf
        total += cfg.weights[k] * (state.r_common[k] + np.log2(ph))
    h1 = sample.channels[0]
    hv0 = sum(h1[m].conjugate() * state.v0[m] for m in range(M))
    i0 = cfg.noise_var
    for j in range(U):
        hvj = sum(h1[m].conjugate() * state.v_k[j][m] for m in range(M))
        i0 += abs(hvj) ** 2
    ph0 = 1 + 2 * (aux.z0.conjugate() * hv0).real - abs(aux.z0) ** 2 * i0
    return total - lam * (float(np.sum(state.r_common)) - np.log2(ph0))


class TestAux:
    def test_single_user_no_interference(self):
        s, st = one_user_sample(v=2.0)
        aux = update_aux(s, st)
        assert aux.z_k[0] == pytest.approx(2.0)

    def test_zero_common_beam(self, sample, rng):
        st = random_state(rng, 3, 12)
        st = BeamState(v0=np.zeros(12), v_k=st.v_k, r_common=st.r_common)
        assert update_aux(sample, st).z0 == 0.0

    def test_matches_scalar_oracle(self, rng):
        s = random_sample(seed=8, U=3, M=4)
        st = random_state(rng, 3, 4)
        aux = update_aux(s, st)
        for k in range(3):
            h = s.channels[k]
            hv = np.vdot(h, st.v_k[k])
            interf = s.config.noise_var + sum(
                abs(np.vdot(h, st.v_k[j])) ** 2 for j in range(3) if j != k)
            assert aux.z_k[k] == pytest.approx(hv / interf, rel=1e-12)


class TestPhi:
    def test_fp_tightness_single_user(self):
        s, st = one_user_sample(v=2.0)
        ph = phi(s, st, update_aux(s, st))
        assert ph.phi_k[0] == pytest.approx(5.0)  # 1 + SINR = 1 + 4

    def test_zero_aux_gives_one(self, sample, rng):
        from rsma_unfold.pgd import AuxiliaryVars
        st = random_state(rng, 3, 12)
        aux = AuxiliaryVars(z0=0.0, z_k=np.zeros(3, dtype=complex))
        ph = phi(sample, st, aux)
        assert ph.phi0 == pytest.approx(1.0)
        assert np.allclose(ph.phi_k, 1.0)

    def test_fp_tightness_random(self, rng):
        # log2(phi_k) equals the private rate when aux is fresh
        s = random_sample(seed=13)
        st = random_state(rng, 3, 12)
        from rsma_unfold.model import sinr
        ph = phi(s, st, update_aux(s, st))
        for k in range(3):
            assert ph.phi_k[k] == pytest.approx(1.0 + sinr(s, st, k), abs=1e-10)

    def test_stale_aux_lower_bound(self, rng):
        # quadratic-transform surrogate lower-bounds 1 + SINR at other states
        from rsma_unfold.model import sinr
        s = random_sample(seed=17)
        st = random_state(rng, 3, 12)
        aux = update_aux(s, st)
        for _ in range(10):
            perturbed = random_state(rng, 3, 12)
            ph = phi(s, perturbed, aux)
            for k in range(3):
                assert ph.phi_k[k] <= 1.0 + sinr(s, perturbed, k) + 1e-10


class TestPenaltyObjective:
    def test_zero_everything(self, sample):
        from rsma_unfold.pgd import AuxiliaryVars
        st = BeamState(v0=np.zeros(12), v_k=np.zeros((3, 12)), r_common=np.zeros(3))
        aux = AuxiliaryVars(z0=0.0, z_k=np.zeros(3, dtype=complex))
        assert penalty_objective(sample, st, aux, 2.0) == pytest.approx(0.0)

    def test_lambda_zero_reduces_to_weighted_rates(self, rng):
        s = random_sample(seed=19)
        st = random_state(rng, 3, 12)
        aux = update_aux(s, st)
        ph = phi(s, st, aux)
        expected = float(np.sum(s.config.weights *
                                (st.r_common + np.log2(ph.phi_k))))
        assert penalty_objective(s, st, aux, 1e-300) == pytest.approx(expected, rel=1e-9)

    def test_matches_scalar_oracle(self, rng):
        s = random_sample(seed=23, U=3, M=4)
        st = random_state(rng, 3, 4)
        aux = update_aux(s, st)
        assert penalty_objective(s, st, aux, 2.0) == pytest.approx(
            scalar_penalty_objective(s, st, aux, 2.0), rel=1e-12)


class TestGradients:
    def test_d_rc_constant(self, sample, rng):
        st1, st2 = random_state(rng, 3, 12), random_state(rng, 3, 12)
        g1 = gradients(sample, st1, update_aux(sample, st1), 2.0)
        g2 = gradients(sample, st2, update_aux(sample, st2), 2.0)
        assert np.allclose(g1.d_rc, sample.config.weights - 2.0)
        assert np.array_equal(g1.d_rc, g2.d_rc)

    def test_zero_z0_kills_common_terms(self, sample, rng):
        st = random_state(rng, 3, 12)
        st = BeamState(v0=np.zeros(12), v_k=st.v_k, r_common=st.r_common)
        g = gradients(sample, st, update_aux(sample, st), 2.0)
        assert np.allclose(g.d_v0, 0.0)
        assert np.allclose(g.o_k, 0.0)

    def test_fd_proportionality(self, rng):
        """Analytic gradient blocks match central FD of the penalty
        objective up to one fitted positive scalar per block."""
        s = random_sample(seed=29)
        st = random_state(rng, 3, 12)
        aux = update_aux(s, st)
        lam = 2.0
        g = gradients(s, st, aux, lam)
        eps = 1e-6

        def fd_complex(apply):
            # FD over stacked real/imag coordinates of one beamformer block
            out = []
            for part in (1.0, 1.0j):
                def f(delta_flat):
                    return penalty_objective(s, apply(delta_flat * part), aux, lam)
                n = 12
                row = np.empty(n)
                for m in range(n):
                    d = np.zeros(n, dtype=complex)
                    d[m] = eps
                    row[m] = (f(d) - f(-d)) / (2 * eps)
                out.append(row)
            return out[0] + 1j * out[1]

        fd_v0 = fd_complex(lambda d: BeamState(v0=st.v0 + d, v_k=st.v_k,
                                               r_common=st.r_common))
        c = np.vdot(g.d_v0, fd_v0).real / max(np.vdot(g.d_v0, g.d_v0).real, 1e-300)
        assert c > 0
        assert np.linalg.norm(c * g.d_v0 - fd_v0) / np.linalg.norm(fd_v0) < 1e-5

    def test_nonpositive_phi_rejected(self, sample, rng):
        from rsma_unfold.pgd import AuxiliaryVars
        st = random_state(rng, 3, 12, scale=1.0)
        # huge stale z forces phi negative
        aux = AuxiliaryVars(z0=1e6 + 0j, z_k=np.full(3, 1e6, dtype=complex))
        with pytest.raises(ValueError):
            gradients(sample, st, aux, 2.0)


class TestPgdStep:
    def test_zero_steps_equal_projection(self, sample, rng):
        st = random_state(rng, 3, 12)
        cfg = PgdConfig(l1=0.0, l2=0.0, l3=0.0, penalty=2.0)
        out = pgd_step(sample, st, update_aux(sample, st), cfg)
        ref = projection.project(sample, st)
        assert np.allclose(out.v0, ref.v0)
        assert np.allclose(out.v_k, ref.v_k)
        assert np.allclose(out.r_common, ref.r_common)

    def test_tiny_step_continuity(self, sample, rng):
        st = projection.project(sample, random_state(rng, 3, 12))
        cfg = PgdConfig(l1=1e-6, l2=1e-6, l3=1e-6, penalty=2.0)
        out = pgd_step(sample, st, update_aux(sample, st), cfg)
        assert abs(wsr(sample, out) - wsr(sample, st)) <= 1e-3

    def test_power_budget_respected(self, rng):
        s = random_sample(seed=31)
        st = random_state(rng, 3, 12, scale=1.0)
        cfg = default_pgd_config(s)
        out = pgd_step(s, st, update_aux(s, st), cfg)
        assert out.total_power() <= s.config.power_budget + 1e-9


class TestPgdSolve:
    def test_max_iters_zero_returns_projected_init(self, sample, rng):
        st = random_state(rng, 3, 12)
        cfg = default_pgd_config(sample, max_iters=0)
        best, trace = pgd_solve(sample, cfg, st)
        ref = projection.project(sample, st)
        assert np.allclose(best.v_k, ref.v_k)
        assert len(trace) == 1

    def test_never_below_projected_init(self, rng):
        s = random_sample(seed=37)
        st = random_state(rng, 3, 12)
        cfg = default_pgd_config(s, max_iters=50, l1=0.01, l2=0.01, l3=0.01)
        best, trace = pgd_solve(s, cfg, st)
        assert wsr(s, best) >= trace[0] - 1e-9

    def test_best_nondecreasing_in_iters(self, rng):
        s = random_sample(seed=41)
        st = random_state(rng, 3, 12)
        prev = -np.inf
        for iters in (5, 20, 80):
            cfg = default_pgd_config(s, max_iters=iters, tol=1e-15)
            best, _ = pgd_solve(s, cfg, st)
            cur = wsr(s, best)
            assert cur >= prev - 1e-12
            prev = cur

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PgdConfig(l1=-0.1)
        with pytest.raises(ValueError):
            PgdConfig(penalty=0.0)
        with pytest.raises(ValueError):
            PgdConfig(tol=0.0)
