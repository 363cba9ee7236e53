"""Shared fixtures and helpers for the test suite."""
import numpy as np
import pytest

from rsma_unfold.model import BeamState, ChannelSample, ScenarioConfig, generate_channels

# Paper-style default scenario: 3 users, 12 antennas, 33/30 dBm, sigma^2 1e-3.
P_MAX_W = 1.9952623149688795
P_C_W = 1.0


def default_config(U=3, M=12, weights=None, qos=None, snr_db=15.0):
    if weights is None:
        weights = np.full(U, 1.0 / U)
    if qos is None:
        qos = np.full(U, 0.5)
    return ScenarioConfig(num_users=U, num_antennas=M, p_max=P_MAX_W,
                          p_c=P_C_W, noise_var=1e-3, weights=weights,
                          qos_sinr=qos, channel_snr_db=snr_db)


def random_sample(seed, U=3, M=12, **cfg_kw):
    return generate_channels(default_config(U=U, M=M, **cfg_kw), seed=seed)


def random_state(rng, U, M, scale=0.3):
    def cvec(*shape):
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return BeamState(v0=cvec(M), v_k=cvec(U, M),
                     r_common=np.abs(rng.standard_normal(U)) * 0.1)


@pytest.fixture
def cfg():
    return default_config()


@pytest.fixture
def sample():
    return random_sample(seed=42)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
