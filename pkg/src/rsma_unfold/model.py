"""RSMA downlink system model: channels, rates, SINR, WSR and feasibility.

All powers are in watts, all rates in bits/s/Hz, SINR thresholds linear.
User 0 in every :class:`ChannelSample` is the weakest user (smallest
squared channel norm); all common-stream expressions anchor on it.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and optimization constants for one scenario."""

    num_users: int
    num_antennas: int
    p_max: float
    p_c: float
    noise_var: float
    weights: np.ndarray          # (U,) positive
    qos_sinr: np.ndarray         # (U,) nonnegative, linear
    channel_snr_db: float = 15.0

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "qos_sinr", np.asarray(self.qos_sinr, dtype=float))
        if self.num_users < 1:
            raise ValueError("num_users must be >= 1")
        if self.num_antennas < 1:
            raise ValueError("num_antennas must be >= 1")
        if not (self.p_max > self.p_c >= 0.0):
            raise ValueError("need p_max > p_c >= 0")
        if self.noise_var <= 0.0:
            raise ValueError("noise_var must be > 0")
        if self.weights.shape != (self.num_users,) or np.any(self.weights <= 0):
            raise ValueError("weights must be a length-U vector of positives")
        if self.qos_sinr.shape != (self.num_users,) or np.any(self.qos_sinr < 0):
            raise ValueError("qos_sinr must be a length-U vector of nonnegatives")

    @property
    def power_budget(self) -> float:
        """Transmit power available for beamforming: p_max - p_c."""
        return self.p_max - self.p_c


@dataclass(frozen=True)
class BeamState:
    """Decision variables: common beamformer, private beamformers, common-rate split."""

    v0: np.ndarray         # (M,) complex
    v_k: np.ndarray        # (U, M) complex
    r_common: np.ndarray   # (U,) nonnegative

    def __post_init__(self):
        object.__setattr__(self, "v0", np.asarray(self.v0, dtype=complex))
        object.__setattr__(self, "v_k", np.asarray(self.v_k, dtype=complex))
        object.__setattr__(self, "r_common", np.asarray(self.r_common, dtype=float))

    def total_power(self) -> float:
        return float(np.sum(np.abs(self.v0) ** 2) + np.sum(np.abs(self.v_k) ** 2))


@dataclass(frozen=True)
class SampleLabel:
    """Reference solution attached to a sample by a benchmark solver."""

    wsr_opt: float
    beamformers: Optional[BeamState] = None


@dataclass(frozen=True)
class ChannelSample:
    """One channel realization for all users, weakest user first."""

    channels: np.ndarray   # (U, M) complex, sorted ascending by squared norm
    config: ScenarioConfig
    label: Optional[SampleLabel] = None

    def __post_init__(self):
        object.__setattr__(self, "channels", np.asarray(self.channels, dtype=complex))
        U, M = self.config.num_users, self.config.num_antennas
        if self.channels.shape != (U, M):
            raise ValueError(f"channels must have shape ({U}, {M})")

    def with_label(self, label: SampleLabel) -> "ChannelSample":
        return replace(self, label=label)


@dataclass(frozen=True)
class FeasibilityReport:
    power_margin: float
    sinr_margins: np.ndarray
    common_rate_margin: float
    feasible: bool


def generate_channels(config: ScenarioConfig, seed: int) -> ChannelSample:
    """Draw one i.i.d. circularly symmetric complex Gaussian channel sample.

    Per-entry variance is SNR_lin * sigma^2 / (p_max - p_c), tying the
    configured channel SNR to the transmit budget.  Users are sorted
    ascending by squared channel norm so index 0 is the weakest.
    """
    rng = np.random.default_rng(seed)
    snr_lin = 10.0 ** (config.channel_snr_db / 10.0)
    var = snr_lin * config.noise_var / config.power_budget
    U, M = config.num_users, config.num_antennas
    re = rng.standard_normal((U, M))
    im = rng.standard_normal((U, M))
    h = np.sqrt(var / 2.0) * (re + 1j * im)
    order = np.argsort(np.sum(np.abs(h) ** 2, axis=1), kind="stable")
    return ChannelSample(channels=h[order], config=config)


def sinr(sample: ChannelSample, state: BeamState, k: int) -> float:
    """Private-stream SINR of user k (0-based), interference from other privates."""
    U = sample.config.num_users
    if not 0 <= k < U:
        raise IndexError(f"user index {k} out of range for U={U}")
    h = sample.channels[k]
    sig = np.abs(np.vdot(h, state.v_k[k])) ** 2
    interf = sample.config.noise_var
    for j in range(U):
        if j != k:
            interf += np.abs(np.vdot(h, state.v_k[j])) ** 2
    return float(sig / interf)


def common_stream_rate(sample: ChannelSample, state: BeamState, k: int) -> float:
    """Rate at which user k can decode the common stream (c_k)."""
    h = sample.channels[k]
    sig = np.abs(np.vdot(h, state.v0)) ** 2
    interf = sample.config.noise_var
    for j in range(sample.config.num_users):
        interf += np.abs(np.vdot(h, state.v_k[j])) ** 2
    return float(np.log2(1.0 + sig / interf))


def common_rate_capacity(sample: ChannelSample, state: BeamState) -> float:
    """Upper bound on the total common rate: min over users of c_k.

    Samples are generated weakest-user-first, so for generated data this
    equals c at user 0; the true minimum is taken regardless so unsorted
    external data stays correct.
    """
    U = sample.config.num_users
    return min(common_stream_rate(sample, state, k) for k in range(U))


def wsr(sample: ChannelSample, state: BeamState) -> float:
    """Weighted sum rate: sum_k alpha_k * (R_k^c + log2(1 + SINR_k))."""
    cfg = sample.config
    total = 0.0
    for k in range(cfg.num_users):
        rp = np.log2(1.0 + sinr(sample, state, k))
        total += cfg.weights[k] * (state.r_common[k] + rp)
    return float(total)


def check_feasibility(sample: ChannelSample, state: BeamState,
                      tol: float = 1e-9) -> FeasibilityReport:
    """Margins for the power, SINR and common-rate constraints."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    cfg = sample.config
    power_margin = cfg.power_budget - state.total_power()
    sinr_margins = np.array(
        [sinr(sample, state, k) - cfg.qos_sinr[k] for k in range(cfg.num_users)]
    )
    common_margin = common_rate_capacity(sample, state) - float(np.sum(state.r_common))
    feasible = bool(
        power_margin >= -tol
        and np.all(sinr_margins >= -tol)
        and common_margin >= -tol
    )
    return FeasibilityReport(
        power_margin=float(power_margin),
        sinr_margins=sinr_margins,
        common_rate_margin=float(common_margin),
        feasible=feasible,
    )
