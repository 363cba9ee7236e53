"""Deep-unfolded network: per-layer learnable gradient reweighting on top of
the PGD iteration, violation factor, and the multi-layer training loss.

Each layer holds (U+1)-dim vectors w0 and, per user, w_k and eta_k.  The
environment vector phi = [alpha_1..alpha_U, p_max] turns w into a scalar
step, and eta_k reweights the gradient components [zeta_k/phi_k,
beta_{j,k}/phi_j (j != k ascending), o_k/lambda].  Setting all eta entries
to recover the plain gradient sum makes a layer coincide with one PGD step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import LN2, BeamState, ChannelSample, ScenarioConfig, sinr, wsr
from .pgd import gradients, update_aux, phi as phi_values
from .projection import project

# Step used for the common-rate gradient update inside a layer.  The
# common-rate reallocation right after projection overwrites R^c, so this
# constant carries no learnable parameter.
RC_STEP = 0.05


@dataclass(frozen=True)
class LayerParams:
    w0: np.ndarray      # (U+1,)
    w_k: np.ndarray     # (U, U+1)
    eta_k: np.ndarray   # (U, U+1)

    def __post_init__(self):
        object.__setattr__(self, "w0", np.asarray(self.w0, dtype=float))
        object.__setattr__(self, "w_k", np.asarray(self.w_k, dtype=float))
        object.__setattr__(self, "eta_k", np.asarray(self.eta_k, dtype=float))

    @property
    def num_users(self) -> int:
        return self.w0.shape[0] - 1


@dataclass(frozen=True)
class ModelParams:
    layers: tuple[LayerParams, ...]
    penalty: float
    num_users: int
    num_antennas: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class ForwardTrace:
    """States and diagnostics along the layer sequence.

    states[0] is the projected initializer; states[n] is the n-th layer
    output.  wsr and violation align with states (length N+1).
    """
    states: tuple[BeamState, ...]
    wsr: np.ndarray
    violation: np.ndarray

    @property
    def num_layers(self) -> int:
        return len(self.states) - 1


def env_vector(sample: ChannelSample) -> np.ndarray:
    """Environment pattern vector: [alpha_1..alpha_U, p_max]."""
    cfg = sample.config
    return np.concatenate([cfg.weights, [cfg.p_max]])


def init_state(sample: ChannelSample) -> BeamState:
    """Conjugate-channel beamformers scaled to 90% of the power budget."""
    cfg = sample.config
    dirs = sample.channels.conj()
    v0 = sample.channels[0].conj()
    total = float(np.sum(np.abs(dirs) ** 2) + np.sum(np.abs(v0) ** 2))
    c = np.sqrt(0.9 * cfg.power_budget / total)
    return BeamState(v0=c * v0, v_k=c * dirs, r_common=np.zeros(cfg.num_users))


def violation_amount(sample: ChannelSample, state: BeamState) -> float:
    """Hinge power excess plus per-user hinge SINR shortfalls for one state."""
    cfg = sample.config
    v = max(0.0, state.total_power() + cfg.p_c - cfg.p_max)
    for k in range(cfg.num_users):
        v += max(0.0, cfg.qos_sinr[k] - sinr(sample, state, k))
    return v


def violation_factor(states: list[BeamState], samples: list[ChannelSample]) -> float:
    """Batch-mean violation (power hinge + SINR hinges per sample)."""
    if not states:
        raise ValueError("empty batch")
    return float(np.mean([violation_amount(s, st)
                          for s, st in zip(samples, states)]))


def layer_forward(sample: ChannelSample, state: BeamState, layer: LayerParams,
                  penalty: float, env: np.ndarray | None = None,
                  rc_step: float = RC_STEP) -> BeamState:
    """One unfolded layer: learnable gradient update, then projection."""
    cfg = sample.config
    U = cfg.num_users
    if env is None:
        env = env_vector(sample)
    aux = update_aux(sample, state)
    grad = gradients(sample, state, aux, penalty)
    ph = phi_values(sample, state, aux)

    v0_step = LN2 * float(env @ layer.w0) / penalty
    v0_new = state.v0 + v0_step * grad.d_v0

    vk_new = np.empty_like(state.v_k)
    for k in range(U):
        cols = [grad.zeta[k] / ph.phi_k[k]]
        cols.extend(grad.beta[j, k] / ph.phi_k[j] for j in range(U) if j != k)
        cols.append(grad.o_k[k] / penalty)
        G = np.stack(cols, axis=1)                    # (M, U+1)
        step = LN2 * float(env @ layer.w_k[k])
        vk_new[k] = state.v_k[k] + step * (G @ layer.eta_k[k])

    rc_new = state.r_common + rc_step * grad.d_rc
    tilde = BeamState(v0=v0_new, v_k=vk_new, r_common=rc_new)
    return project(sample, tilde)


def forward(sample: ChannelSample, model: ModelParams) -> ForwardTrace:
    """Project the initializer, then run all layers, recording diagnostics."""
    cfg = sample.config
    if (cfg.num_users, cfg.num_antennas) != (model.num_users, model.num_antennas):
        raise ValueError("sample dimensions do not match the model")
    env = env_vector(sample)
    state = project(sample, init_state(sample))
    states = [state]
    for layer in model.layers:
        state = layer_forward(sample, state, layer, model.penalty, env)
        states.append(state)
    wsrs = np.array([wsr(sample, s) for s in states])
    viol = np.array([violation_amount(sample, s) for s in states])
    return ForwardTrace(states=tuple(states), wsr=wsrs, violation=viol)


def loss(traces: list[ForwardTrace]) -> float:
    """Log-weighted negative per-layer WSR plus log-weighted violation factors."""
    if not traces:
        raise ValueError("empty batch")
    n_layers = traces[0].num_layers
    if any(t.num_layers != n_layers for t in traces):
        raise ValueError("inconsistent layer counts in batch")
    if n_layers == 0:
        raise ValueError("loss needs at least one layer")
    q = len(traces)
    weights = np.log2(np.arange(1, n_layers + 1) + 1.0)
    wsr_mat = np.stack([t.wsr[1:] for t in traces])          # (Q, N)
    viol_mat = np.stack([t.violation[1:] for t in traces])   # (Q, N)
    wsr_term = -float(np.sum(weights * wsr_mat)) / (q * n_layers)
    viol_term = float(np.sum(weights * np.mean(viol_mat, axis=0)))
    return wsr_term + viol_term


def init_model(config: ScenarioConfig, n_layers: int, penalty: float,
               seed: int, init_step: float = 0.05) -> ModelParams:
    """Near-PGD initialization: eta at 1 and w giving a small positive step.

    The base w value is chosen so (phi . w) * ln2 / penalty equals
    init_step for uniform weights, plus a small seeded jitter.
    """
    rng = np.random.default_rng(seed)
    U = config.num_users
    phi_sum = float(np.sum(config.weights) + config.p_max)
    base0 = init_step * penalty / (LN2 * phi_sum)
    basek = init_step / (LN2 * phi_sum)
    jitter = 0.01 / config.p_max
    layers = []
    for _ in range(n_layers):
        w0 = base0 + rng.uniform(-jitter, jitter, size=U + 1)
        w_k = basek + rng.uniform(-jitter, jitter, size=(U, U + 1))
        eta = np.ones((U, U + 1))
        layers.append(LayerParams(w0=w0, w_k=w_k, eta_k=eta))
    return ModelParams(layers=tuple(layers), penalty=penalty,
                       num_users=U, num_antennas=config.num_antennas)


def pgd_equivalent_layer(config: ScenarioConfig, l2: float, l3: float,
                         penalty: float) -> LayerParams:
    """LayerParams that make layer_forward coincide with one PGD step."""
    U = config.num_users
    w0 = np.zeros(U + 1)
    w0[U] = l2 * penalty / (LN2 * config.p_max)
    w_k = np.zeros((U, U + 1))
    w_k[:, U] = l3 / (LN2 * config.p_max)
    eta = np.ones((U, U + 1))
    eta[:, U] = penalty
    return LayerParams(w0=w0, w_k=w_k, eta_k=eta)
