"""Penalty objective, fractional-programming auxiliaries, analytic gradients
and a plain projected-gradient-descent solver.

The gradient formulas follow the quadratic-transform derivation.  The
auxiliary variable convention here is z = (h^H v) / denom; with this
convention the linear gradient terms carry z (not its conjugate), which is
what matches central finite differences of the penalty objective over
stacked real/imaginary coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import LN2, BeamState, ChannelSample, check_feasibility, wsr
from . import projection


@dataclass(frozen=True)
class AuxiliaryVars:
    z0: complex
    z_k: np.ndarray   # (U,)


@dataclass(frozen=True)
class PhiValues:
    phi0: float
    phi_k: np.ndarray  # (U,)

    @property
    def all_positive(self) -> bool:
        return bool(self.phi0 > 0.0 and np.all(self.phi_k > 0.0))


@dataclass(frozen=True)
class GradientSet:
    d_rc: np.ndarray    # (U,)
    d_v0: np.ndarray    # (M,) complex
    d_vk: np.ndarray    # (U, M) complex
    zeta: np.ndarray    # (U, M) complex
    beta: np.ndarray    # (U, U, M) complex, beta[j, k] with diagonal zero
    o_k: np.ndarray     # (U, M) complex


@dataclass(frozen=True)
class PgdConfig:
    """Step sizes, penalty factor and stopping rule for plain PGD."""

    l1: float = 0.05
    l2: float = 0.05
    l3: float = 0.05
    penalty: float = 1.0
    max_iters: int = 500
    tol: float = 1e-6
    backtracking: bool = False

    def __post_init__(self):
        if min(self.l1, self.l2, self.l3) < 0:
            raise ValueError("step sizes must be >= 0")
        if self.penalty <= 0:
            raise ValueError("penalty must be > 0")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")


def default_pgd_config(sample: ChannelSample, **overrides) -> PgdConfig:
    """PGD config with penalty 2*max(alpha), which keeps d_rc negative."""
    kw = dict(penalty=2.0 * float(np.max(sample.config.weights)))
    kw.update(overrides)
    return PgdConfig(**kw)


def _cross_gains(sample: ChannelSample, state: BeamState) -> np.ndarray:
    """g[k, j] = h_k^H v_j for private beamformers."""
    return np.einsum("km,jm->kj", sample.channels.conj(), state.v_k)


def update_aux(sample: ChannelSample, state: BeamState) -> AuxiliaryVars:
    """Quadratic-transform auxiliaries at the current state."""
    cfg = sample.config
    g = _cross_gains(sample, state)
    p = np.abs(g) ** 2
    denom = cfg.noise_var + np.sum(p, axis=1) - np.diag(p)
    z_k = np.diag(g) / denom
    h1 = sample.channels[0]
    den0 = cfg.noise_var + float(np.sum(p[0]))
    z0 = complex(np.vdot(h1, state.v0) / den0)
    return AuxiliaryVars(z0=z0, z_k=z_k)


def phi(sample: ChannelSample, state: BeamState, aux: AuxiliaryVars) -> PhiValues:
    """Surrogate SINR-plus-one terms; equals 1 + SINR when aux is fresh."""
    cfg = sample.config
    g = _cross_gains(sample, state)
    p = np.abs(g) ** 2
    interf = cfg.noise_var + np.sum(p, axis=1) - np.diag(p)
    phi_k = 1.0 + 2.0 * np.real(np.conj(aux.z_k) * np.diag(g)) \
        - np.abs(aux.z_k) ** 2 * interf
    h1 = sample.channels[0]
    interf0 = cfg.noise_var + float(np.sum(p[0]))
    phi0 = 1.0 + 2.0 * np.real(np.conj(aux.z0) * np.vdot(h1, state.v0)) \
        - np.abs(aux.z0) ** 2 * interf0
    return PhiValues(phi0=float(phi0), phi_k=np.asarray(phi_k, dtype=float))


def penalty_objective(sample: ChannelSample, state: BeamState,
                      aux: AuxiliaryVars, penalty: float) -> float:
    """F = sum_k alpha_k (R_k^c + log2 phi_k) - penalty*(sum R_k^c - log2 phi0)."""
    ph = phi(sample, state, aux)
    if not ph.all_positive:
        raise ValueError("nonpositive phi value; objective undefined")
    alpha = sample.config.weights
    f = float(np.sum(alpha * (state.r_common + np.log2(ph.phi_k))))
    f -= penalty * (float(np.sum(state.r_common)) - np.log2(ph.phi0))
    return f


def gradients(sample: ChannelSample, state: BeamState,
              aux: AuxiliaryVars, penalty: float) -> GradientSet:
    """Analytic ascent directions of the penalty objective at fixed aux."""
    cfg = sample.config
    U, M = cfg.num_users, cfg.num_antennas
    alpha = cfg.weights
    ph = phi(sample, state, aux)
    if not ph.all_positive:
        raise ValueError("nonpositive phi value; gradients undefined")

    d_rc = alpha - penalty

    h1 = sample.channels[0]
    d_v0 = 2.0 * penalty * aux.z0 * h1 / (ph.phi0 * LN2)

    zeta = (2.0 * alpha[:, None] * aux.z_k[:, None] * sample.channels) / LN2

    # beta[j, k] = -2 |z_j|^2 alpha_j h_j (h_j^H v_k) / ln2
    g = _cross_gains(sample, state)             # g[j, k] = h_j^H v_k
    coef = -2.0 * np.abs(aux.z_k) ** 2 * alpha / LN2
    beta = coef[:, None, None] * g[:, :, None] * sample.channels[:, None, :]
    beta[np.arange(U), np.arange(U)] = 0.0

    g0k = np.einsum("m,km->k", h1.conj(), state.v_k)  # h_1^H v_k
    o_k = (-2.0 * penalty * np.abs(aux.z0) ** 2 / (ph.phi0 * LN2)) \
        * g0k[:, None] * h1[None, :]

    d_vk = zeta / ph.phi_k[:, None] + o_k
    d_vk += np.einsum("jkm,j->km", beta, 1.0 / ph.phi_k)
    return GradientSet(d_rc=d_rc, d_v0=d_v0, d_vk=d_vk,
                       zeta=zeta, beta=beta, o_k=o_k)


def pgd_step(sample: ChannelSample, state: BeamState, aux: AuxiliaryVars,
             config: PgdConfig, step_scale: float = 1.0) -> BeamState:
    """One ascent step on the penalty objective followed by projection."""
    grad = gradients(sample, state, aux, config.penalty)
    tilde = BeamState(
        v0=state.v0 + step_scale * config.l2 * grad.d_v0,
        v_k=state.v_k + step_scale * config.l3 * grad.d_vk,
        r_common=state.r_common + step_scale * config.l1 * grad.d_rc,
    )
    return projection.project(sample, tilde)


def pgd_solve(sample: ChannelSample, config: PgdConfig,
              init: BeamState) -> tuple[BeamState, list[float]]:
    """Iterate update_aux -> pgd_step until the WSR change falls below tol.

    Returns the best-WSR feasible iterate seen (falling back to the best
    iterate overall if none was feasible) and the per-iteration WSR trace,
    whose first entry is the projected initial state.
    """
    state = projection.project(sample, init)
    cur_wsr = wsr(sample, state)
    trace = [cur_wsr]

    def is_feasible(s):
        rep = check_feasibility(sample, s, tol=1e-9)
        return rep.power_margin >= -1e-9 and np.all(rep.sinr_margins >= -1e-9)

    best, best_wsr = state, cur_wsr
    best_feasible = is_feasible(state)

    # With backtracking each iteration runs a fresh halving line search
    # from the configured step sizes; the iteration is converged when no
    # scale above the floor improves the WSR.  Without it, every step is
    # accepted at the configured sizes.
    for _ in range(config.max_iters):
        aux = update_aux(sample, state)
        scale = 1.0
        nxt = pgd_step(sample, state, aux, config, step_scale=scale)
        nxt_wsr = wsr(sample, nxt)
        if config.backtracking:
            while nxt_wsr <= cur_wsr and scale >= 1e-6:
                scale *= 0.5
                nxt = pgd_step(sample, state, aux, config, step_scale=scale)
                nxt_wsr = wsr(sample, nxt)
            if nxt_wsr <= cur_wsr:
                break
        trace.append(nxt_wsr)
        feas = is_feasible(nxt)
        if feas and (not best_feasible or nxt_wsr > best_wsr):
            best, best_wsr, best_feasible = nxt, nxt_wsr, True
        elif not best_feasible and nxt_wsr > best_wsr:
            best, best_wsr = nxt, nxt_wsr
        if abs(nxt_wsr - cur_wsr) < config.tol:
            state, cur_wsr = nxt, nxt_wsr
            break
        state, cur_wsr = nxt, nxt_wsr
    return best, trace
