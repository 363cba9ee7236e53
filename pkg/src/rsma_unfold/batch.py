"""Vectorized forward pass over a batch of samples.

Training probes the loss with central finite differences, which needs many
forward evaluations per update; this module evaluates the whole batch with
array operations.  It must agree with the per-sample pipeline in
unfold.forward to floating-point roundoff (tested), which is why every step
mirrors that code path exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LN2, ChannelSample
from .projection import _BUDGET_SAFETY, refine_powers_stack
from .unfold import ModelParams, RC_STEP

_ZERO_POWER_EPS = 1e-12


@dataclass(frozen=True)
class SampleBatch:
    """Array view of a list of samples sharing U and M."""

    h: np.ndarray        # (Q, U, M) complex
    alpha: np.ndarray    # (Q, U)
    r: np.ndarray        # (Q, U)
    sigma2: np.ndarray   # (Q,)
    p_max: np.ndarray    # (Q,)
    budget: np.ndarray   # (Q,)

    @property
    def size(self) -> int:
        return self.h.shape[0]


def make_batch(samples: list[ChannelSample]) -> SampleBatch:
    if not samples:
        raise ValueError("empty sample list")
    U = samples[0].config.num_users
    M = samples[0].config.num_antennas
    for s in samples:
        if (s.config.num_users, s.config.num_antennas) != (U, M):
            raise ValueError("samples must share U and M")
    return SampleBatch(
        h=np.stack([s.channels for s in samples]),
        alpha=np.stack([s.config.weights for s in samples]),
        r=np.stack([s.config.qos_sinr for s in samples]),
        sigma2=np.array([s.config.noise_var for s in samples]),
        p_max=np.array([s.config.p_max for s in samples]),
        budget=np.array([s.config.power_budget for s in samples]),
    )


def _project(batch: SampleBatch, v0, vk):
    """Batched power-factor projection; returns (v0, vk, rc)."""
    Q, U, M = batch.h.shape
    tilde = np.concatenate([vk, v0[:, None, :]], axis=1)       # (Q, U+1, M)
    a = np.sum(np.abs(tilde) ** 2, axis=2)                     # (Q, U+1)
    fb_h = np.concatenate([batch.h, batch.h[:, :1, :]], axis=1)
    fallback = fb_h.conj() / np.linalg.norm(fb_h, axis=2)[:, :, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        v_bar = np.where(
            (a > _ZERO_POWER_EPS)[:, :, None],
            tilde / np.sqrt(np.maximum(a, _ZERO_POWER_EPS))[:, :, None],
            fallback,
        )
    gains = np.abs(np.einsum("qkm,qjm->qkj", batch.h.conj(), v_bar)) ** 2
    A = np.zeros((Q, U + 1, U + 1))
    A[:, :U, :U] = -batch.r[:, :, None] * gains[:, :, :U]
    idx = np.arange(U)
    A[:, idx, idx] = gains[:, idx, idx]
    A[:, :U, U] = 0.0
    A[:, U, :] = -1.0
    b = np.concatenate([batch.r * batch.sigma2[:, None],
                        -batch.budget[:, None]], axis=1)
    K = A @ np.transpose(A, (0, 2, 1)) + np.eye(U + 1)
    d = np.einsum("qij,qj->qi", A, a) - b
    y = np.linalg.solve(K, d[:, :, None])[:, :, 0]
    omega = np.maximum(a - np.einsum("qji,qj->qi", A, y), 0.0)
    omega = refine_powers_stack(a, omega, A, b, gains, batch.r,
                                batch.sigma2, batch.budget)
    total = np.sum(omega, axis=1)
    over = total > batch.budget
    scale = np.where(over, batch.budget / np.maximum(total, 1e-300)
                     * (1.0 - _BUDGET_SAFETY), 1.0)
    omega = omega * scale[:, None]
    beams = np.sqrt(omega)[:, :, None] * v_bar
    vk_new = beams[:, :U, :]
    v0_new = beams[:, U, :]
    # common-rate reallocation: min_k c_k to the largest-weight user
    hv0 = np.einsum("qkm,qm->qk", batch.h.conj(), v0_new)
    p = np.abs(np.einsum("qkm,qjm->qkj", batch.h.conj(), vk_new)) ** 2
    den = batch.sigma2[:, None] + np.sum(p, axis=2)
    c = np.log2(1.0 + np.abs(hv0) ** 2 / den)
    cap = np.min(c, axis=1)
    rc = np.zeros((Q, U))
    rc[np.arange(Q), np.argmax(batch.alpha, axis=1)] = cap
    return v0_new, vk_new, rc


def _init_state(batch: SampleBatch):
    dirs = batch.h.conj()
    v0 = batch.h[:, 0, :].conj()
    total = np.sum(np.abs(dirs) ** 2, axis=(1, 2)) + np.sum(np.abs(v0) ** 2, axis=1)
    c = np.sqrt(0.9 * batch.budget / total)
    return c[:, None] * v0, c[:, None, None] * dirs


def _rates_and_violation(batch: SampleBatch, v0, vk, rc):
    p = np.abs(np.einsum("qkm,qjm->qkj", batch.h.conj(), vk)) ** 2
    idx = np.arange(batch.h.shape[1])
    own = p[:, idx, idx]
    interf = batch.sigma2[:, None] + np.sum(p, axis=2) - own
    sinr = own / interf
    wsr = np.sum(batch.alpha * (rc + np.log2(1.0 + sinr)), axis=1)
    power = (np.sum(np.abs(vk) ** 2, axis=(1, 2))
             + np.sum(np.abs(v0) ** 2, axis=1))
    viol = np.maximum(0.0, power - batch.budget)
    viol += np.sum(np.maximum(0.0, batch.r - sinr), axis=1)
    return wsr, viol, sinr, power


def forward_batch(batch: SampleBatch, model: ModelParams):
    """Run the unfolded network on a whole batch.

    Returns per-layer WSR (Q, N+1), per-layer violation (Q, N+1) and the
    final-layer state arrays (v0, vk, rc); index 0 is the projected init.
    """
    Q, U, M = batch.h.shape
    lam = model.penalty
    env = np.concatenate([batch.alpha, batch.p_max[:, None]], axis=1)  # (Q, U+1)
    v0, vk = _init_state(batch)
    v0, vk, rc = _project(batch, v0, vk)
    wsrs = [None] * (model.num_layers + 1)
    viols = [None] * (model.num_layers + 1)
    wsrs[0], viols[0], _, _ = _rates_and_violation(batch, v0, vk, rc)

    for n, layer in enumerate(model.layers, start=1):
        g = np.einsum("qkm,qjm->qkj", batch.h.conj(), vk)   # h_k^H v_j
        p = np.abs(g) ** 2
        idx = np.arange(U)
        own = p[:, idx, idx]
        interf = batch.sigma2[:, None] + np.sum(p, axis=2) - own
        z = g[:, idx, idx] / interf
        hv0 = np.einsum("qm,qm->q", batch.h[:, 0, :].conj(), v0)
        den0 = batch.sigma2 + np.sum(p[:, 0, :], axis=1)
        z0 = hv0 / den0
        phi_k = 1.0 + own / interf
        phi0 = 1.0 + np.abs(hv0) ** 2 / den0

        d_v0 = (2.0 * lam / LN2) * (z0 / phi0)[:, None] * batch.h[:, 0, :]
        zeta = (2.0 / LN2) * batch.alpha[:, :, None] * z[:, :, None] * batch.h
        # beta[q, j, k, :] = -2|z_j|^2 alpha_j h_j (h_j^H v_k) / ln2
        coef = (-2.0 / LN2) * np.abs(z) ** 2 * batch.alpha       # (Q, U)
        beta = (coef[:, :, None, None] * g[:, :, :, None]
                * batch.h[:, :, None, :])                        # (Q, U(j), U(k), M)
        g0k = np.einsum("qm,qkm->qk", batch.h[:, 0, :].conj(), vk)
        o = ((-2.0 * lam / LN2) * (np.abs(z0) ** 2 / phi0))[:, None, None] \
            * g0k[:, :, None] * batch.h[:, :1, :]                # (Q, U, M)

        # assemble G columns per user k: [zeta_k/phi_k, beta_{j,k}/phi_j (j!=k), o_k/lam]
        # layer parameters are either shared across the batch (model
        # shapes) or per-sample arrays with a leading Q axis (used by the
        # probe-vectorized finite-difference gradient)
        w0, w_k, eta_k = layer.w0, layer.w_k, layer.eta_k
        if w0.ndim == 1:
            step0 = LN2 * np.einsum("qi,i->q", env, w0) / lam
        else:
            step0 = LN2 * np.einsum("qi,qi->q", env, w0) / lam
        v0 = v0 + step0[:, None] * d_v0

        beta_w = beta / phi_k[:, :, None, None]                  # (Q, j, k, M)
        upd = np.empty_like(vk)
        for k in range(U):
            cols = [zeta[:, k, :] / phi_k[:, k, None]]
            cols.extend(beta_w[:, j, k, :] for j in range(U) if j != k)
            cols.append(o[:, k, :] / lam)
            G = np.stack(cols, axis=2)                           # (Q, M, U+1)
            if eta_k.ndim == 2:
                upd[:, k, :] = np.einsum("qmc,c->qm", G, eta_k[k])
            else:
                upd[:, k, :] = np.einsum("qmc,qc->qm", G, eta_k[:, k, :])
        if w_k.ndim == 2:
            stepk = LN2 * np.einsum("qi,ki->qk", env, w_k)       # (Q, U)
        else:
            stepk = LN2 * np.einsum("qi,qki->qk", env, w_k)
        vk = vk + stepk[:, :, None] * upd
        rc = rc + RC_STEP * (batch.alpha - lam)

        v0, vk, rc = _project(batch, v0, vk)
        wsrs[n], viols[n], _, _ = _rates_and_violation(batch, v0, vk, rc)

    return np.stack(wsrs, axis=1), np.stack(viols, axis=1), (v0, vk, rc)


def tile_batch(batch: SampleBatch, reps: int) -> SampleBatch:
    """Concatenate `reps` copies of the batch (probe-major ordering)."""
    return SampleBatch(
        h=np.tile(batch.h, (reps, 1, 1)),
        alpha=np.tile(batch.alpha, (reps, 1)),
        r=np.tile(batch.r, (reps, 1)),
        sigma2=np.tile(batch.sigma2, reps),
        p_max=np.tile(batch.p_max, reps),
        budget=np.tile(batch.budget, reps),
    )


def loss_batch_elements(batch: SampleBatch, model: ModelParams) -> np.ndarray:
    """Per-sample loss contributions; their mean equals loss_batch."""
    wsr_mat, viol_mat, _ = forward_batch(batch, model)
    n = model.num_layers
    weights = np.log2(np.arange(1, n + 1) + 1.0)
    return (-(wsr_mat[:, 1:] @ weights) / n) + viol_mat[:, 1:] @ weights


def loss_batch(batch: SampleBatch, model: ModelParams) -> float:
    """Training loss over a batch, matching unfold.loss."""
    return float(np.mean(loss_batch_elements(batch, model)))
