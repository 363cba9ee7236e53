"""Power-factor projection: keep beam directions, project per-beam powers
onto the slack-augmented affine system encoding the SINR and power
constraints, then reallocate the common rate.

Power-vector ordering is [private 1..U, common], matching the constraint
matrix layout.  The slack convention is A_aug = [A | -I], so A w >= b is
equivalent to nonnegative slacks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    BeamState,
    ChannelSample,
    ScenarioConfig,
    common_rate_capacity,
    check_feasibility,
)

_ZERO_POWER_EPS = 1e-12


@dataclass(frozen=True)
class ProjectionSystem:
    a: np.ndarray        # (U+1,) squared beam norms, [privates..., common]
    v_bar: np.ndarray    # (U+1, M) unit-norm directions, same ordering
    A: np.ndarray        # (U+1, U+1)
    A_aug: np.ndarray    # (U+1, 2(U+1)) = [A | -I]
    b: np.ndarray        # (U+1,)
    gains: np.ndarray    # (U, U+1) |h_k^H v_bar_j|^2, for hinge evaluation
    qos: np.ndarray      # (U,) SINR targets
    noise_var: float
    budget: float


@dataclass(frozen=True)
class ProjectedPowers:
    omega: np.ndarray    # (U+1,)
    psi: np.ndarray      # (U+1,)
    residual: float


class ProjectionError(RuntimeError):
    """Raised when the affine projection solve fails numerically."""


def power_split(sample: ChannelSample, state: BeamState) -> tuple[np.ndarray, np.ndarray]:
    """Split beamformers into squared-norm powers and unit directions.

    Beams with (numerically) zero power get the normalized conjugate
    channel as direction, the common beam using the weakest user's channel.
    """
    U = sample.config.num_users
    tilde = np.vstack([state.v_k, state.v0[None, :]])
    a = np.sum(np.abs(tilde) ** 2, axis=1)
    fallback_h = np.vstack([sample.channels, sample.channels[0][None, :]])
    fallback = fallback_h.conj() / np.linalg.norm(fallback_h, axis=1)[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        v_bar = np.where(
            (a > _ZERO_POWER_EPS)[:, None],
            tilde / np.sqrt(np.maximum(a, _ZERO_POWER_EPS))[:, None],
            fallback,
        )
    return a, v_bar


def build_constraint_system(sample: ChannelSample, a: np.ndarray,
                            v_bar: np.ndarray,
                            config: ScenarioConfig | None = None) -> ProjectionSystem:
    """Assemble the SINR-row/power-row constraint matrix and its augmentation."""
    cfg = config or sample.config
    U = cfg.num_users
    # gains[k, j] = |h_k^H v_bar_j|^2 over all U+1 directions
    gains = np.abs(np.einsum("km,jm->kj", sample.channels.conj(), v_bar)) ** 2
    A = np.zeros((U + 1, U + 1))
    for k in range(U):
        A[k, :U] = -cfg.qos_sinr[k] * gains[k, :U]
        A[k, k] = gains[k, k]
        A[k, U] = 0.0
    A[U, :] = -1.0
    A_aug = np.hstack([A, -np.eye(U + 1)])
    b = np.concatenate([cfg.qos_sinr * cfg.noise_var, [-cfg.power_budget]])
    return ProjectionSystem(a=np.asarray(a, dtype=float), v_bar=v_bar,
                            A=A, A_aug=A_aug, b=b, gains=gains,
                            qos=cfg.qos_sinr, noise_var=cfg.noise_var,
                            budget=cfg.power_budget)


def affine_project(a: np.ndarray, system: ProjectionSystem) -> ProjectedPowers:
    """Project [a; 0] onto {A_aug w = b} in closed form.

    Uses a direct solve of (A_aug A_aug^T) = A A^T + I, which is symmetric
    positive definite; falls back to a pseudo-inverse with singular-value
    cutoff if the solve fails.
    """
    A = system.A
    n = A.shape[0]
    K = A @ A.T + np.eye(n)
    d = A @ a - system.b
    try:
        y = np.linalg.solve(K, d)
    except np.linalg.LinAlgError:
        try:
            y = np.linalg.pinv(K, rcond=1e-10) @ d
        except np.linalg.LinAlgError as exc:
            raise ProjectionError(
                f"affine projection failed; cond(A)={np.linalg.cond(A):.3e}"
            ) from exc
    omega = a - A.T @ y
    psi = y
    residual = float(np.linalg.norm(A @ omega - psi - system.b))
    return ProjectedPowers(omega=omega, psi=psi, residual=residual)


def apply_power(v_bar: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Rescale unit directions by projected powers, clamping negatives to 0."""
    return np.sqrt(np.maximum(omega, 0.0))[:, None] * v_bar


# Relative shrink applied when the projected powers overshoot the budget;
# keeps the rescaled total strictly below the budget despite rounding.
_BUDGET_SAFETY = 1e-9

# Feasibility-repair constants.  _REPAIR_BIAS is the relative margin
# targeted beyond each constraint so repaired states end strictly inside
# the feasible set despite the finite accuracy of the solvers.
# _DUAL_ITERS bounds the accelerated dual ascent for the closest-feasible
# -powers problem; _REPAIR_MAX_ITERS / _REPAIR_STALL bound the polish
# loop (give up when the violation hinge stops shrinking: inconsistent
# direction sets, counted by the violation metrics).
_REPAIR_BIAS = 1e-6
_DUAL_ITERS = 80
_REPAIR_MAX_ITERS = 50
_REPAIR_STALL = 0.995


def power_hinge(omega: np.ndarray, system: ProjectionSystem) -> float:
    """Violation hinge of a power vector: power excess plus SINR deficits.

    Matches the violation factor evaluated on the rescaled beamformers,
    expressed directly in terms of the powers and the direction gains.
    """
    U = system.qos.shape[0]
    own = np.diag(system.gains[:, :U]) * omega[:U]
    interf = system.noise_var + system.gains[:, :U] @ omega[:U] - own
    hinge = float(np.sum(np.maximum(0.0, system.qos - own / interf)))
    return hinge + max(0.0, float(np.sum(omega)) - system.budget)


def _hinge_stack(om: np.ndarray, gkj: np.ndarray, own_gain: np.ndarray,
                 qos: np.ndarray, sigma2: np.ndarray,
                 budget: np.ndarray) -> np.ndarray:
    """Vectorized power_hinge over a stack of (powers, system) pairs."""
    U = qos.shape[1]
    ow = own_gain * om[:, :U]
    interf = sigma2[:, None] + np.einsum("qkj,qj->qk", gkj, om[:, :U]) - ow
    h = np.sum(np.maximum(0.0, qos - ow / interf), axis=1)
    return h + np.maximum(0.0, np.sum(om, axis=1) - budget)


def refine_powers_stack(a: np.ndarray, omega: np.ndarray, A: np.ndarray,
                        b: np.ndarray, gains: np.ndarray, qos: np.ndarray,
                        sigma2: np.ndarray, budget: np.ndarray,
                        max_iters: int = _REPAIR_MAX_ITERS) -> np.ndarray:
    """Feasibility repair for a stack of projected power vectors.

    The single closed-form pass only removes part of each violation (the
    correction is split between the powers and the slacks), so its output
    can stay infeasible.  For samples still violating, this solves the
    closest-feasible-powers problem

        min ||w - a||^2  s.t.  A w >= b (with margin), w >= 0

    by accelerated projected ascent on its dual, then polishes with a few
    passes of re-projection onto the still-violated rows.  Every candidate
    is scored by its violation hinge and the best one per sample is
    returned, so the repair never does worse than the closed-form pass.
    Leftover violations (inconsistent direction sets, for which the dual
    diverges) are counted by the violation metrics.
    """
    Q, n = omega.shape
    gkj = gains[:, :, : qos.shape[1]]
    idx = np.arange(qos.shape[1])
    own_gain = gkj[:, idx, idx]
    target = b + _REPAIR_BIAS * (1.0 + np.abs(b))
    eye = np.eye(n)

    def hinges(om: np.ndarray, sel: np.ndarray) -> np.ndarray:
        return _hinge_stack(om, gkj[sel], own_gain[sel], qos[sel],
                            sigma2[sel], budget[sel])

    best = np.maximum(omega, 0.0)
    best_hinge = hinges(best, np.arange(Q))
    act = np.flatnonzero(best_hinge > 0.0)
    if act.size == 0:
        return best

    # Stage 1: closest feasible powers via the dual quadratic program.
    # With C = [A; I] and d = [target; 0] the primal optimum is
    # w = a + C^T lam for the nonnegative dual maximizer lam; the trace of
    # C C^T bounds its largest eigenvalue, giving a safe FISTA step.
    C = np.concatenate(
        [A[act], np.broadcast_to(eye, (act.size, n, n))], axis=1)
    d = np.concatenate([target[act], np.zeros((act.size, n))], axis=1)
    G = C @ np.transpose(C, (0, 2, 1))
    q = d - np.einsum("qij,qj->qi", C, a[act])
    L = np.einsum("qii->q", G)
    lam = np.zeros((act.size, 2 * n))
    mom = lam
    t_prev = 1.0
    for _ in range(_DUAL_ITERS):
        grad = np.einsum("qij,qj->qi", G, mom) - q
        lam_new = np.maximum(0.0, mom - grad / L[:, None])
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_prev * t_prev))
        mom = lam_new + ((t_prev - 1.0) / t_new) * (lam_new - lam)
        lam, t_prev = lam_new, t_new
    om_act = np.maximum(a[act] + np.einsum("qji,qj->qi", C, lam), 0.0)
    h_act = hinges(om_act, act)
    improved = h_act < best_hinge[act]
    upd = act[improved]
    best[upd] = om_act[improved]
    best_hinge[upd] = h_act[improved]

    # Stage 2: polish the remaining violations by re-projecting onto the
    # equality system of the currently violated rows, restricted each pass
    # to samples still improving.
    cur = best.copy()
    prev_hinge = best_hinge.copy()
    act = np.flatnonzero(best_hinge > 0.0)
    for _ in range(max_iters):
        if act.size == 0:
            break
        resid = np.einsum("qij,qj->qi", A[act], cur[act]) - target[act]
        mask = resid < 0.0
        Av = A[act] * mask[:, :, None]
        rv = np.where(mask, resid, 0.0)
        K = Av @ np.transpose(Av, (0, 2, 1))
        reg = 1e-12 * (1.0 + np.einsum("qii->q", K))
        K = K + reg[:, None, None] * eye
        try:
            yv = np.linalg.solve(K, rv[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            yv = np.einsum("qij,qj->qi", np.linalg.pinv(K, rcond=1e-12), rv)
        cur[act] = np.maximum(
            cur[act] - np.einsum("qji,qj->qi", Av, yv), 0.0)
        hinge = hinges(cur[act], act)
        improved = hinge < best_hinge[act]
        upd = act[improved]
        best[upd] = cur[upd]
        best_hinge[upd] = hinge[improved]
        keep = (hinge > 0.0) & (hinge < _REPAIR_STALL * prev_hinge[act])
        prev_hinge[act] = hinge
        act = act[keep]
    return best


def repair_powers(omega: np.ndarray, system: ProjectionSystem,
                  max_iters: int = _REPAIR_MAX_ITERS) -> np.ndarray:
    """Single-system wrapper around refine_powers_stack."""
    out = refine_powers_stack(
        system.a[None, :], omega[None, :], system.A[None, :, :],
        system.b[None, :], system.gains[None, :, :],
        np.asarray(system.qos, dtype=float)[None, :],
        np.array([system.noise_var]), np.array([system.budget]),
        max_iters=max_iters)
    return out[0]


def enforce_budget(omega: np.ndarray, budget: float) -> np.ndarray:
    """Clamp negative powers and uniformly rescale if the total exceeds
    the power budget.

    The joint slack projection can leave the power-row slack negative
    (total power above budget) when the incoming powers overshoot, so a
    uniform rescale of the clamped powers is the minimal correction that
    preserves the power split and the beam directions.
    """
    omega = np.maximum(omega, 0.0)
    total = float(np.sum(omega))
    if total > budget:
        omega = omega * (budget / total) * (1.0 - _BUDGET_SAFETY)
    return omega


def project_common_rate(sample: ChannelSample, state: BeamState) -> np.ndarray:
    """Give the full common-rate capacity to the largest-weight user.

    Ties break toward the lowest user index; every other user gets zero.
    """
    cfg = sample.config
    rc = np.zeros(cfg.num_users)
    rc[int(np.argmax(cfg.weights))] = common_rate_capacity(sample, state)
    return rc


def project(sample: ChannelSample, state: BeamState,
            config: ScenarioConfig | None = None,
            mode: str = "always") -> BeamState:
    """Full projection pipeline: split powers, project, rescale, set R^c.

    mode "always" projects unconditionally (even feasible states are
    perturbed toward active constraints because slacks start at zero);
    "skip_if_feasible" leaves power/SINR-feasible beamformers untouched and
    only reallocates the common rate.
    """
    if mode not in ("always", "skip_if_feasible"):
        raise ValueError(f"unknown projection mode: {mode}")
    cfg = config or sample.config
    if mode == "skip_if_feasible":
        rep = check_feasibility(sample, state, tol=1e-9)
        if rep.power_margin >= -1e-9 and np.all(rep.sinr_margins >= -1e-9):
            return BeamState(v0=state.v0, v_k=state.v_k,
                             r_common=project_common_rate(sample, state))
    a, v_bar = power_split(sample, state)
    system = build_constraint_system(sample, a, v_bar, cfg)
    powers = affine_project(a, system)
    omega = repair_powers(powers.omega, system)
    beams = apply_power(v_bar, enforce_budget(omega, cfg.power_budget))
    U = cfg.num_users
    new_state = BeamState(v0=beams[U], v_k=beams[:U],
                          r_common=np.zeros(U))
    return BeamState(v0=new_state.v0, v_k=new_state.v_k,
                     r_common=project_common_rate(sample, new_state))
