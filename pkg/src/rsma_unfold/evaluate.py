"""Evaluation harness: ASR, strict violation counting, loss decomposition,
out-of-distribution sweeps and runtime benchmarking."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .model import BeamState, ChannelSample, check_feasibility, sinr
from .model import wsr as wsr_fn
from .pgd import PgdConfig, pgd_solve
from .unfold import ForwardTrace, ModelParams, forward, init_state

# Reference solver for ASR and runtime comparisons: long-run PGD with
# halving/doubling backtracking, run to convergence of the WSR trace.
ORACLE_MAX_ITERS = 2000
ORACLE_TOL = 1e-8


def pgd_oracle(sample: ChannelSample,
               max_iters: int = ORACLE_MAX_ITERS,
               tol: float = ORACLE_TOL) -> BeamState:
    """Best beam state found by the backtracking PGD oracle for one sample."""
    cfg = PgdConfig(penalty=2.0 * float(np.max(sample.config.weights)),
                    max_iters=max_iters, tol=tol, backtracking=True)
    state, _ = pgd_solve(sample, cfg, init_state(sample))
    return state


@dataclass(frozen=True)
class MetricsReport:
    asr: float
    violation_rate: float
    per_layer_asr: np.ndarray
    tpfv: float
    lpfv: float
    twsr: float
    lwsr: float
    n_samples: int
    reference: str
    excluded: int = 0

    def to_dict(self) -> dict:
        return {
            "asr": self.asr,
            "violation_rate": self.violation_rate,
            "per_layer_asr": list(self.per_layer_asr),
            "tpfv": self.tpfv,
            "lpfv": self.lpfv,
            "twsr": self.twsr,
            "lwsr": self.lwsr,
            "n_samples": self.n_samples,
            "reference": self.reference,
            "excluded": self.excluded,
            "violation_counting": "per-constraint, strict (tol 0)",
        }


def asr(predicted: np.ndarray, reference: np.ndarray) -> tuple[float, int]:
    """Mean ratio predicted/reference; nonpositive references are excluded
    and counted.  Returns (asr, n_excluded)."""
    predicted = np.asarray(predicted, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if predicted.shape != reference.shape:
        raise ValueError("prediction/reference length mismatch")
    keep = reference > 0
    excluded = int(np.sum(~keep))
    if not np.any(keep):
        raise ValueError("no positive reference values")
    return float(np.mean(predicted[keep] / reference[keep])), excluded


def violation_rate(states: list[BeamState],
                   samples: list[ChannelSample]) -> float:
    """Strict per-constraint violation fraction: U SINR constraints plus one
    power constraint per sample, counted at tolerance 0."""
    if not states:
        raise ValueError("empty batch")
    count = 0
    total = 0
    for sample, state in zip(samples, states):
        cfg = sample.config
        if state.total_power() > cfg.power_budget:
            count += 1
        for k in range(cfg.num_users):
            if sinr(sample, state, k) < cfg.qos_sinr[k]:
                count += 1
        total += cfg.num_users + 1
    return count / total


def loss_decomposition(traces: list[ForwardTrace]) -> tuple[float, float, float, float]:
    """TPFV, LPFV, TWSR, LWSR of a batch of forward traces."""
    n = traces[0].num_layers
    if any(t.num_layers != n for t in traces) or n == 0:
        raise ValueError("traces must share a layer count >= 1")
    q = len(traces)
    w = np.log2(np.arange(1, n + 1) + 1.0)
    wsr_mat = np.stack([t.wsr[1:] for t in traces])
    viol_mat = np.stack([t.violation[1:] for t in traces])
    xi = np.mean(viol_mat, axis=0)
    tpfv = float(np.sum(w * xi)) / n
    lpfv = float(w[-1] * xi[-1])
    twsr = -float(np.sum(w * wsr_mat)) / (q * n)
    lwsr = -float(w[-1] * np.mean(wsr_mat[:, -1]))
    return tpfv, lpfv, twsr, lwsr


def pgd_reference(sample: ChannelSample) -> float:
    """Oracle WSR for one sample (backtracking PGD, see pgd_oracle)."""
    return wsr_fn(sample, pgd_oracle(sample))


def evaluate(model: ModelParams, samples: list[ChannelSample],
             reference: str = "pgd",
             reference_wsr: np.ndarray | None = None) -> MetricsReport:
    """Run the model on a testset and report ASR plus violation metrics.

    reference "label" uses dataset wsr_opt labels, "pgd" the PGD oracle;
    precomputed oracle values can be passed to avoid re-solving.
    """
    if reference not in ("label", "pgd"):
        raise ValueError("reference must be 'label' or 'pgd'")
    traces = [forward(s, model) for s in samples]
    preds = np.array([t.wsr[-1] for t in traces])
    if reference == "label":
        missing = [i for i, s in enumerate(samples) if s.label is None]
        if missing:
            raise ValueError(f"{len(missing)} samples lack labels")
        refs = np.array([s.label.wsr_opt for s in samples])
    elif reference_wsr is not None:
        refs = np.asarray(reference_wsr, dtype=float)
    else:
        refs = np.array([pgd_reference(s) for s in samples])
    asr_val, excluded = asr(preds, refs)
    n = traces[0].num_layers
    per_layer = np.empty(n)
    keep = refs > 0
    for i in range(n):
        layer_preds = np.array([t.wsr[i + 1] for t in traces])
        per_layer[i] = float(np.mean(layer_preds[keep] / refs[keep]))
    vr = violation_rate([t.states[-1] for t in traces], samples)
    tpfv, lpfv, twsr, lwsr = loss_decomposition(traces)
    return MetricsReport(asr=asr_val, violation_rate=vr, per_layer_asr=per_layer,
                         tpfv=tpfv, lpfv=lpfv, twsr=twsr, lwsr=lwsr,
                         n_samples=len(samples), reference=reference,
                         excluded=excluded)


def ood_sweep(model: ModelParams, axis: str, values: list[float],
              base: dict, n_samples: int, seed: int,
              reference: str = "pgd") -> list[dict]:
    """Evaluate the fixed model on testsets regenerated with one shifted
    parameter.  base holds the generation kwargs of the training setting."""
    from .dataio import generate_dataset

    if axis not in ("snr_db", "p_max_dbm", "qos_shift"):
        raise ValueError(f"unknown sweep axis: {axis}")
    rows = []
    for value in values:
        kw = dict(base)
        if axis == "snr_db":
            kw["snr_db"] = value
        elif axis == "p_max_dbm":
            kw["p_max_w"] = dbm_to_watt(value)
        else:
            kw["qos_shift"] = value
        samples = generate_dataset(n=n_samples, seed=seed, **kw)
        report = evaluate(model, samples, reference=reference)
        rows.append({"axis": axis, "value": value, "asr": report.asr,
                     "violation_rate": report.violation_rate})
    return rows


def runtime_bench(model: ModelParams, samples: list[ChannelSample],
                  n_trials: int) -> dict:
    """Wall-clock per-sample solve times for the DU forward pass and the
    PGD oracle over n_trials samples (cycled if fewer are given)."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    du_times = np.empty(n_trials)
    pgd_times = np.empty(n_trials)
    for i in range(n_trials):
        s = samples[i % len(samples)]
        t0 = time.perf_counter()
        forward(s, model)
        du_times[i] = time.perf_counter() - t0
        t0 = time.perf_counter()
        pgd_oracle(s)
        pgd_times[i] = time.perf_counter() - t0
    return {
        "du": du_times,
        "pgd": pgd_times,
        "du_median": float(np.median(du_times)),
        "pgd_median": float(np.median(pgd_times)),
        "du_variance": float(np.var(du_times)),
        "pgd_variance": float(np.var(pgd_times)),
    }


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 30.0 + 10.0 * np.log10(watt)
