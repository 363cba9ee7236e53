"""JSONL dataset records shared with the rsma-unfold tooling.

Each line carries {"users", "antennas", "h_re", "h_im", "alpha", "r",
"sigma2", "p_max_w", "p_c_w"} plus optional label fields {"wsr_opt",
"v_re", "v_im", "r_common"}.  Beamformer arrays are (U+1) x M with row 0
the common beam and rows 1..U the private beams.  This module only
depends on that schema, not on the solver package that produced it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np


@dataclass(frozen=True)
class FpSample:
    """One downlink scenario: channels (U, M) plus scenario scalars."""
    channels: np.ndarray
    weights: np.ndarray
    qos_sinr: np.ndarray
    noise_var: float
    p_max: float
    p_c: float

    @property
    def num_users(self) -> int:
        return self.channels.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.channels.shape[1]

    @property
    def budget(self) -> float:
        """Transmit power available to the beamformers."""
        return self.p_max - self.p_c

    @property
    def weakest_user(self) -> int:
        """Index of the user with the lowest channel gain; the common
        stream must be decodable by this user."""
        return int(np.argmin(np.sum(np.abs(self.channels) ** 2, axis=1)))


@dataclass(frozen=True)
class FpLabel:
    """A solved benchmark label: beams (U+1, M), common-rate split (U,)."""
    wsr_opt: float
    beams: np.ndarray
    r_common: np.ndarray


def record_to_sample(rec: dict) -> FpSample:
    h = np.array(rec["h_re"], dtype=float) + 1j * np.array(rec["h_im"],
                                                           dtype=float)
    u, m = int(rec["users"]), int(rec["antennas"])
    if h.shape != (u, m):
        raise ValueError(f"channel shape {h.shape} != ({u}, {m})")
    return FpSample(
        channels=h,
        weights=np.array(rec["alpha"], dtype=float),
        qos_sinr=np.array(rec["r"], dtype=float),
        noise_var=float(rec["sigma2"]),
        p_max=float(rec["p_max_w"]),
        p_c=float(rec["p_c_w"]),
    )


def attach_label(rec: dict, label: FpLabel) -> dict:
    """Copy of rec with the label fields set (overwriting any old label)."""
    out = dict(rec)
    out["wsr_opt"] = float(label.wsr_opt)
    out["v_re"] = label.beams.real.tolist()
    out["v_im"] = label.beams.imag.tolist()
    out["r_common"] = np.asarray(label.r_common, dtype=float).tolist()
    return out


def read_records(path: str) -> list[dict]:
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def write_records(path: str, records: Iterable[dict]) -> None:
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")


def sinr(sample: FpSample, beams: np.ndarray) -> np.ndarray:
    """Private-stream SINR per user for beams (U+1, M), row 0 common."""
    h = sample.channels
    gains = np.abs(h @ beams[1:].conj().T) ** 2  # [k, j] = |h_k^H v_j|^2
    own = np.diag(gains)
    interference = sample.noise_var + gains.sum(axis=1) - own
    return own / interference


def common_capacity(sample: FpSample, beams: np.ndarray) -> float:
    """Common-stream rate bound: the common rate every user can decode,
    i.e. the minimum over users of their common-stream capacity."""
    h = sample.channels
    num = np.abs(h.conj() @ beams[0]) ** 2
    den = sample.noise_var + np.sum(np.abs(h.conj() @ beams[1:].T) ** 2,
                                    axis=1)
    return float(np.min(np.log2(1.0 + num / den)))


def wsr(sample: FpSample, beams: np.ndarray, r_common: np.ndarray) -> float:
    """Weighted sum rate of a beam assignment with a common-rate split."""
    rates = np.log2(1.0 + sinr(sample, beams))
    return float(np.sum(sample.weights * (np.asarray(r_common) + rates)))


def feasibility_margins(sample: FpSample, beams: np.ndarray,
                        r_common: np.ndarray) -> dict:
    """Signed slack of every constraint (negative = violated)."""
    r_common = np.asarray(r_common, dtype=float)
    power = sample.budget - float(np.sum(np.abs(beams) ** 2))
    qos = sinr(sample, beams) - sample.qos_sinr
    common = common_capacity(sample, beams) - float(np.sum(r_common))
    return {"power": power, "qos": qos, "common": common,
            "r_common": r_common.min(initial=np.inf)}


def is_feasible(sample: FpSample, beams: np.ndarray, r_common: np.ndarray,
                tol: float = 1e-6) -> bool:
    m = feasibility_margins(sample, beams, r_common)
    return (m["power"] >= -tol and np.all(m["qos"] >= -tol)
            and m["common"] >= -tol and m["r_common"] >= -tol)
