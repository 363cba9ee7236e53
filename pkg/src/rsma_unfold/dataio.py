"""File formats: JSONL datasets, JSON model checkpoints, CSV history and
run manifests.

Dataset lines carry {"users", "antennas", "h_re", "h_im", "alpha", "r",
"sigma2", "p_max_w", "p_c_w"} plus optional label fields {"wsr_opt",
"v_re", "v_im", "r_common"}.  Beamformer arrays are (U+1) x M with row 0
the common beam and rows 1..U the private beams.
"""
from __future__ import annotations

import csv
import datetime
import json
import os
from typing import Iterable, Optional

import numpy as np

from .model import BeamState, ChannelSample, SampleLabel, ScenarioConfig
from .unfold import LayerParams, ModelParams

CHECKPOINT_VERSION = 1


def sample_to_record(sample: ChannelSample) -> dict:
    cfg = sample.config
    rec = {
        "users": cfg.num_users,
        "antennas": cfg.num_antennas,
        "h_re": sample.channels.real.tolist(),
        "h_im": sample.channels.imag.tolist(),
        "alpha": cfg.weights.tolist(),
        "r": cfg.qos_sinr.tolist(),
        "sigma2": cfg.noise_var,
        "p_max_w": cfg.p_max,
        "p_c_w": cfg.p_c,
    }
    if sample.label is not None:
        rec["wsr_opt"] = sample.label.wsr_opt
        if sample.label.beamformers is not None:
            st = sample.label.beamformers
            v = np.vstack([st.v0[None, :], st.v_k])
            rec["v_re"] = v.real.tolist()
            rec["v_im"] = v.imag.tolist()
            rec["r_common"] = st.r_common.tolist()
    return rec


def record_to_sample(rec: dict, channel_snr_db: float = 15.0) -> ChannelSample:
    cfg = ScenarioConfig(
        num_users=int(rec["users"]),
        num_antennas=int(rec["antennas"]),
        p_max=float(rec["p_max_w"]),
        p_c=float(rec["p_c_w"]),
        noise_var=float(rec["sigma2"]),
        weights=np.array(rec["alpha"], dtype=float),
        qos_sinr=np.array(rec["r"], dtype=float),
        channel_snr_db=channel_snr_db,
    )
    h = np.array(rec["h_re"], dtype=float) + 1j * np.array(rec["h_im"], dtype=float)
    label = None
    if "wsr_opt" in rec and rec["wsr_opt"] is not None:
        beams = None
        if "v_re" in rec and rec["v_re"] is not None:
            v = np.array(rec["v_re"]) + 1j * np.array(rec["v_im"])
            beams = BeamState(v0=v[0], v_k=v[1:],
                              r_common=np.array(rec.get("r_common",
                                                        [0.0] * cfg.num_users)))
        label = SampleLabel(wsr_opt=float(rec["wsr_opt"]), beamformers=beams)
    return ChannelSample(channels=h, config=cfg, label=label)


def write_dataset(path: str, samples: Iterable[ChannelSample]) -> None:
    with open(path, "w") as f:
        for s in samples:
            f.write(json.dumps(sample_to_record(s)) + "\n")


def read_dataset(path: str) -> list[ChannelSample]:
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(record_to_sample(json.loads(line)))
    return out


def generate_dataset(n: int, users: int, antennas: int, snr_db: float,
                     p_max_w: float, p_c_w: float, sigma2: float,
                     seed: int, qos_shift: float = 0.0) -> list[ChannelSample]:
    """Random-scenario dataset: per-sample weights uniform(0,1] normalized
    to sum 1 and SINR floors drawn from |N(0,1)| (plus an optional shift)."""
    from .model import generate_channels

    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n):
        alpha = rng.uniform(np.finfo(float).tiny, 1.0, size=users)
        alpha = alpha / alpha.sum()
        r = np.abs(rng.standard_normal(users)) + qos_shift
        cfg = ScenarioConfig(
            num_users=users, num_antennas=antennas,
            p_max=p_max_w, p_c=p_c_w, noise_var=sigma2,
            weights=alpha, qos_sinr=r, channel_snr_db=snr_db,
        )
        samples.append(generate_channels(cfg, seed=int(rng.integers(0, 2 ** 62))))
    return samples


def save_checkpoint(path: str, model: ModelParams,
                    train_config: Optional[dict] = None) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "U": model.num_users,
        "M": model.num_antennas,
        "N": model.num_layers,
        "lambda": model.penalty,
        "layers": [
            {"w0": l.w0.tolist(), "w_k": l.w_k.tolist(),
             "eta_k": l.eta_k.tolist()}
            for l in model.layers
        ],
        "train_config": train_config or {},
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)


def load_checkpoint(path: str) -> tuple[ModelParams, dict]:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {doc.get('version')}")
    layers = tuple(
        LayerParams(w0=np.array(l["w0"]), w_k=np.array(l["w_k"]),
                    eta_k=np.array(l["eta_k"]))
        for l in doc["layers"]
    )
    model = ModelParams(layers=layers, penalty=float(doc["lambda"]),
                        num_users=int(doc["U"]), num_antennas=int(doc["M"]))
    return model, doc.get("train_config", {})


HISTORY_COLUMNS = ["epoch", "loss", "twsr", "lwsr", "tpfv", "lpfv",
                   "train_asr", "train_violation_rate"]


def write_history(path: str, history: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=HISTORY_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for row in history:
            w.writerow(row)


def write_manifest(out_path: str, command: str, config: dict, seed: int,
                   inputs: list[str], outputs: list[str]) -> str:
    """Write the run manifest next to (or inside) the output path.

    Written before any computation so a crashed run still records intent.
    """
    if os.path.isdir(out_path) or out_path.endswith(os.sep):
        os.makedirs(out_path, exist_ok=True)
        manifest_path = os.path.join(out_path, "manifest.json")
    else:
        parent = os.path.dirname(os.path.abspath(out_path))
        os.makedirs(parent, exist_ok=True)
        manifest_path = out_path + ".manifest.json"
    from . import __version__
    doc = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
        "code_version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    with open(manifest_path, "w") as f:
        json.dump(doc, f, indent=1)
    return manifest_path
