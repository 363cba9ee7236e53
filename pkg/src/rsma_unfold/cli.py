"""Command-line entry point: dataset generation, training, evaluation,
OOD sweeps, runtime benchmarking and PGD oracle labeling.

dBm values are accepted only here and converted to watts once; manifests
and files store watts.  Exit codes: 0 success, 1 validation error,
2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import dataio
from .evaluate import (dbm_to_watt, evaluate, ood_sweep, pgd_reference,
                       runtime_bench, watt_to_dbm)
from .model import SampleLabel
from .pgd import PgdConfig, pgd_solve
from .projection import ProjectionError
from .training import TrainConfig, train
from .unfold import init_state


def _add_gen_args(p, include_samples=True):
    p.add_argument("--users", type=int, default=3)
    p.add_argument("--antennas", type=int, default=12)
    if include_samples:
        p.add_argument("--samples", type=int, default=300)
    p.add_argument("--snr-db", type=float, default=15.0)
    p.add_argument("--p-max-dbm", type=float, default=33.0)
    p.add_argument("--p-c-dbm", type=float, default=30.0)
    p.add_argument("--sigma2", type=float, default=1e-3)
    p.add_argument("--qos-shift", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsma-unfold",
        description="Deep-unfolded PGD beamforming for QoS-aware RSMA",
    )
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("RSMA_UNFOLD_THREADS", "0")),
                        help="cap internal parallelism (0 = library default)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate an unlabeled JSONL dataset")
    _add_gen_args(p)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train an unfolded model")
    p.add_argument("--data", required=True)
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch", type=int, default=200)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--lr-schedule", choices=["constant", "cosine"],
                   default="cosine")
    p.add_argument("--init-step", type=float, default=0.01)
    p.add_argument("--qos-margin", type=float, default=0.25,
                   help="SINR target inflation used only in the training loss")
    p.add_argument("--lambda", dest="penalty", type=float, default=2.0)
    p.add_argument("--grad-method", default="central_fd")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--reference", choices=["label", "pgd"], default="pgd")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("ood", help="out-of-distribution sweep")
    p.add_argument("--model", required=True)
    p.add_argument("--axis", choices=["snr_db", "p_max_dbm", "qos_shift"],
                   required=True)
    p.add_argument("--values", required=True,
                   help="comma-separated axis values")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=123)
    p.add_argument("--out", required=True, help="output directory")
    _add_gen_args(p, include_samples=False)

    p = sub.add_parser("bench", help="runtime benchmark DU vs PGD oracle")
    p.add_argument("--model", required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=99)
    p.add_argument("--out", required=True, help="output directory")
    _add_gen_args(p, include_samples=True)

    p = sub.add_parser("pgd-solve", help="label a dataset with the PGD oracle")
    p.add_argument("--data", required=True)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", required=True, help="output JSONL path")

    return parser


def _gen_kwargs(args) -> dict:
    return dict(users=args.users, antennas=args.antennas,
                snr_db=args.snr_db, p_max_w=dbm_to_watt(args.p_max_dbm),
                p_c_w=dbm_to_watt(args.p_c_dbm), sigma2=args.sigma2,
                qos_shift=args.qos_shift)


def _cmd_gen_data(args) -> int:
    kw = _gen_kwargs(args)
    dataio.write_manifest(args.out, "gen-data",
                          {**kw, "samples": args.samples}, args.seed,
                          inputs=[], outputs=[args.out])
    samples = dataio.generate_dataset(n=args.samples, seed=args.seed, **kw)
    dataio.write_dataset(args.out, samples)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _cmd_train(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch, lr=args.lr,
                      lr_schedule=args.lr_schedule, init_step=args.init_step,
                      qos_margin=args.qos_margin,
                      seed=args.seed, n_layers=args.layers,
                      penalty=args.penalty, grad_method=args.grad_method)
    from dataclasses import asdict
    dataio.write_manifest(args.out + os.sep, "train", asdict(cfg),
                          args.seed, inputs=[args.data],
                          outputs=[os.path.join(args.out, "checkpoint.json")])
    dataset = dataio.read_dataset(args.data)
    model, history = train(dataset, cfg, progress=True)
    ckpt = os.path.join(args.out, "checkpoint.json")
    dataio.save_checkpoint(ckpt, model, train_config={
        "epochs": cfg.epochs, "batch_size": cfg.batch_size, "lr": cfg.lr,
        "seed": cfg.seed, "grad_method": cfg.grad_method,
        "data": os.path.abspath(args.data),
    })
    dataio.write_history(os.path.join(args.out, "history.csv"), history)
    print(f"checkpoint written to {ckpt}")
    return 0


def _cmd_eval(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    dataio.write_manifest(args.out + os.sep, "eval",
                          {"reference": args.reference}, 0,
                          inputs=[args.data, args.model], outputs=[args.out])
    model, _ = dataio.load_checkpoint(args.model)
    samples = dataio.read_dataset(args.data)
    report = evaluate(model, samples, reference=args.reference)
    out_json = os.path.join(args.out, "metrics.json")
    with open(out_json, "w") as f:
        json.dump(report.to_dict(), f, indent=1)
    with open(os.path.join(args.out, "metrics.csv"), "w", newline="") as f:
        w = csv.writer(f)
        rows = report.to_dict()
        w.writerow(rows.keys())
        w.writerow([rows[k] if not isinstance(rows[k], list) else
                    ";".join(f"{x:.6g}" for x in rows[k]) for k in rows])
    print(json.dumps(report.to_dict(), indent=1))
    return 0


def _cmd_ood(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ValueError("--values must contain at least one number")
    dataio.write_manifest(args.out + os.sep, "ood",
                          {"axis": args.axis, "values": values},
                          args.seed, inputs=[args.model], outputs=[args.out])
    model, _ = dataio.load_checkpoint(args.model)
    base = _gen_kwargs(args)
    rows = ood_sweep(model, args.axis, values, base,
                     n_samples=args.samples, seed=args.seed)
    path = os.path.join(args.out, f"ood_{args.axis}.csv")
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["axis", "value", "asr",
                                          "violation_rate"])
        w.writeheader()
        w.writerows(rows)
    print(f"sweep written to {path}")
    return 0


def _cmd_bench(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    dataio.write_manifest(args.out + os.sep, "bench",
                          {"trials": args.trials}, args.seed,
                          inputs=[args.model], outputs=[args.out])
    model, _ = dataio.load_checkpoint(args.model)
    kw = _gen_kwargs(args)
    samples = dataio.generate_dataset(n=min(args.trials, 200),
                                      seed=args.seed, **kw)
    res = runtime_bench(model, samples, n_trials=args.trials)
    path = os.path.join(args.out, "latency.csv")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["solver", "trial", "seconds"])
        for i, t in enumerate(res["du"]):
            w.writerow(["du", i, f"{t:.9f}"])
        for i, t in enumerate(res["pgd"]):
            w.writerow(["pgd", i, f"{t:.9f}"])
    summary = {k: res[k] for k in ("du_median", "pgd_median",
                                   "du_variance", "pgd_variance")}
    with open(os.path.join(args.out, "latency_summary.json"), "w") as f:
        json.dump(summary, f, indent=1)
    print(json.dumps(summary, indent=1))
    return 0


def _cmd_pgd_solve(args) -> int:
    dataio.write_manifest(args.out, "pgd-solve",
                          {"max_iters": args.max_iters, "tol": args.tol}, 0,
                          inputs=[args.data], outputs=[args.out])
    samples = dataio.read_dataset(args.data)
    labeled = []
    for s in samples:
        cfg = PgdConfig(penalty=2.0 * float(np.max(s.config.weights)),
                        max_iters=args.max_iters, tol=args.tol,
                        backtracking=True)
        best, _ = pgd_solve(s, cfg, init_state(s))
        from .model import wsr
        labeled.append(s.with_label(SampleLabel(wsr_opt=wsr(s, best),
                                                beamformers=best)))
    dataio.write_dataset(args.out, labeled)
    print(f"labeled {len(labeled)} samples -> {args.out}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "ood": _cmd_ood,
    "bench": _cmd_bench,
    "pgd-solve": _cmd_pgd_solve,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ProjectionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
